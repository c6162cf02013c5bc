from ._util import ImbalancedYieldError, LabelRangeError, CsvFormatError, \
	DimensionError, DivergenceError, ExperimentError
from ._dataset import Sample, Dataset, dataset, SplitSpec, split, SynthConfig, \
	generate_synthetic, load_csv, save_csv
from ._binning import BinSpec, bin_edges, bin_index, bin_indices, BinCounts, count_bins, \
	imbalance_ratio, Region, RegionThresholds, REGION_PRESETS, region_thresholds, \
	RegionPartition, partition_regions, region_counts
from ._reweight import Scheme, parse_schemes, FocalConfig, KernelConfig, kernel_window, \
	smoothed_counts, WeightVector, weight_vector, uniform_weights, lds_weights, \
	focal_weights, combine_weights, weighted_loss
from ._model import MlpConfig, TrainedModel, trained_model, loss_gradient, train, \
	predict, predict_many, save_model, load_model
from ._metrics import mae, rmse, gmean, pearson, RegionMetrics, RegionReport, region_report, \
	report_to_json, report_from_json, format_region_report, average_region_ranking
from ._harness import ExperimentConfig, load_experiment_config, ComparisonReport, \
	run_experiment, emit_report, comparison_to_json, comparison_from_json
from ._version import __version__
