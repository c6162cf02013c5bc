from imbalanced_yield import \
	ExperimentConfig, load_experiment_config, ComparisonReport, run_experiment, emit_report, \
	comparison_to_json, comparison_from_json, Scheme, SynthConfig, MlpConfig, \
	RegionThresholds, ExperimentError, dataset, generate_synthetic, save_csv
from imbalanced_yield._harness import experiment_config, relative_change, summarize, \
	render_report, RELATIVE_NOTE, REPORT_FORMATS, ReportFormat

import hypothesis
from hypothesis import given, strategies as st
from pyrsistent import InvariantException
from typing_extensions import get_args

import json
import numpy as np
import pandas as pd
import io
import pytest

def small_config(**kwargs):
	base = dict(
		synth=SynthConfig(n=300, dim=3, seed=1),
		schemes=['vanilla', 'focal', 'lds'],
		model=MlpConfig(hidden_sizes=[8], epochs=3),
		regions='az',
		repetitions=2,
		seed=5)
	base.update(kwargs)
	return ExperimentConfig(**base)

@pytest.fixture(scope='module')
def small_report():
	return run_experiment(small_config())

def test_config_defaults():
	cfg = ExperimentConfig()
	assert cfg.repetitions == 10
	assert cfg.schemes == tuple(Scheme)
	assert cfg.regions == RegionThresholds(lower=25, upper=50)
	assert cfg.data_path is None and cfg.n_jobs == 1
	for kwargs in [dict(repetitions=0), dict(n_jobs=0), dict(seed=-1)]:
		with pytest.raises(InvariantException):
			ExperimentConfig(**kwargs)
	with pytest.raises(ValueError):
		ExperimentConfig(schemes=[])

def test_experiment_config():
	cfg = experiment_config({
		'data': {'n': 400, 'skew': 2.0},
		'split': {'train_fraction': 0.8},
		'bins': {'width': 2},
		'regions': {'lower': 3, 'upper': 5},
		'schemes': ['lds', 'vanilla'],
		'focal': {'gamma': 2},
		'kernel': {'ell': 7, 'sigma': 1.5, 'kernel': 'laplace'},
		'model': {'hidden_sizes': [4], 'epochs': 2},
		'repetitions': 3,
		'seed': 11,
		'n_jobs': 2,
	})
	assert cfg.synth == SynthConfig(n=400, skew=2.0)
	assert cfg.split.train_fraction == 0.8
	assert cfg.bins.count == 50
	assert cfg.regions == RegionThresholds(lower=3, upper=5)
	assert cfg.schemes == (Scheme.LDS, Scheme.VANILLA)
	assert cfg.focal.gamma == 2.0
	assert cfg.kernel.kernel == 'laplace'
	assert cfg.model.hidden_sizes == (4,)
	assert (cfg.repetitions, cfg.seed, cfg.n_jobs) == (3, 11, 2)
	assert experiment_config({'data': {'path': 'a.csv'}}).data_path == 'a.csv'

@pytest.mark.parametrize('payload', [
	{'epochs': 3},
	{'model': {'layers': 3}},
	{'data': {'path': 'a.csv', 'n': 10}},
	{'kernel': 'gaussian'},
	{'regions': 'nope'},
	{'schemes': ['vanilla', 'magic']},
])
def test_experiment_config_errors(payload):
	with pytest.raises((ValueError, TypeError, InvariantException)):
		experiment_config(payload)

def test_load_experiment_config(tmp_path):
	(tmp_path / 'exp.toml').write_text('\n'.join([
		'repetitions = 2',
		'schemes = ["vanilla", "focal+lds"]',
		'regions = "sm"',
		'[data]',
		'path = "data.csv"',
		'[model]',
		'hidden_sizes = [4, 4]',
		'epochs = 5',
	]))
	cfg = load_experiment_config(tmp_path / 'exp.toml')
	assert cfg.repetitions == 2
	assert cfg.schemes == (Scheme.VANILLA, Scheme.FOCAL_LDS)
	assert cfg.regions == RegionThresholds(lower=20, upper=65)
	assert cfg.data_path == str(tmp_path / 'data.csv')
	assert cfg.model.hidden_sizes == (4, 4)
	(tmp_path / 'exp.json').write_text(json.dumps({'seed': 3, 'data': {'n': 50}}))
	cfg = load_experiment_config(tmp_path / 'exp.json')
	assert cfg.seed == 3 and cfg.synth.n == 50
	(tmp_path / 'exp.yaml').write_text('seed: 3')
	with pytest.raises(ValueError):
		load_experiment_config(tmp_path / 'exp.yaml')
	with pytest.raises(OSError):
		load_experiment_config(tmp_path / 'missing.json')

def test_summarize():
	assert summarize([]).mean is None
	assert summarize([None, None]).n == 0
	one = summarize([2.5])
	assert (one.mean, one.std, one.n) == (2.5, 0.0, 1)
	many = summarize([1.0, 2.0, 3.0, None])
	assert (many.mean, many.std, many.n) == (2.0, 1.0, 3)

@given(st.floats(0.01, 100), st.floats(0.01, 100))
def test_relative_change(value, baseline):
	change = relative_change(value, baseline)
	assert change == pytest.approx((value - baseline) / baseline * 100)
	assert (change < 0) == (value < baseline)
	assert relative_change(None, baseline) is None
	assert relative_change(value, None) is None

def test_run_experiment(small_report):
	report = small_report
	assert report.schemes == ('vanilla', 'focal', 'lds')
	assert report.repetitions == 2
	assert set(report.relative_change) == {'focal', 'lds'}
	assert set(report.relative_change['lds']) == {'all', 'few'}
	assert report.region_ranking is not None
	for scheme in report.schemes:
		runs = report.runs[scheme]
		assert len(runs) == 2
		summary = report.summary[scheme]
		assert summary['all'].mae.n == 2
		assert summary['all'].mae.mean == pytest.approx(np.mean([r.all.mae for r in runs]))
		assert summary['all'].mae.std == pytest.approx(np.std([r.all.mae for r in runs], ddof=1))
	vanilla = report.summary['vanilla']['few'].mae.mean
	lds = report.summary['lds']['few'].mae.mean
	if vanilla is not None and lds is not None:
		assert report.relative_change['lds']['few']['mae'] == pytest.approx((lds - vanilla) / vanilla * 100)

def test_identical_splits(small_report):
	for repetition in range(2):
		reports = [small_report.runs[s][repetition] for s in small_report.schemes]
		bins = [[(b.bin, b.count) for b in r.per_bin_errors] for r in reports]
		assert all(b == bins[0] for b in bins)
		assert len({(r.many.count, r.medium.count, r.few.count) for r in reports}) == 1

def test_deterministic(small_report):
	assert run_experiment(small_config()) == small_report
	assert comparison_to_json(run_experiment(small_config())) == comparison_to_json(small_report)

def test_single_scheme():
	report = run_experiment(small_config(schemes=['vanilla'], repetitions=1))
	assert report.schemes == ('vanilla',)
	assert not report.relative_change
	assert report.region_ranking is None
	assert report.summary['vanilla']['all'].mae.std == 0.0
	assert RELATIVE_NOTE not in render_report(report, 'table')

def test_focal_gamma_zero_matches_vanilla():
	cfg = small_config(schemes=['vanilla', 'focal'], focal={'gamma': 0.0})
	report = run_experiment(cfg)
	for vanilla, focal in zip(report.runs['vanilla'], report.runs['focal']):
		for region in ['all', 'many', 'medium', 'few']:
			a, b = vanilla.region(region), focal.region(region)
			assert a.count == b.count
			if a.count:
				assert abs(a.mae - b.mae) < 1e-9
				assert abs(a.rmse - b.rmse) < 1e-9
				assert abs(a.gmean - b.gmean) < 1e-9

def test_no_vanilla():
	report = run_experiment(small_config(schemes=['lds', 'focal'], repetitions=1))
	assert not report.relative_change
	assert report.region_ranking is not None
	with pytest.raises(InvariantException):
		report.set(relative_change={'lds': {}})

def test_parallel_matches_serial(small_report):
	assert run_experiment(small_config(n_jobs=2)) == small_report

def test_csv_source(tmp_path):
	data = generate_synthetic(SynthConfig(n=200, dim=2, seed=3))
	save_csv(data, tmp_path / 'data.csv')
	from_file = run_experiment(small_config(data_path=str(tmp_path / 'data.csv'), repetitions=1))
	in_memory = run_experiment(small_config(repetitions=1), data=data)
	assert from_file == in_memory

def test_experiment_errors():
	tiny = dataset([[0.0]], [1.0])
	with pytest.raises(ExperimentError) as info:
		run_experiment(small_config(), data=tiny)
	assert info.value.scheme is None and info.value.repetition == 0
	cfg = small_config(model=MlpConfig(hidden_sizes=[8], epochs=20, learning_rate=1e308))
	with np.errstate(all='ignore'):
		with pytest.raises(ExperimentError) as info:
			run_experiment(cfg)
	assert info.value.scheme == 'vanilla'
	assert info.value.repetition == 0
	assert 'scheme=vanilla repetition=0' in str(info.value)

def test_report_json(small_report):
	text = comparison_to_json(small_report)
	assert comparison_from_json(text) == small_report
	assert comparison_to_json(comparison_from_json(text)) == text

def test_report_table(small_report):
	text = render_report(small_report, 'table')
	for column in ['MAE', 'RMSE', 'G-Mean', 'All', 'Few', 'Many', 'Med.']:
		assert column in text
	for row in ['Vanilla', '+Focal', '+LDS', 'Pearson r', 'Avg. Ranking']:
		assert row in text
	assert RELATIVE_NOTE in text

def test_report_csv(small_report):
	frame = pd.read_csv(io.StringIO(render_report(small_report, 'csv')))
	assert len(frame) == len(small_report.schemes) * 4
	assert list(frame['region'][:4]) == ['all', 'many', 'medium', 'few']
	assert 'mae_mean' in frame.columns and 'gmean_std' in frame.columns
	with pytest.raises(ValueError):
		render_report(small_report, 'xml')

def test_report_formats(small_report):
	assert REPORT_FORMATS == get_args(ReportFormat) == ('table', 'json', 'csv')
	for fmt in REPORT_FORMATS:
		assert render_report(small_report, fmt)

def test_emit_report(tmp_path, small_report, capsys):
	path = tmp_path / 'report.json'
	text = emit_report(small_report, 'json', path)
	assert path.read_text(encoding='utf-8') == text
	emit_report(small_report, 'csv')
	assert capsys.readouterr().out == render_report(small_report, 'csv')
	with pytest.raises(OSError):
		emit_report(small_report, 'json', tmp_path / 'missing' / 'report.json')

@pytest.fixture(scope='module')
def skewed_report():
	cfg = ExperimentConfig(synth=SynthConfig(n=5000, dim=8, skew=3.0, noise_sd=5.0, seed=0),
		schemes=['vanilla', 'lds'], repetitions=10, seed=0)
	return run_experiment(cfg)

@pytest.mark.slow
def test_imbalance_effect(skewed_report):
	runs = skewed_report.runs['vanilla']
	assert sum(r.few.mae is not None and r.few.mae > r.many.mae for r in runs) >= 8
	assert sum(r.pearson_r is not None and r.pearson_r < 0 for r in runs) >= 8

@pytest.mark.slow
def test_reweighting_trade_off(skewed_report):
	change = skewed_report.relative_change['lds']
	few, overall = change['few']['mae'], change['all']['mae']
	assert few < 0
	assert -few > overall
