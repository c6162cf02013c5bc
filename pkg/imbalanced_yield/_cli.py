from __future__ import annotations
from typing import Any, Mapping, Optional, Sequence, Tuple
from typing_extensions import NoReturn

import argparse
import io
import json
import logging
import math
import os
import sys

import numpy as np
import pandas as pd
from pyrsistent import InvariantException, PTypeError

from ._binning import BinSpec, REGION_PRESETS, RegionThresholds, bin_edges, bin_indices, \
	count_bins, imbalance_ratio, partition_regions, region_counts, region_thresholds
from ._dataset import SynthConfig, generate_synthetic, load_csv, save_csv
from ._harness import REPORT_FORMATS, ReportFormat, emit_report, load_experiment_config, \
	render_report, run_experiment
from ._metrics import REPORT_REGIONS, METRICS, format_region_report, region_report, report_to_json
from ._model import MlpConfig, load_model, predict_many, save_model, train
from ._reweight import EDGES, KERNELS, FocalConfig, KernelConfig, Scheme, lds_weights
from ._util import ImbalancedYieldError
from ._version import __version__

logger = logging.getLogger(__name__)

LOG_LEVEL_ENV: str = 'IMBALANCED_YIELD_LOG_LEVEL'
LOG_FORMAT: str = '%(asctime)s %(levelname)s %(name)s: %(message)s'

def _jsonable(value:Any) -> Any:
	if isinstance(value, np.generic):
		return value.item()
	raise TypeError('not serializable: {!r}'.format(value))

def _dumps(payload:Any) -> str:
	return json.dumps(payload, sort_keys=True, indent=2, default=_jsonable) + '\n'

def _report_error(kind:str, message:str) -> None:
	sys.stderr.write(json.dumps({'error': kind, 'message': message}, sort_keys=True) + '\n')

class JsonErrorParser(argparse.ArgumentParser):
	r'''
	Argument parser whose usage errors are one JSON line on stderr

	Exits with status 2, as argparse does.
	'''

	def error(self, message:str) -> NoReturn:
		_report_error('UsageError', '{}: {}'.format(self.prog, message))
		self.exit(2)

def render_rows(frame:pd.DataFrame, summary:Mapping[str, Any], fmt:ReportFormat) -> str:
	r'''
	Render a per-row table and its summary fields in one of the report formats

	>>> frame = pd.DataFrame({'bin': [0, 1], 'count': [3, 0]})
	>>> print(render_rows(frame, {'total': 3}, 'csv'), end='')
	bin,count
	0,3
	1,0
	'''
	if fmt == 'json':
		return _dumps({**summary, 'rows': frame.to_dict(orient='records')})
	if fmt == 'csv':
		buffer = io.StringIO()
		frame.to_csv(buffer, index=False, float_format='%.17g', lineterminator='\n')
		return buffer.getvalue()
	lines = [frame.to_string(index=False), '']
	lines += ['{}: {}'.format(key, summary[key]) for key in summary]
	return '\n'.join(lines) + '\n'

def _thresholds(args:argparse.Namespace) -> RegionThresholds:
	if args.lower is not None or args.upper is not None:
		if args.lower is None or args.upper is None:
			raise ValueError('--lower and --upper must be given together')
		return region_thresholds({'lower': args.lower, 'upper': args.upper})
	return region_thresholds(args.preset)

def _bin_spec(args:argparse.Namespace) -> BinSpec:
	return BinSpec(width=args.width)

def _kernel(args:argparse.Namespace) -> KernelConfig:
	return KernelConfig(ell=args.ell, sigma=args.sigma, kernel=args.kernel, edge=args.edge)

def _seed(args:argparse.Namespace, default:int=0) -> int:
	return default if args.seed is None else args.seed

def cmd_synth(args:argparse.Namespace) -> str:
	cfg = SynthConfig(n=args.n, dim=args.dim, skew=args.skew,
		noise_sd=args.noise_sd, seed=_seed(args))
	data = generate_synthetic(cfg)
	save_csv(data, args.output)
	return ''

def cmd_bins(args:argparse.Namespace) -> str:
	data = load_csv(args.csv)
	spec = _bin_spec(args)
	th = _thresholds(args)
	counts = count_bins(data, spec)
	partition = partition_regions(counts, th)
	edges = bin_edges(spec)
	frame = pd.DataFrame({
		'bin': np.arange(spec.count),
		'lo': edges[:-1],
		'hi': edges[1:],
		'count': counts.asarray(),
		'region': [r.value for r in partition.regions],
	})
	ratio = imbalance_ratio(counts)
	totals = region_counts(partition, counts)
	summary = {
		'samples': counts.total,
		'imbalance_ratio': 'inf' if math.isinf(ratio) else ratio,
		'empty_bins': int(np.sum(counts.asarray() == 0)),
		'lower': th.lower,
		'upper': th.upper,
	}
	for region, (bins, samples) in sorted(totals.items(), key=lambda item: item[0].value):
		summary['{}_bins'.format(region.value)] = bins
		summary['{}_samples'.format(region.value)] = samples
	return render_rows(frame, summary, args.format)

def cmd_weights(args:argparse.Namespace) -> str:
	data = load_csv(args.csv)
	spec = _bin_spec(args)
	weights = lds_weights(data, spec, _kernel(args)).values
	occupied, first, counts = np.unique(bin_indices(data.labels, spec),
		return_index=True, return_counts=True)
	frame = pd.DataFrame({'bin': occupied, 'count': counts, 'weight': weights[first]})
	summary = {
		'samples': len(data),
		'min': float(weights.min()),
		'max': float(weights.max()),
		'mean': float(weights.mean()),
		'ratio': float(weights.max() / weights.min()),
	}
	return render_rows(frame, summary, args.format)

def _mlp_config(args:argparse.Namespace) -> MlpConfig:
	hidden = [int(x) for x in args.hidden.split(',') if x.strip()] if args.hidden else []
	return MlpConfig(hidden_sizes=hidden, epochs=args.epochs, batch_size=args.batch_size,
		learning_rate=args.lr, seed=_seed(args), output_clamp=not args.no_clamp)

def cmd_train(args:argparse.Namespace) -> str:
	data = load_csv(args.csv)
	model = train(data, Scheme(args.scheme), _mlp_config(args), _bin_spec(args),
		_kernel(args), FocalConfig(alpha=args.alpha, gamma=args.gamma))
	save_model(model, args.output)
	frame = pd.DataFrame({'epoch': np.arange(1, len(model.training_log) + 1),
		'loss': model.training_log})
	summary = {
		'scheme': model.scheme.value,
		'samples': len(data),
		'dim': model.dim,
		'epochs': len(model.training_log),
		'final_loss': model.training_log[-1],
		'model': os.fspath(args.output),
	}
	if args.format == 'table':
		return '\n'.join('{}: {}'.format(key, summary[key]) for key in summary) + '\n'
	return render_rows(frame, summary, args.format)

def cmd_eval(args:argparse.Namespace) -> str:
	test = load_csv(args.csv)
	model = load_model(args.model, dim=test.dim)
	train_data = load_csv(args.train)
	if train_data.dim != test.dim:
		raise ValueError('training data has dim={}, test data has dim={}'.format(
			train_data.dim, test.dim))
	spec = _bin_spec(args)
	counts = count_bins(train_data, spec)
	partition = partition_regions(counts, _thresholds(args))
	report = region_report(predict_many(model, test.features), test.labels,
		partition, spec, counts)
	if args.format == 'json':
		return report_to_json(report)
	if args.format == 'csv':
		frame = pd.DataFrame([{'region': r, 'count': report.region(r).count,
			**{m: report.region(r).metric(m) for m in METRICS}} for r in REPORT_REGIONS])
		return render_rows(frame, {}, 'csv')
	return format_region_report(report)

def cmd_bench(args:argparse.Namespace) -> str:
	cfg = load_experiment_config(args.config)
	if args.seed is not None:
		cfg = cfg.set(seed=args.seed)
	if args.repetitions is not None:
		cfg = cfg.set(repetitions=args.repetitions)
	if args.jobs is not None:
		cfg = cfg.set(n_jobs=args.jobs)
	report = run_experiment(cfg)
	if args.output is not None:
		emit_report(report, args.format, args.output)
		return ''
	return render_report(report, args.format)

def _add_bins(parser:argparse.ArgumentParser) -> None:
	parser.add_argument('--width', type=float, default=1.0, help='bin width in yield points')

def _add_regions(parser:argparse.ArgumentParser) -> None:
	parser.add_argument('--preset', choices=sorted(REGION_PRESETS), default='bh',
		help='named region thresholds')
	parser.add_argument('--lower', type=int, default=None, help='few-shot threshold')
	parser.add_argument('--upper', type=int, default=None, help='many-shot threshold')

def _add_kernel(parser:argparse.ArgumentParser) -> None:
	parser.add_argument('--ell', type=int, default=5, help='odd smoothing window size in bins')
	parser.add_argument('--sigma', type=float, default=2.0, help='kernel spread in bins')
	parser.add_argument('--kernel', choices=KERNELS, default='gaussian')
	parser.add_argument('--edge', choices=EDGES, default='truncate')

def build_parser() -> JsonErrorParser:
	parser = JsonErrorParser(prog='imbalanced-yield',
		description='Re-weighted regression on imbalanced yield data')
	parser.add_argument('--version', action='version', version=__version__)
	parser.add_argument('--seed', type=int, default=None, help='random seed')
	parser.add_argument('--format', choices=REPORT_FORMATS, default='table',
		help='output format')
	parser.add_argument('--log-level', default=os.environ.get(LOG_LEVEL_ENV, 'WARNING'),
		help='logging level, default from ${}'.format(LOG_LEVEL_ENV))
	commands = parser.add_subparsers(dest='command', metavar='command')
	commands.required = True

	synth = commands.add_parser('synth', help='write a synthetic skewed dataset')
	synth.add_argument('output', help='CSV path to write')
	synth.add_argument('--n', type=int, default=5000)
	synth.add_argument('--dim', type=int, default=8)
	synth.add_argument('--skew', type=float, default=3.0)
	synth.add_argument('--noise-sd', type=float, default=5.0)
	synth.set_defaults(handler=cmd_synth)

	bins = commands.add_parser('bins', help='bin counts, regions and imbalance ratio')
	bins.add_argument('csv')
	_add_bins(bins)
	_add_regions(bins)
	bins.set_defaults(handler=cmd_bins)

	weights = commands.add_parser('weights', help='label distribution smoothing weights')
	weights.add_argument('csv')
	_add_bins(weights)
	_add_kernel(weights)
	weights.set_defaults(handler=cmd_weights)

	fit = commands.add_parser('train', help='train one model and save it')
	fit.add_argument('csv')
	fit.add_argument('output', help='model path to write')
	fit.add_argument('--scheme', choices=[s.value for s in Scheme], default='vanilla')
	fit.add_argument('--hidden', default='64,64', help='comma separated hidden sizes')
	fit.add_argument('--epochs', type=int, default=200)
	fit.add_argument('--batch-size', type=int, default=32)
	fit.add_argument('--lr', type=float, default=1e-3)
	fit.add_argument('--alpha', type=float, default=0.2, help='focal alpha')
	fit.add_argument('--gamma', type=float, default=1.0, help='focal gamma')
	fit.add_argument('--no-clamp', action='store_true', help='do not clip predictions to [0, 100]')
	_add_bins(fit)
	_add_kernel(fit)
	fit.set_defaults(handler=cmd_train)

	evaluate = commands.add_parser('eval', help='evaluate a saved model per region')
	evaluate.add_argument('model')
	evaluate.add_argument('csv', help='test CSV')
	evaluate.add_argument('--train', required=True, help='training CSV defining the regions')
	_add_bins(evaluate)
	_add_regions(evaluate)
	evaluate.set_defaults(handler=cmd_eval)

	bench = commands.add_parser('bench', help='compare schemes from a JSON or TOML config')
	bench.add_argument('config')
	bench.add_argument('--output', default=None, help='report path, default stdout')
	bench.add_argument('--repetitions', type=int, default=None)
	bench.add_argument('--jobs', type=int, default=None)
	bench.set_defaults(handler=cmd_bench)
	return parser

def main(argv:Optional[Sequence[str]]=None) -> int:
	r'''
	Run the command line; returns the exit status

	Failures print one JSON line ``{"error": ..., "message": ...}`` to stderr.
	'''
	args = build_parser().parse_args(argv)
	try:
		logging.basicConfig(level=str(args.log_level).upper(), stream=sys.stderr, format=LOG_FORMAT)
		text = args.handler(args)
	except (ImbalancedYieldError, ValueError, OSError, InvariantException, PTypeError) as ex:
		logger.debug('command %s failed', args.command, exc_info=True)
		_report_error(type(ex).__name__, str(ex))
		return 1
	if text:
		sys.stdout.write(text)
	return 0

__all__: Tuple[str, ...] = ('LOG_LEVEL_ENV', 'JsonErrorParser', 'render_rows', 'build_parser', 'main')
