from __future__ import annotations
from typing import Any, Dict, Iterable, Mapping, Optional, Sequence, Tuple, Type, Union
from typing_extensions import Literal, get_args

import io
import json
import logging
import os
import sys

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pyrsistent import InvariantException, PClass, field, pmap
from pyrsistent.typing import PMap

from ._binning import BinSpec, RegionThresholds, count_bins, partition_regions, region_thresholds
from ._dataset import Dataset, SplitSpec, SynthConfig, UINT64_MAX, generate_synthetic, load_csv, split
from ._metrics import METRICS, METRIC_TITLES, REGION_TITLES, REPORT_REGIONS, RegionReport, \
	average_region_ranking, region_report, report_from_dict, report_to_dict
from ._model import MlpConfig, predict_many, train
from ._reweight import FocalConfig, KernelConfig, Scheme, parse_schemes
from ._util import ExperimentError

if sys.version_info >= (3, 11):
	import tomllib
else:
	import tomli as tomllib

logger = logging.getLogger(__name__)

ReportFormat = Literal['table', 'json', 'csv']
REPORT_FORMATS: Tuple[str, ...] = get_args(ReportFormat)
RELATIVE_REGIONS: Tuple[str, ...] = ('all', 'few')
RELATIVE_NOTE: str = 'relative change (%) vs vanilla: negative = lower error = improvement'

def _section(cls:Type[PClass]):
	def factory(value:Any) -> PClass:
		if isinstance(value, cls):
			return value
		if not isinstance(value, Mapping):
			raise TypeError('{} section must be a table, got {!r}'.format(cls.__name__, value))
		unknown = sorted(set(value) - set(cls._pclass_fields))
		if unknown:
			raise ValueError('unknown {} keys: {}'.format(cls.__name__, ', '.join(unknown)))
		return cls.create(dict(value))
	return factory

class ExperimentConfig(PClass):
	r'''
	Everything that determines a comparison run

	The dataset is read from ``data_path`` when set and synthesized from
	``synth`` otherwise. Repetition ``r`` uses seed ``seed + r`` for both
	the split and the model initialization; the seeds inside ``split`` and
	``model`` are overridden.

	>>> cfg = ExperimentConfig(schemes=['vanilla', 'lds', 'vanilla'], regions='sm')
	>>> [s.value for s in cfg.schemes], cfg.regions
	(['vanilla', 'lds'], RegionThresholds(lower=20, upper=65))
	'''
	data_path = field(type=(str, type(None)), initial=None)
	synth = field(type=SynthConfig, initial=SynthConfig(), factory=_section(SynthConfig))
	split = field(type=SplitSpec, initial=SplitSpec(), factory=_section(SplitSpec))
	bins = field(type=BinSpec, initial=BinSpec(), factory=_section(BinSpec))
	regions = field(type=RegionThresholds, initial=region_thresholds('bh'),
		factory=region_thresholds)
	schemes = field(type=tuple, initial=tuple(Scheme), factory=parse_schemes)
	focal = field(type=FocalConfig, initial=FocalConfig(), factory=_section(FocalConfig))
	kernel = field(type=KernelConfig, initial=KernelConfig(), factory=_section(KernelConfig))
	model = field(type=MlpConfig, initial=MlpConfig(), factory=_section(MlpConfig))
	repetitions = field(type=int, initial=10, factory=int,
		invariant=lambda n: (n >= 1, 'repetitions must be positive'))
	seed = field(type=int, initial=0, factory=int,
		invariant=lambda s: (0 <= s <= UINT64_MAX, 'seed must be a 64-bit unsigned integer'))
	n_jobs = field(type=int, initial=1, factory=int,
		invariant=lambda n: (n != 0, 'n_jobs must be non-zero'))

_CONFIG_KEYS = frozenset(('data', 'split', 'bins', 'regions', 'schemes', 'focal',
	'kernel', 'model', 'repetitions', 'seed', 'n_jobs'))

def experiment_config(payload:Mapping[str, Any]) -> ExperimentConfig:
	r'''
	Build a config from the nested layout of a config file

	``data`` holds either ``path`` or the synthetic generator settings.

	>>> experiment_config({'data': {'n': 200, 'skew': 2}, 'repetitions': 2}).synth.n
	200
	>>> experiment_config({'epochs': 3})
	Traceback (most recent call last):
	...
	ValueError: unknown config keys: epochs
	'''
	unknown = sorted(set(payload) - _CONFIG_KEYS)
	if unknown:
		raise ValueError('unknown config keys: ' + ', '.join(unknown))
	kwargs = {key: value for key, value in payload.items() if key != 'data'}
	data = dict(payload.get('data', {}))
	path = data.pop('path', None)
	if path is not None:
		if data:
			raise ValueError('data.path excludes synthetic settings: ' + ', '.join(sorted(data)))
		kwargs['data_path'] = str(path)
	elif data:
		kwargs['synth'] = data
	return ExperimentConfig.create(kwargs)

def load_experiment_config(path:Union[str, os.PathLike]) -> ExperimentConfig:
	r'''
	Read an :class:`ExperimentConfig` from a ``.json`` or ``.toml`` file

	A relative ``data.path`` is resolved against the config file's directory.
	'''
	path = os.fspath(path)
	if path.endswith('.toml'):
		with open(path, 'rb') as handle:
			payload = tomllib.load(handle)
	elif path.endswith('.json'):
		with open(path, 'r', encoding='utf-8') as handle:
			payload = json.load(handle)
	else:
		raise ValueError('config file must end in .json or .toml: ' + path)
	cfg = experiment_config(payload)
	if cfg.data_path is not None and not os.path.isabs(cfg.data_path):
		cfg = cfg.set(data_path=os.path.join(os.path.dirname(path), cfg.data_path))
	return cfg

def _optional_float(value:Any) -> Optional[float]:
	return None if value is None else float(value)

class MetricSummary(PClass):
	r'''
	Mean and standard deviation of a metric over the repetitions where it
	was defined; ``n`` counts those repetitions

	>>> summarize([1.0, None, 3.0])
	MetricSummary(mean=2.0, std=1.4142135623730951, n=2)
	'''
	mean = field(type=(float, type(None)), initial=None, factory=_optional_float)
	std = field(type=(float, type(None)), initial=None, factory=_optional_float)
	n = field(type=int, initial=0, factory=int)

def summarize(values:Iterable[Optional[float]]) -> MetricSummary:
	present = np.array([v for v in values if v is not None], dtype=np.float64)
	if present.shape[0] == 0:
		return MetricSummary()
	std = float(np.std(present, ddof=1)) if present.shape[0] > 1 else 0.0
	return MetricSummary(mean=float(np.mean(present)), std=std, n=present.shape[0])

class RegionSummary(PClass):
	count = field(type=float, initial=0.0, factory=float)
	mae = field(type=MetricSummary, initial=MetricSummary(), factory=_section(MetricSummary))
	rmse = field(type=MetricSummary, initial=MetricSummary(), factory=_section(MetricSummary))
	gmean = field(type=MetricSummary, initial=MetricSummary(), factory=_section(MetricSummary))

def _relative_invariant(report:ComparisonReport) -> Tuple[bool, str]:
	return not report.relative_change or Scheme.VANILLA.value in report.schemes, \
		'relative changes need a vanilla baseline'

class ComparisonReport(PClass):
	r'''
	Aggregated outcome of :func:`run_experiment`

	``summary[scheme][region]`` holds the metric statistics,
	``relative_change[scheme][region][metric]`` the percent change of the
	mean against vanilla for the All and Few regions, ``pearson[scheme]``
	the statistics of the per-bin correlation and ``runs[scheme]`` the
	individual reports in repetition order.
	'''
	schemes = field(type=tuple, mandatory=True, factory=lambda xs: tuple(Scheme(x).value for x in xs))
	repetitions = field(type=int, mandatory=True, factory=int)
	summary = field(mandatory=True)
	pearson = field(mandatory=True)
	relative_change = field(initial=pmap())
	region_ranking = field(initial=None)
	runs = field(mandatory=True)
	__invariant__ = _relative_invariant

def relative_change(value:Optional[float], baseline:Optional[float]) -> Optional[float]:
	r'''
	Percent change of ``value`` against ``baseline``

	>>> relative_change(9.0, 10.0)
	-10.0
	>>> relative_change(1.0, 0.0) is None
	True
	'''
	if value is None or baseline is None or baseline == 0.0:
		return None
	return (value - baseline) / baseline * 100.0

def aggregate(schemes:Sequence[Scheme], runs:Mapping[Scheme, Sequence[RegionReport]]) -> ComparisonReport:
	r'''
	Reduce per-repetition reports to a :class:`ComparisonReport`
	'''
	summary = {}
	for scheme in schemes:
		reports = runs[scheme]
		summary[scheme.value] = pmap({region: RegionSummary(
			count=np.mean([r.region(region).count for r in reports]),
			**{metric: summarize(r.region(region).metric(metric) for r in reports)
				for metric in METRICS}) for region in REPORT_REGIONS})
	relative = {}
	if Scheme.VANILLA in schemes:
		base = summary[Scheme.VANILLA.value]
		for scheme in schemes:
			if scheme is Scheme.VANILLA:
				continue
			rows = summary[scheme.value]
			relative[scheme.value] = pmap({region: pmap({
				metric: relative_change(getattr(rows[region], metric).mean,
					getattr(base[region], metric).mean) for metric in METRICS})
				for region in RELATIVE_REGIONS})
	ranking = average_region_ranking([{region: {metric: getattr(summary[s.value][region], metric).mean
		for metric in METRICS} for region in REPORT_REGIONS} for s in schemes])
	return ComparisonReport(
		schemes=schemes,
		repetitions=len(runs[schemes[0]]),
		summary=pmap(summary),
		pearson=pmap({s.value: summarize(r.pearson_r for r in runs[s]) for s in schemes}),
		relative_change=pmap(relative),
		region_ranking=ranking,
		runs=pmap({s.value: tuple(runs[s]) for s in schemes}))

def load_dataset(cfg:ExperimentConfig) -> Dataset:
	if cfg.data_path is not None:
		return load_csv(cfg.data_path)
	return generate_synthetic(cfg.synth)

def run_repetition(cfg:ExperimentConfig, data:Dataset, repetition:int) -> Tuple[int, Dict[Scheme, RegionReport]]:
	r'''
	Train and evaluate every scheme on the split of one repetition

	:raises ExperimentError: wrapping any failure with its scheme and repetition
	'''
	seed = cfg.seed + repetition
	try:
		train_set, test_set = split(data, cfg.split.set(seed=seed))
		counts = count_bins(train_set, cfg.bins)
		partition = partition_regions(counts, cfg.regions)
	except (ValueError, InvariantException) as ex:
		raise ExperimentError(None, repetition, str(ex)) from ex
	model_cfg = cfg.model.set(seed=seed)
	reports = {}
	for scheme in cfg.schemes:
		logger.info('repetition %d (seed %d): training %s', repetition, seed, scheme.value)
		try:
			model = train(train_set, scheme, model_cfg, cfg.bins, cfg.kernel, cfg.focal)
			preds = predict_many(model, test_set.features)
			reports[scheme] = region_report(preds, test_set.labels, partition, cfg.bins, counts)
		except (ValueError, InvariantException) as ex:
			raise ExperimentError(scheme.value, repetition, str(ex)) from ex
		logger.info('repetition %d: %s all MAE %.4f, few MAE %s', repetition, scheme.value,
			reports[scheme].all.mae, reports[scheme].few.mae)
	return repetition, reports

def run_experiment(cfg:ExperimentConfig, data:Optional[Dataset]=None) -> ComparisonReport:
	r'''
	Compare the configured schemes over ``cfg.repetitions`` seeded splits

	All schemes of a repetition share its split and initialization seed.
	With ``n_jobs != 1`` repetitions run in joblib workers; results are
	merged by repetition index, so the report does not depend on
	scheduling. ``data`` overrides the configured source.

	:raises ExperimentError: if any step fails
	'''
	if data is None:
		data = load_dataset(cfg)
	logger.info('running %d repetitions of %s on %d samples', cfg.repetitions,
		', '.join(s.value for s in cfg.schemes), len(data))
	if cfg.n_jobs == 1:
		results = [run_repetition(cfg, data, r) for r in range(cfg.repetitions)]
	else:
		results = Parallel(n_jobs=cfg.n_jobs)(
			delayed(run_repetition)(cfg, data, r) for r in range(cfg.repetitions))
	results = sorted(results, key=lambda result: result[0])
	runs = {scheme: [reports[scheme] for _, reports in results] for scheme in cfg.schemes}
	return aggregate(cfg.schemes, runs)

def comparison_to_dict(report:ComparisonReport) -> dict:
	return {
		'schemes': list(report.schemes),
		'repetitions': report.repetitions,
		'summary': {scheme: {region: {
			'count': row.count,
			**{metric: dict(getattr(row, metric).serialize()) for metric in METRICS},
		} for region, row in rows.items()} for scheme, rows in report.summary.items()},
		'pearson': {scheme: dict(s.serialize()) for scheme, s in report.pearson.items()},
		'relative_change': {scheme: {region: dict(metrics) for region, metrics in rows.items()}
			for scheme, rows in report.relative_change.items()},
		'region_ranking': None if report.region_ranking is None else dict(report.region_ranking),
		'runs': {scheme: [report_to_dict(r) for r in reports]
			for scheme, reports in report.runs.items()},
	}

def comparison_from_dict(payload:Mapping[str, Any]) -> ComparisonReport:
	ranking = payload.get('region_ranking')
	return ComparisonReport(
		schemes=payload['schemes'],
		repetitions=payload['repetitions'],
		summary=pmap({scheme: pmap({region: RegionSummary.create(row) for region, row in rows.items()})
			for scheme, rows in payload['summary'].items()}),
		pearson=pmap({scheme: MetricSummary.create(s) for scheme, s in payload['pearson'].items()}),
		relative_change=pmap({scheme: pmap({region: pmap(metrics) for region, metrics in rows.items()})
			for scheme, rows in payload.get('relative_change', {}).items()}),
		region_ranking=None if ranking is None else pmap(ranking),
		runs=pmap({scheme: tuple(report_from_dict(r) for r in reports)
			for scheme, reports in payload['runs'].items()}))

def comparison_to_json(report:ComparisonReport) -> str:
	return json.dumps(comparison_to_dict(report), sort_keys=True, indent=2) + '\n'

def comparison_from_json(text:str) -> ComparisonReport:
	return comparison_from_dict(json.loads(text))

def _mean_std(summary:MetricSummary) -> str:
	if summary.mean is None:
		return '-'
	return '{:.3f} +/- {:.3f}'.format(summary.mean, summary.std)

def _percent(value:Optional[float]) -> str:
	return '-' if value is None else '{:+.1f}'.format(value)

def comparison_table(report:ComparisonReport) -> str:
	r'''
	Aligned text rendering: schemes as rows, metric and region as columns
	'''
	titles = [Scheme(s).title for s in report.schemes]
	columns = pd.MultiIndex.from_tuples([(METRIC_TITLES[m], REGION_TITLES[r])
		for m in METRICS for r in REPORT_REGIONS])
	main = pd.DataFrame([[_mean_std(getattr(report.summary[s][r], m))
		for m in METRICS for r in REPORT_REGIONS] for s in report.schemes],
		index=titles, columns=columns)
	lines = ['{} repetitions, mean +/- std over seeds'.format(report.repetitions),
		main.to_string(), '']
	if report.relative_change:
		schemes = [s for s in report.schemes if s in report.relative_change]
		relative = pd.DataFrame([[_percent(report.relative_change[s][r][m])
			for m in METRICS for r in RELATIVE_REGIONS] for s in schemes],
			index=[Scheme(s).title for s in schemes],
			columns=pd.MultiIndex.from_tuples([(METRIC_TITLES[m], REGION_TITLES[r])
				for m in METRICS for r in RELATIVE_REGIONS]))
		lines += [RELATIVE_NOTE, relative.to_string(), '']
	pearson = pd.DataFrame([[_mean_std(report.pearson[s])] for s in report.schemes],
		index=titles, columns=['Pearson r'])
	lines += [pearson.to_string(), '']
	if report.region_ranking is not None:
		ranking = pd.DataFrame([[_cell_rank(report.region_ranking.get(r))
			for r in REPORT_REGIONS[1:]]], index=['Avg. Ranking'],
			columns=[REGION_TITLES[r] for r in REPORT_REGIONS[1:]])
		lines += [ranking.to_string(), '']
	return '\n'.join(lines)

def _cell_rank(value:Optional[float]) -> str:
	return '-' if value is None else '{:.2f}'.format(value)

def comparison_csv(report:ComparisonReport) -> str:
	r'''
	One row per scheme and region
	'''
	rows = []
	for scheme in report.schemes:
		for region in REPORT_REGIONS:
			summary = report.summary[scheme][region]
			row = {'scheme': scheme, 'region': region, 'count': summary.count}
			for metric in METRICS:
				row[metric + '_mean'] = getattr(summary, metric).mean
				row[metric + '_std'] = getattr(summary, metric).std
			change = report.relative_change.get(scheme, {}).get(region, {})
			for metric in METRICS:
				row[metric + '_change'] = change.get(metric)
			rows.append(row)
	frame = pd.DataFrame(rows, columns=['scheme', 'region', 'count']
		+ [m + s for m in METRICS for s in ('_mean', '_std')]
		+ [m + '_change' for m in METRICS])
	buffer = io.StringIO()
	frame.to_csv(buffer, index=False, float_format='%.17g', lineterminator='\n')
	return buffer.getvalue()

def render_report(report:ComparisonReport, fmt:ReportFormat='table') -> str:
	if fmt == 'table':
		return comparison_table(report)
	if fmt == 'json':
		return comparison_to_json(report)
	if fmt == 'csv':
		return comparison_csv(report)
	raise ValueError('unknown report format {!r}, expected one of {}'.format(
		fmt, ', '.join(REPORT_FORMATS)))

def emit_report(report:ComparisonReport, fmt:ReportFormat='table',
		path:Optional[Union[str, os.PathLike]]=None) -> str:
	r'''
	Write a rendered report to ``path``, or to stdout when omitted

	Returns the rendered text; equal reports render to equal bytes.

	:raises OSError: if ``path`` cannot be written
	'''
	text = render_report(report, fmt)
	if path is None:
		sys.stdout.write(text)
		sys.stdout.flush()
	else:
		with open(path, 'w', encoding='utf-8', newline='\n') as handle:
			handle.write(text)
		logger.info('wrote %s report to %s', fmt, path)
	return text

__all__: Tuple[str, ...] = ('ReportFormat', 'REPORT_FORMATS', 'RELATIVE_NOTE', 'ExperimentConfig',
	'experiment_config', 'load_experiment_config', 'MetricSummary', 'summarize',
	'RegionSummary', 'ComparisonReport', 'relative_change', 'aggregate', 'load_dataset',
	'run_repetition', 'run_experiment', 'comparison_to_dict', 'comparison_from_dict',
	'comparison_to_json', 'comparison_from_json', 'comparison_table', 'comparison_csv',
	'render_report', 'emit_report')
