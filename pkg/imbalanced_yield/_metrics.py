from __future__ import annotations
from typing import Any, Iterable, Mapping, Optional, Sequence, Tuple, Union

import json
import logging
import math

import numpy as np
import pandas as pd
from pyrsistent import PClass, field, pmap
from pyrsistent.typing import PMap
from scipy.stats import gmean as _geometric_mean, pearsonr, rankdata

from ._binning import BinCounts, BinSpec, Region, RegionPartition, bin_indices
from ._util import check_finite, check_same_length

logger = logging.getLogger(__name__)

GMEAN_EPS: float = 1e-10

REPORT_REGIONS: Tuple[str, ...] = ('all', 'many', 'medium', 'few')
REGION_TITLES: PMap[str, str] = pmap({'all': 'All', 'many': 'Many', 'medium': 'Med.', 'few': 'Few'})
METRICS: Tuple[str, ...] = ('mae', 'rmse', 'gmean')
METRIC_TITLES: PMap[str, str] = pmap({'mae': 'MAE', 'rmse': 'RMSE', 'gmean': 'G-Mean'})

def _errors(preds:Any, labels:Any) -> np.ndarray:
	preds = check_finite('preds', np.asarray(preds, dtype=np.float64))
	labels = check_finite('labels', np.asarray(labels, dtype=np.float64))
	if check_same_length(preds=preds, labels=labels) == 0:
		raise ValueError('metric of an empty sample')
	return preds - labels

def mae(preds:Any, labels:Any) -> float:
	r'''
	Mean absolute error

	>>> mae([10, 20], [12, 16])
	3.0
	'''
	return float(np.mean(np.abs(_errors(preds, labels))))

def rmse(preds:Any, labels:Any) -> float:
	r'''
	Root mean squared error

	>>> rmse([10, 20], [12, 16]) == math.sqrt(10)
	True
	'''
	return float(np.sqrt(np.mean(np.square(_errors(preds, labels)))))

def gmean(preds:Any, labels:Any, eps:float=GMEAN_EPS) -> float:
	r'''
	Geometric mean of the absolute errors floored at ``eps``, capped at the MAE

	The floor keeps exact-zero errors finite in log space but can lift the
	result above the MAE when most errors sit below ``eps``; the cap then
	returns the MAE instead, so ``gmean <= mae`` always holds.

	>>> round(gmean([1, 4], [0, 0]), 12)
	2.0
	>>> gmean([5, 5], [5, 5])
	0.0
	'''
	if not eps > 0.0:
		raise ValueError('eps must be positive')
	errors = np.abs(_errors(preds, labels))
	floored = float(_geometric_mean(np.maximum(errors, eps)))
	return min(floored, float(np.mean(errors)))

def pearson(x:Any, y:Any) -> Optional[float]:
	r'''
	Sample correlation coefficient, or ``None`` when either side is constant

	:raises ValueError: on fewer than two points or a length mismatch

	>>> round(pearson([1, 2, 3, 4], [1, 3, 2, 4]), 12)
	0.8
	>>> pearson([1, 1, 1], [1, 2, 3]) is None
	True
	'''
	x = check_finite('x', np.asarray(x, dtype=np.float64))
	y = check_finite('y', np.asarray(y, dtype=np.float64))
	if check_same_length(x=x, y=y) < 2:
		raise ValueError('correlation needs at least two points')
	if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
		return None
	return float(np.clip(pearsonr(x, y)[0], -1.0, 1.0))

def _optional_float(value:Any) -> Optional[float]:
	return None if value is None else float(value)

def _nonnegative(value:Optional[float]) -> Tuple[bool, str]:
	return value is None or (math.isfinite(value) and value >= 0.0), 'metric must be non-negative'

class RegionMetrics(PClass):
	r'''
	Errors of the test samples falling into one region

	Metrics are ``None`` for a region without test samples.
	'''
	count = field(type=int, initial=0, factory=int,
		invariant=lambda n: (n >= 0, 'count must be non-negative'))
	mae = field(type=(float, type(None)), initial=None, factory=_optional_float, invariant=_nonnegative)
	rmse = field(type=(float, type(None)), initial=None, factory=_optional_float, invariant=_nonnegative)
	gmean = field(type=(float, type(None)), initial=None, factory=_optional_float, invariant=_nonnegative)
	__invariant__ = lambda m: ((m.count == 0) == (m.mae is None), 'metrics are present exactly when count > 0')

	def metric(self, name:str) -> Optional[float]:
		if name not in METRICS:
			raise ValueError('unknown metric {!r}'.format(name))
		return getattr(self, name)

def region_metrics(preds:Any, labels:Any) -> RegionMetrics:
	r'''
	MAE, RMSE and G-Mean of a group of samples

	>>> m = region_metrics([10, 20], [12, 16])
	>>> m.count, m.mae, round(m.rmse ** 2, 9), round(m.gmean ** 2, 9)
	(2, 3.0, 10.0, 8.0)
	>>> region_metrics([], [])
	RegionMetrics(count=0, mae=None, rmse=None, gmean=None)
	'''
	preds = np.asarray(preds, dtype=np.float64)
	if preds.shape[0] == 0:
		check_same_length(preds=preds, labels=labels)
		return RegionMetrics()
	return RegionMetrics(count=preds.shape[0], mae=mae(preds, labels),
		rmse=rmse(preds, labels), gmean=gmean(preds, labels))

class BinError(PClass):
	bin = field(type=int, mandatory=True, factory=int)
	count = field(type=int, mandatory=True, factory=int)
	mae = field(type=float, mandatory=True, factory=float)

def _bin_errors_factory(values:Iterable[Any]) -> Tuple[BinError, ...]:
	return tuple(v if isinstance(v, BinError) else BinError.create(v) for v in values)

def _report_invariant(report:RegionReport) -> Tuple[bool, str]:
	parts = report.many.count + report.medium.count + report.few.count
	return report.all.count == parts, 'region counts must add up to the overall count'

class RegionReport(PClass):
	r'''
	Region-stratified evaluation of one model on one test set

	``pearson_r`` correlates the training count of every bin with the mean
	test error in that bin, over bins occupied in both sets; it is ``None``
	when undefined. ``per_bin_errors`` lists the occupied test bins.
	'''
	all = field(type=RegionMetrics, mandatory=True)
	many = field(type=RegionMetrics, mandatory=True)
	medium = field(type=RegionMetrics, mandatory=True)
	few = field(type=RegionMetrics, mandatory=True)
	pearson_r = field(type=(float, type(None)), initial=None, factory=_optional_float,
		invariant=lambda r: (r is None or -1.0 <= r <= 1.0, 'pearson_r must lie in [-1, 1]'))
	per_bin_errors = field(type=tuple, initial=(), factory=_bin_errors_factory)
	__invariant__ = _report_invariant

	def region(self, name:Union[str, Region]) -> RegionMetrics:
		name = name.value if isinstance(name, Region) else name
		if name not in REPORT_REGIONS:
			raise ValueError('unknown region {!r}'.format(name))
		return getattr(self, name)

def region_report(preds:Any, labels:Any, partition:RegionPartition,
		spec:BinSpec, train_counts:BinCounts) -> RegionReport:
	r'''
	Evaluate predictions overall and per region of the training partition

	>>> from ._binning import partition_regions, RegionThresholds
	>>> spec = BinSpec(width=50)
	>>> counts = BinCounts(counts=[10, 1])
	>>> part = partition_regions(counts, RegionThresholds(lower=2, upper=5))
	>>> report = region_report([10, 20, 90], [12, 16, 95], part, spec, counts)
	>>> report.many.mae, report.medium.mae, report.few.mae, report.all.count
	(3.0, None, 5.0, 3)
	>>> report.pearson_r
	-1.0
	'''
	preds = check_finite('preds', np.asarray(preds, dtype=np.float64))
	labels = check_finite('labels', np.asarray(labels, dtype=np.float64))
	if check_same_length(preds=preds, labels=labels) == 0:
		raise ValueError('cannot evaluate an empty test set')
	if len(train_counts) != len(partition):
		raise ValueError('partition has {} bins, counts has {}'.format(
			len(partition), len(train_counts)))
	regions = partition.regions_of(labels, spec)
	groups = {name: region_metrics(preds[regions == name], labels[regions == name])
		for name in REPORT_REGIONS[1:]}
	index = bin_indices(labels, spec)
	test_counts = np.bincount(index, minlength=spec.count)
	error_sums = np.bincount(index, weights=np.abs(preds - labels), minlength=spec.count)
	occupied = np.flatnonzero(test_counts)
	per_bin = tuple(BinError(bin=k, count=test_counts[k], mae=error_sums[k] / test_counts[k])
		for k in occupied.tolist())
	shared = occupied[train_counts.asarray()[occupied] > 0]
	pearson_r = None
	if shared.shape[0] >= 2:
		pearson_r = pearson(train_counts.asarray()[shared], error_sums[shared] / test_counts[shared])
	return RegionReport(all=region_metrics(preds, labels), pearson_r=pearson_r,
		per_bin_errors=per_bin, **groups)

def report_to_dict(report:RegionReport) -> dict:
	return {
		'regions': {name: dict(report.region(name).serialize()) for name in REPORT_REGIONS},
		'pearson_r': report.pearson_r,
		'per_bin_errors': [dict(b.serialize()) for b in report.per_bin_errors],
	}

def report_from_dict(payload:Mapping[str, Any]) -> RegionReport:
	regions = payload['regions']
	return RegionReport(pearson_r=payload.get('pearson_r'),
		per_bin_errors=payload.get('per_bin_errors', ()),
		**{name: RegionMetrics.create(regions[name]) for name in REPORT_REGIONS})

def report_to_json(report:RegionReport) -> str:
	r'''
	Serialize a report; keys are sorted so equal reports give equal text
	'''
	return json.dumps(report_to_dict(report), sort_keys=True, indent=2) + '\n'

def report_from_json(text:str) -> RegionReport:
	return report_from_dict(json.loads(text))

def _cell(value:Optional[float], digits:int=3) -> str:
	return '-' if value is None else '{:.{}f}'.format(value, digits)

def format_region_report(report:RegionReport) -> str:
	r'''
	Aligned text table with metrics as rows and All/Many/Med./Few as columns
	'''
	table = pd.DataFrame(
		[[_cell(report.region(r).metric(m)) for r in REPORT_REGIONS] for m in METRICS]
			+ [[str(report.region(r).count) for r in REPORT_REGIONS]],
		index=[METRIC_TITLES[m] for m in METRICS] + ['Count'],
		columns=[REGION_TITLES[r] for r in REPORT_REGIONS])
	return '{}\nPearson r (train count vs test MAE per bin): {}\n'.format(
		table.to_string(), _cell(report.pearson_r))

def report_table(report:RegionReport) -> PMap[str, PMap[str, Optional[float]]]:
	r'''
	Region to metric to value view of a report, as consumed by
	:func:`average_region_ranking`
	'''
	return pmap({r: pmap({m: report.region(r).metric(m) for m in METRICS})
		for r in REPORT_REGIONS})

def average_region_ranking(tables:Sequence[Mapping[str, Mapping[str, Optional[float]]]]
		) -> Optional[PMap[str, float]]:
	r'''
	Average rank of the many-, medium- and few-shot regions

	Within every table the regions are ranked by each metric, rank 1 being
	the lowest error and ties sharing their mean rank; the ranks are then
	averaged over metrics and tables. Regions without a value are left out
	of that ranking. Returns ``None`` for fewer than two tables.

	>>> a = {'many': {'mae': 1.0}, 'medium': {'mae': 2.0}, 'few': {'mae': 3.0}}
	>>> b = {'many': {'mae': 2.0}, 'medium': {'mae': 1.0}, 'few': {'mae': 3.0}}
	>>> dict(average_region_ranking([a, b]))
	{'many': 1.5, 'medium': 1.5, 'few': 3.0}
	>>> average_region_ranking([a]) is None
	True
	'''
	if len(tables) < 2:
		return None
	ranks = {name: [] for name in REPORT_REGIONS[1:]}  # type: dict
	for table in tables:
		for metric in METRICS:
			present = [name for name in REPORT_REGIONS[1:]
				if table.get(name, {}).get(metric) is not None]
			if not present:
				continue
			values = rankdata([table[name][metric] for name in present], method='average')
			for name, rank in zip(present, values.tolist()):
				ranks[name].append(rank)
	return pmap({name: float(np.mean(values)) for name, values in ranks.items() if values})

__all__: Tuple[str, ...] = ('GMEAN_EPS', 'REPORT_REGIONS', 'REGION_TITLES', 'METRICS',
	'METRIC_TITLES', 'mae', 'rmse', 'gmean', 'pearson', 'RegionMetrics', 'region_metrics',
	'BinError', 'RegionReport', 'region_report', 'report_to_dict', 'report_from_dict',
	'report_to_json', 'report_from_json', 'format_region_report', 'report_table',
	'average_region_ranking')
