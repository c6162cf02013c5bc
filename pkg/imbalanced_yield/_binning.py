from __future__ import annotations
from typing import Any, Iterable, Mapping, Tuple, Union

import enum
import logging
import math

import numpy as np
from pyrsistent import PClass, field, pmap
from pyrsistent.typing import PMap

from ._dataset import Dataset, LABEL_MAX, LABEL_MIN
from ._util import LabelRangeError

logger = logging.getLogger(__name__)

def _bin_count_invariant(spec:BinSpec) -> Tuple[bool, str]:
	if not spec.width > 0.0:
		return False, 'width must be positive'
	ratio = (spec.hi - spec.lo) / spec.width
	return ratio >= 1 and abs(ratio - round(ratio)) <= 1e-9 * max(1.0, ratio), \
		'(hi - lo) / width must be a positive integer'

class BinSpec(PClass):
	r'''
	Equal-width partition of the label space into ``B`` bins

	Bins are half-open ``[b_{k-1}, b_k)`` except the top bin, which is
	closed so that ``hi`` itself is representable.

	>>> BinSpec().count
	100
	>>> BinSpec(width=3)
	Traceback (most recent call last):
	...
	pyrsistent._checked_types.InvariantException: ...
	'''
	lo = field(type=float, initial=LABEL_MIN, factory=float)
	hi = field(type=float, initial=LABEL_MAX, factory=float)
	width = field(type=float, initial=1.0, factory=float,
		invariant=lambda w: (math.isfinite(w) and w > 0.0, 'width must be positive'))
	__invariant__ = _bin_count_invariant

	@property
	def count(self) -> int:
		return int(round((self.hi - self.lo) / self.width))

def bin_edges(spec:BinSpec) -> np.ndarray:
	r'''
	The ``B + 1`` bin boundaries ``b_0 .. b_B``

	>>> bin_edges(BinSpec(width=25))
	array([  0.,  25.,  50.,  75., 100.])
	'''
	return spec.lo + spec.width * np.arange(spec.count + 1, dtype=np.float64)

def bin_index(label:float, spec:BinSpec=BinSpec()) -> int:
	r'''
	Index of the bin holding ``label``

	:raises LabelRangeError: if ``label`` is outside ``[lo, hi]``

	>>> bin_index(0.0), bin_index(33.7), bin_index(100.0)
	(0, 33, 99)
	'''
	if not (spec.lo <= label <= spec.hi):
		raise LabelRangeError('label {} outside [{}, {}]'.format(label, spec.lo, spec.hi))
	return min(int(math.floor((label - spec.lo) / spec.width)), spec.count - 1)

def bin_indices(labels:Any, spec:BinSpec=BinSpec()) -> np.ndarray:
	r'''
	Vectorized :func:`bin_index`

	>>> bin_indices([0.5, 0.7, 99.9, 100.0])
	array([ 0,  0, 99, 99])
	'''
	labels = np.asarray(labels, dtype=np.float64)
	outside = ~((labels >= spec.lo) & (labels <= spec.hi))
	if np.any(outside):
		raise LabelRangeError('label {} outside [{}, {}]'.format(
			labels[np.argmax(outside)], spec.lo, spec.hi))
	index = np.floor((labels - spec.lo) / spec.width).astype(np.int64)
	return np.minimum(index, spec.count - 1)

def _counts_factory(values:Iterable[Any]) -> Tuple[int, ...]:
	return tuple(int(x) for x in values)

class BinCounts(PClass):
	r'''
	Per-bin sample counts

	>>> BinCounts(counts=[2, 0, 1]).total
	3
	'''
	counts = field(type=tuple, mandatory=True, factory=_counts_factory,
		invariant=lambda cs: (len(cs) > 0 and all(c >= 0 for c in cs),
			'counts must be a non-empty vector of non-negative integers'))

	@property
	def total(self) -> int:
		return sum(self.counts)

	def asarray(self) -> np.ndarray:
		return np.asarray(self.counts, dtype=np.int64)

	def __len__(self) -> int:
		return len(self.counts)

def count_bins(data:Union[Dataset, Any], spec:BinSpec=BinSpec()) -> BinCounts:
	r'''
	Count the samples falling into each bin

	Accepts a :class:`Dataset` or a plain label vector.

	>>> counts = count_bins([0.5, 0.7, 99.9])
	>>> counts.counts[0], counts.counts[99], counts.total
	(2, 1, 3)
	'''
	labels = data.labels if isinstance(data, Dataset) else data
	index = bin_indices(labels, spec)
	return BinCounts(counts=np.bincount(index, minlength=spec.count))

def imbalance_ratio(counts:BinCounts) -> float:
	r'''
	Ratio of the largest to the smallest bin count

	Returns ``math.inf`` when some bin is empty.

	:raises ValueError: if every bin is empty

	>>> imbalance_ratio(BinCounts(counts=[10, 10, 10]))
	1.0
	>>> imbalance_ratio(BinCounts(counts=[5, 0, 5]))
	inf
	'''
	values = counts.asarray()
	largest = int(values.max())
	if largest == 0:
		raise ValueError('imbalance ratio of all-empty bins is undefined')
	smallest = int(values.min())
	if smallest == 0:
		return math.inf
	return largest / smallest

class Region(enum.Enum):
	MANY = 'many'
	MEDIUM = 'medium'
	FEW = 'few'

	@property
	def title(self) -> str:
		return _REGION_TITLES[self]

_REGION_TITLES: Mapping[Region, str] = {
	Region.MANY: 'Many', Region.MEDIUM: 'Med.', Region.FEW: 'Few'}

class RegionThresholds(PClass):
	r'''
	Bin-count thresholds separating the three regions

	A bin is many-shot above ``upper``, medium-shot from ``lower`` to
	``upper`` inclusive and few-shot below ``lower``.
	'''
	lower = field(type=int, mandatory=True, factory=int,
		invariant=lambda n: (n > 0, 'lower must be positive'))
	upper = field(type=int, mandatory=True, factory=int,
		invariant=lambda n: (n > 0, 'upper must be positive'))
	__invariant__ = lambda th: (th.lower <= th.upper, 'lower must not exceed upper')

REGION_PRESETS: PMap[str, RegionThresholds] = pmap({
	'bh': RegionThresholds(lower=25, upper=50),
	'sm': RegionThresholds(lower=20, upper=65),
	'az': RegionThresholds(lower=3, upper=5),
})

def region_thresholds(preset:Union[str, RegionThresholds, Mapping[str, int]]) -> RegionThresholds:
	r'''
	Resolve thresholds given by preset name, mapping or value

	>>> region_thresholds('sm')
	RegionThresholds(lower=20, upper=65)
	>>> region_thresholds({'lower': 2, 'upper': 4})
	RegionThresholds(lower=2, upper=4)
	'''
	if isinstance(preset, RegionThresholds):
		return preset
	if isinstance(preset, str):
		try:
			return REGION_PRESETS[preset.lower()]
		except KeyError:
			raise ValueError('unknown region preset {!r}, expected one of {}'.format(
				preset, ', '.join(sorted(REGION_PRESETS)))) from None
	return RegionThresholds.create(dict(preset))

def classify_count(count:int, th:RegionThresholds) -> Region:
	if count > th.upper:
		return Region.MANY
	if count >= th.lower:
		return Region.MEDIUM
	return Region.FEW

def _regions_factory(values:Iterable[Any]) -> Tuple[Region, ...]:
	return tuple(Region(v) for v in values)

class RegionPartition(PClass):
	r'''
	Region assignment of every bin, derived from training counts
	'''
	regions = field(type=tuple, mandatory=True, factory=_regions_factory,
		invariant=lambda rs: (len(rs) > 0, 'partition must cover at least one bin'))

	def __len__(self) -> int:
		return len(self.regions)

	def region_of_bin(self, index:int) -> Region:
		return self.regions[index]

	def codes(self) -> np.ndarray:
		return np.array([r.value for r in self.regions], dtype=object)

	def regions_of(self, labels:Any, spec:BinSpec=BinSpec()) -> np.ndarray:
		r'''
		Region of each label, as an array of region values

		>>> part = partition_regions(BinCounts(counts=[60, 30, 1]),
		... 	RegionThresholds(lower=25, upper=50))
		>>> part.regions_of([10, 50, 99], BinSpec(width=100 / 3)).tolist()
		['many', 'medium', 'few']
		'''
		if spec.count != len(self.regions):
			raise ValueError('bin spec has {} bins, partition has {}'.format(
				spec.count, len(self.regions)))
		return self.codes()[bin_indices(labels, spec)]

def partition_regions(counts:BinCounts, th:RegionThresholds) -> RegionPartition:
	r'''
	Classify every bin as many-, medium- or few-shot

	>>> th = REGION_PRESETS['bh']
	>>> [r.value for r in partition_regions(BinCounts(counts=[51, 50, 25, 24, 0]), th).regions]
	['many', 'medium', 'medium', 'few', 'few']
	'''
	return RegionPartition(regions=[classify_count(c, th) for c in counts.counts])

def region_counts(partition:RegionPartition, counts:BinCounts) -> PMap[Region, Tuple[int, int]]:
	r'''
	Number of bins and of samples in each region, as ``(bins, samples)``

	>>> th = RegionThresholds(lower=2, upper=3)
	>>> counts = BinCounts(counts=[5, 2, 0, 1])
	>>> totals = region_counts(partition_regions(counts, th), counts)
	>>> totals[Region.MANY], totals[Region.MEDIUM], totals[Region.FEW]
	((1, 5), (1, 2), (2, 1))
	'''
	if len(partition) != len(counts):
		raise ValueError('partition has {} bins, counts has {}'.format(len(partition), len(counts)))
	totals = {region: (0, 0) for region in Region}
	for region, count in zip(partition.regions, counts.counts):
		bins, samples = totals[region]
		totals[region] = (bins + 1, samples + count)
	return pmap(totals)

__all__: Tuple[str, ...] = ('BinSpec', 'bin_edges', 'bin_index', 'bin_indices',
	'BinCounts', 'count_bins', 'imbalance_ratio', 'Region', 'RegionThresholds',
	'REGION_PRESETS', 'region_thresholds', 'classify_count', 'RegionPartition',
	'partition_regions', 'region_counts')
