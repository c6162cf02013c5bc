from __future__ import annotations
from typing import Any, Iterable, Iterator, Optional, Tuple, Union, overload

import logging
import math
import os
import re

import numpy as np
import pandas as pd
from pyrsistent import PClass, field

from ._util import CsvFormatError, DimensionError, LabelRangeError, \
	check_index, frozen, sphinx_build

logger = logging.getLogger(__name__)

LABEL_MIN: float = 0.0
LABEL_MAX: float = 100.0
LABEL_COLUMN: str = 'yield'

UINT64_MAX: int = 2 ** 64 - 1

def _finite(value:float) -> bool:
	return math.isfinite(value)

def _seed_invariant(seed:int) -> Tuple[bool, str]:
	return 0 <= seed <= UINT64_MAX, 'seed must be a 64-bit unsigned integer'

def _features_factory(values:Iterable[Any]) -> Tuple[float, ...]:
	return tuple(float(x) for x in values)

class Sample(PClass):
	r'''
	A single labelled observation: a feature vector and a yield in [0, 100]

	>>> Sample(features=[1, 2], label=55)
	Sample(features=(1.0, 2.0), label=55.0)
	>>> Sample(features=[1, 2], label=101)
	Traceback (most recent call last):
	...
	pyrsistent._checked_types.InvariantException: ...
	'''
	features = field(type=tuple, mandatory=True, factory=_features_factory,
		invariant=lambda xs: (all(map(_finite, xs)), 'features must be finite'))
	label = field(type=float, mandatory=True, factory=float,
		invariant=lambda y: (_finite(y) and LABEL_MIN <= y <= LABEL_MAX,
			'label must be finite and within [0, 100]'))

class Dataset:
	r'''
	Immutable ordered collection of samples sharing one feature dimension

	Features are held as an ``(N, dim)`` read-only array and labels as an
	``(N,)`` read-only array. Iterating yields :class:`Sample` records;
	indexing with an integer gives a :class:`Sample`, indexing with a slice
	or an index array gives a new :class:`Dataset`.

	Do not instantiate directly, instead use :func:`dataset`
	or :meth:`Dataset.fromsamples`.

	>>> data = dataset([[0.5, 1.0], [2.0, 3.0], [4.0, 5.0]], [10, 20, 100])
	>>> len(data), data.dim
	(3, 2)
	>>> data[1]
	Sample(features=(2.0, 3.0), label=20.0)
	>>> data[1:].labels
	array([ 20., 100.])
	'''

	__slots__ = ('_features', '_labels')

	if not sphinx_build:
		_features: np.ndarray
		_labels: np.ndarray

	def __new__(cls, _features, _labels):
		self = super().__new__(cls)
		self._features = _features
		self._labels = _labels
		return self

	@property
	def features(self) -> np.ndarray:
		return self._features

	@property
	def labels(self) -> np.ndarray:
		return self._labels

	@property
	def dim(self) -> int:
		return self._features.shape[1]

	@property
	def samples(self) -> Tuple[Sample, ...]:
		return tuple(self)

	def __len__(self) -> int:
		return self._labels.shape[0]

	def __bool__(self) -> bool:
		return len(self) != 0

	def __iter__(self) -> Iterator[Sample]:
		for features, label in zip(self._features, self._labels):
			yield Sample(features=features, label=label)

	@overload
	def __getitem__(self, index:int) -> Sample: ...
	@overload
	def __getitem__(self, index:Union[slice, np.ndarray]) -> Dataset: ...
	def __getitem__(self, index):
		if isinstance(index, (int, np.integer)):
			idx = check_index(len(self), int(index))
			return Sample(features=self._features[idx], label=self._labels[idx])
		if isinstance(index, slice):
			return Dataset(frozen(self._features[index]), frozen(self._labels[index]))
		return self.take(index)

	def take(self, indices:Any) -> Dataset:
		r'''
		Select samples by position, in the given order

		>>> dataset([[1.0], [2.0], [3.0]], [1, 2, 3]).take([2, 0]).labels
		array([3., 1.])
		'''
		indices = np.asarray(indices, dtype=np.intp)
		return Dataset(frozen(self._features[indices]), frozen(self._labels[indices]))

	def __eq__(self, other) -> bool:
		if not isinstance(other, Dataset):
			return NotImplemented
		if self is other:
			return True
		return self._features.shape == other._features.shape \
			and bool(np.array_equal(self._labels, other._labels)) \
			and bool(np.array_equal(self._features, other._features))

	def __ne__(self, other) -> bool:
		result = self.__eq__(other)
		if result is NotImplemented: return NotImplemented
		return not result

	def __hash__(self) -> int:
		return hash((self._features.shape,
			self._features.tobytes(), self._labels.tobytes()))

	def __repr__(self) -> str:
		return 'dataset(<{} samples, dim={}>)'.format(len(self), self.dim)

	def __reduce__(self):
		return dataset, (self._features.tolist(), self._labels.tolist(), self.dim)

	@staticmethod
	def fromsamples(samples:Iterable[Sample]) -> Dataset:
		r'''
		Build a :class:`Dataset` from :class:`Sample` records

		:raises DimensionError: if the samples disagree on feature length

		>>> Dataset.fromsamples([Sample(features=[1], label=3)])
		dataset(<1 samples, dim=1>)
		'''
		samples = list(samples)
		if not samples:
			raise ValueError('cannot infer the dimension of an empty sample list')
		return dataset([s.features for s in samples], [s.label for s in samples])

def dataset(features:Any, labels:Any, dim:Optional[int]=None) -> Dataset:
	r'''
	Create a :class:`Dataset` from a feature matrix and a label vector

	``dim`` is only needed for empty datasets.

	:raises DimensionError: if the rows disagree on feature length
	:raises LabelRangeError: if a label is outside [0, 100]
	:raises ValueError: if a value is not finite

	>>> dataset([[1.0, 2.0]], [100.0])
	dataset(<1 samples, dim=2>)
	>>> dataset([[1.0, 2.0], [3.0]], [1.0, 2.0])
	Traceback (most recent call last):
	...
	imbalanced_yield._util.DimensionError: ...
	>>> dataset([[1.0]], [-1.0])
	Traceback (most recent call last):
	...
	imbalanced_yield._util.LabelRangeError: ...
	'''
	labels = np.asarray(labels, dtype=np.float64)
	if labels.ndim != 1:
		raise ValueError('labels must be a vector')
	if labels.shape[0] == 0:
		if dim is None:
			features = np.asarray(features, dtype=np.float64)
			if features.ndim != 2:
				raise ValueError('dim is required for an empty dataset')
			dim = features.shape[1]
		if dim < 1:
			raise DimensionError('dim must be positive, got {}'.format(dim))
		return Dataset(frozen(np.empty((0, dim))), frozen(labels))
	try:
		features = np.asarray(features, dtype=np.float64)
	except ValueError as err:
		raise DimensionError('ragged feature rows: {}'.format(err)) from err
	if features.ndim != 2:
		raise DimensionError('features must be a matrix, got {} dimensions'.format(features.ndim))
	if features.shape[0] != labels.shape[0]:
		raise ValueError('length mismatch: features={}, labels={}'.format(
			features.shape[0], labels.shape[0]))
	if dim is not None and features.shape[1] != dim:
		raise DimensionError('expected dim={}, got {}'.format(dim, features.shape[1]))
	if features.shape[1] < 1:
		raise DimensionError('dim must be positive')
	if not np.all(np.isfinite(features)):
		row = int(np.argwhere(~np.isfinite(features))[0][0])
		raise ValueError('non-finite feature in sample {}'.format(row))
	if not np.all(np.isfinite(labels)):
		row = int(np.argwhere(~np.isfinite(labels))[0][0])
		raise ValueError('non-finite label in sample {}'.format(row))
	outside = (labels < LABEL_MIN) | (labels > LABEL_MAX)
	if np.any(outside):
		row = int(np.argmax(outside))
		raise LabelRangeError('label {} of sample {} is outside [0, 100]'.format(labels[row], row))
	return Dataset(frozen(features), frozen(labels))

class SplitSpec(PClass):
	r'''
	Train/test split parameters

	>>> SplitSpec()
	SplitSpec(train_fraction=0.7, seed=0)
	'''
	train_fraction = field(type=float, initial=0.7, factory=float,
		invariant=lambda f: (0.0 < f < 1.0, 'train_fraction must lie in (0, 1)'))
	seed = field(type=int, initial=0, factory=int, invariant=_seed_invariant)

def split(data:Dataset, spec:SplitSpec=SplitSpec()) -> Tuple[Dataset, Dataset]:
	r'''
	Shuffle with the seed of ``spec`` and cut into train and test parts

	The training part holds ``round(train_fraction * N)`` samples.
	No stratification is applied.

	:raises ValueError: if either part would be empty

	>>> data = dataset([[float(i)] for i in range(10)], list(range(10)))
	>>> train, test = split(data, SplitSpec(train_fraction=0.7, seed=3))
	>>> len(train), len(test)
	(7, 3)
	>>> sorted(train.labels.tolist() + test.labels.tolist()) == list(range(10))
	True
	'''
	size = len(data)
	if size < 2:
		raise ValueError('cannot split a dataset of {} samples'.format(size))
	count = int(math.floor(spec.train_fraction * size + 0.5))
	if count <= 0 or count >= size:
		raise ValueError('train_fraction={} leaves an empty side for N={}'.format(
			spec.train_fraction, size))
	order = np.random.default_rng(spec.seed).permutation(size)
	logger.debug('split N=%d into train=%d test=%d (seed=%d)',
		size, count, size - count, spec.seed)
	return data.take(order[:count]), data.take(order[count:])

class SynthConfig(PClass):
	r'''
	Parameters of the synthetic skewed-label generator

	``skew`` sets the decay of the label density, proportional to
	``exp(-skew * y / 100)``; ``skew = 0`` gives uniform labels.
	``noise_sd`` is in yield percentage points.
	'''
	n = field(type=int, initial=5000, factory=int,
		invariant=lambda n: (n >= 10, 'n must be at least 10'))
	dim = field(type=int, initial=8, factory=int,
		invariant=lambda d: (d >= 1, 'dim must be positive'))
	skew = field(type=float, initial=3.0, factory=float,
		invariant=lambda s: (_finite(s) and s >= 0.0, 'skew must be finite and non-negative'))
	noise_sd = field(type=float, initial=5.0, factory=float,
		invariant=lambda s: (_finite(s) and s >= 0.0, 'noise_sd must be finite and non-negative'))
	seed = field(type=int, initial=0, factory=int, invariant=_seed_invariant)

def skewed_labels(rng:np.random.Generator, n:int, skew:float) -> np.ndarray:
	r'''
	Draw ``n`` labels from an exponential density truncated to [0, 100]

	Inverse-CDF sampling; a vanishing ``skew`` degenerates to the uniform density.
	'''
	u = rng.random(n)
	if skew < 1e-12:
		labels = LABEL_MAX * u
	else:
		labels = -(LABEL_MAX / skew) * np.log1p(-u * -np.expm1(-skew))
	return np.clip(labels, LABEL_MIN, LABEL_MAX)

def generate_synthetic(cfg:SynthConfig=SynthConfig()) -> Dataset:
	r'''
	Generate a dataset whose label counts decay from low to high yields

	Every feature is a saturating function ``s * 100 * (1 - exp(-y / t))``
	of the label, with a random sign ``s`` and scale ``t`` in [25, 45]
	fixed per feature, plus Gaussian noise of standard deviation
	``noise_sd``. Without noise each feature determines the label; with
	noise the high, scarce yields are the hardest to resolve.

	>>> data = generate_synthetic(SynthConfig(n=100, dim=3, seed=7))
	>>> len(data), data.dim
	(100, 3)
	>>> data == generate_synthetic(SynthConfig(n=100, dim=3, seed=7))
	True
	'''
	rng = np.random.default_rng(cfg.seed)
	labels = skewed_labels(rng, cfg.n, cfg.skew)
	signs = rng.choice(np.array([-1.0, 1.0]), size=cfg.dim)
	scales = rng.uniform(25.0, 45.0, size=cfg.dim)
	features = signs * LABEL_MAX * -np.expm1(-labels[:, None] / scales)
	if cfg.noise_sd > 0.0:
		features = features + rng.normal(0.0, cfg.noise_sd, size=features.shape)
	logger.debug('generated %d samples (dim=%d, skew=%g, noise_sd=%g, seed=%d)',
		cfg.n, cfg.dim, cfg.skew, cfg.noise_sd, cfg.seed)
	return dataset(features, labels)

_PARSER_LINE = re.compile(r'line (\d+)')
_NONFINITE = frozenset(('nan', '-nan', '+nan', 'inf', '-inf', '+inf',
	'infinity', '-infinity', '+infinity'))

def _header_dim(columns:Iterable[str]) -> int:
	columns = [c.strip() for c in columns]
	if len(columns) < 2 or columns[-1] != LABEL_COLUMN:
		raise CsvFormatError(1, 'header must be f0,...,f{{d-1}},{}'.format(LABEL_COLUMN))
	for n, name in enumerate(columns[:-1]):
		if name != 'f{}'.format(n):
			raise CsvFormatError(1, 'expected column f{}, found {!r}'.format(n, name))
	return len(columns) - 1

def load_csv(path:Union[str, os.PathLike]) -> Dataset:
	r'''
	Read a dataset from a CSV file with header ``f0,...,f{d-1},yield``

	The header fixes the column count; every data row must match it.

	:raises CsvFormatError: on a malformed row, a wrong column count,
		a label outside [0, 100] or a non-finite value,
		naming the offending line
	:raises OSError: if the file cannot be read
	'''
	try:
		frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
			skip_blank_lines=False, encoding='utf-8')
	except pd.errors.EmptyDataError as err:
		raise CsvFormatError(1, 'missing header') from err
	except pd.errors.ParserError as err:
		match = _PARSER_LINE.search(str(err))
		line = int(match.group(1)) if match else 0
		raise CsvFormatError(line, 'inconsistent column count') from err
	text = frame.to_numpy(dtype=object)
	columns = [str(name) for name in text[0]]
	dim = _header_dim(columns)
	if text.shape[0] < 2:
		raise CsvFormatError(2, 'no samples')
	values = np.empty((text.shape[0] - 1, text.shape[1]), dtype=np.float64)
	for row in range(values.shape[0]):
		line = row + 2
		for col in range(values.shape[1]):
			cell = text[row + 1, col]
			if not isinstance(cell, str) or cell.strip() == '':
				raise CsvFormatError(line, 'expected {} fields'.format(dim + 1))
			token = cell.strip()
			if token.lower() in _NONFINITE:
				raise CsvFormatError(line, 'non-finite value {!r} in column {}'.format(
					token, columns[col]))
			try:
				values[row, col] = float(token)
			except ValueError:
				raise CsvFormatError(line, 'malformed number {!r} in column {}'.format(
					token, columns[col])) from None
		label = values[row, -1]
		if not (LABEL_MIN <= label <= LABEL_MAX):
			raise CsvFormatError(line, 'label {} outside [0, 100]'.format(label))
	logger.info('loaded %d samples (dim=%d) from %s', values.shape[0], dim, path)
	return dataset(values[:, :-1], values[:, -1])

def save_csv(data:Dataset, path:Union[str, os.PathLike]) -> None:
	r'''
	Write a dataset as CSV with 17 significant digits per value

	``load_csv(path)`` restores the dataset exactly.
	'''
	columns = ['f{}'.format(n) for n in range(data.dim)] + [LABEL_COLUMN]
	frame = pd.DataFrame(np.column_stack([data.features, data.labels]), columns=columns)
	frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n', encoding='utf-8')
	logger.info('saved %d samples (dim=%d) to %s', len(data), data.dim, path)

__all__: Tuple[str, ...] = ('Sample', 'Dataset', 'dataset', 'SplitSpec', 'split',
	'SynthConfig', 'generate_synthetic', 'skewed_labels', 'load_csv', 'save_csv',
	'LABEL_MIN', 'LABEL_MAX')
