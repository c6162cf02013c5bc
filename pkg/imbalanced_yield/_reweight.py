from __future__ import annotations
from typing import Any, Iterable, Iterator, Tuple, Union

import enum
import logging
import math

import numpy as np
from pyrsistent import PClass, field
from scipy.ndimage import convolve1d
from scipy.signal.windows import triang
from scipy.special import expit

from ._binning import BinCounts, BinSpec, bin_indices, count_bins
from ._dataset import Dataset, Sample
from ._util import check_finite, check_same_length, frozen, sphinx_build

logger = logging.getLogger(__name__)

class Scheme(enum.Enum):
	r'''
	Training-weight scheme, addressed by its selector string

	>>> Scheme('focal+lds').uses_focal, Scheme('focal+lds').uses_lds
	(True, True)
	'''
	VANILLA = 'vanilla'
	FOCAL = 'focal'
	LDS = 'lds'
	FOCAL_LDS = 'focal+lds'

	@property
	def uses_focal(self) -> bool:
		return self in (Scheme.FOCAL, Scheme.FOCAL_LDS)

	@property
	def uses_lds(self) -> bool:
		return self in (Scheme.LDS, Scheme.FOCAL_LDS)

	@property
	def title(self) -> str:
		return _SCHEME_TITLES[self]

_SCHEME_TITLES = {Scheme.VANILLA: 'Vanilla', Scheme.FOCAL: '+Focal',
	Scheme.LDS: '+LDS', Scheme.FOCAL_LDS: '+Focal+LDS'}

def parse_schemes(schemes:Iterable[Union[str, Scheme]]) -> Tuple[Scheme, ...]:
	r'''
	Validate scheme selectors, dropping repeats but keeping their order

	>>> parse_schemes(['lds', 'vanilla', 'lds'])
	(<Scheme.LDS: 'lds'>, <Scheme.VANILLA: 'vanilla'>)
	>>> parse_schemes([])
	Traceback (most recent call last):
	...
	ValueError: at least one scheme is required
	'''
	result: list = []
	for scheme in schemes:
		try:
			scheme = Scheme(scheme)
		except ValueError:
			raise ValueError('unknown scheme {!r}, expected one of {}'.format(
				scheme, ', '.join(s.value for s in Scheme))) from None
		if scheme not in result:
			result.append(scheme)
	if not result:
		raise ValueError('at least one scheme is required')
	return tuple(result)

class FocalConfig(PClass):
	r'''
	Focal re-weighting hyperparameters: ``w = sigmoid(alpha * loss) ** gamma``

	>>> FocalConfig()
	FocalConfig(alpha=0.2, gamma=1.0)
	'''
	alpha = field(type=float, initial=0.2, factory=float,
		invariant=lambda a: (math.isfinite(a) and a > 0.0, 'alpha must be positive'))
	gamma = field(type=float, initial=1.0, factory=float,
		invariant=lambda g: (math.isfinite(g) and g >= 0.0, 'gamma must be non-negative'))

KERNELS: Tuple[str, ...] = ('gaussian', 'triang', 'laplace')
EDGES: Tuple[str, ...] = ('truncate', 'reflect')

class KernelConfig(PClass):
	r'''
	Label-density smoothing kernel, measured in bins

	``ell`` is the odd window size and ``sigma`` the spread. With
	``edge='truncate'`` the window is cut at the ends of the label space
	without renormalization; ``edge='reflect'`` mirrors the counts instead.

	>>> KernelConfig()
	KernelConfig(ell=5, sigma=2.0, kernel='gaussian', edge='truncate')
	>>> KernelConfig(ell=4)
	Traceback (most recent call last):
	...
	pyrsistent._checked_types.InvariantException: ...
	'''
	ell = field(type=int, initial=5, factory=int,
		invariant=lambda n: (n > 0 and n % 2 == 1, 'ell must be an odd positive integer'))
	sigma = field(type=float, initial=2.0, factory=float,
		invariant=lambda s: (math.isfinite(s) and s > 0.0, 'sigma must be positive'))
	kernel = field(type=str, initial='gaussian',
		invariant=lambda k: (k in KERNELS, 'kernel must be one of ' + ', '.join(KERNELS)))
	edge = field(type=str, initial='truncate',
		invariant=lambda e: (e in EDGES, 'edge must be one of ' + ', '.join(EDGES)))

	@property
	def half(self) -> int:
		return (self.ell - 1) // 2

def gaussian_kernel(dy:Any, sigma:float) -> Any:
	r'''
	``exp(-dy**2 / (2 * sigma**2))``, elementwise for arrays

	>>> gaussian_kernel(0.0, 2.0)
	1.0
	>>> round(gaussian_kernel(2.0, 2.0), 5)
	0.60653
	'''
	if not sigma > 0.0:
		raise ValueError('sigma must be positive')
	result = np.exp(-np.square(dy) / (2.0 * sigma * sigma))
	return float(result) if np.ndim(result) == 0 else result

def kernel_window(cfg:KernelConfig=KernelConfig()) -> np.ndarray:
	r'''
	Kernel values at the offsets ``-(ell-1)/2 .. (ell-1)/2``, peak 1

	>>> kernel_window(KernelConfig(ell=3, kernel='triang')).tolist()
	[0.5, 1.0, 0.5]
	'''
	offsets = np.arange(-cfg.half, cfg.half + 1, dtype=np.float64)
	if cfg.kernel == 'gaussian':
		return gaussian_kernel(offsets, cfg.sigma)
	if cfg.kernel == 'triang':
		return triang(cfg.ell)
	return np.exp(-np.abs(offsets) / cfg.sigma)

def smoothed_counts(counts:BinCounts, cfg:KernelConfig=KernelConfig()) -> np.ndarray:
	r'''
	Convolve the bin counts with the kernel window

	``c~[k] = sum_j K(k - j) * counts[j]`` over the window around ``k``.

	>>> smoothed_counts(BinCounts(counts=[0, 0, 10, 0, 0]),
	... 	KernelConfig(ell=3, kernel='triang')).tolist()
	[0.0, 5.0, 10.0, 5.0, 0.0]
	'''
	mode = 'constant' if cfg.edge == 'truncate' else 'reflect'
	return convolve1d(counts.asarray().astype(np.float64), kernel_window(cfg),
		mode=mode, cval=0.0)

class WeightVector:
	r'''
	Immutable per-sample training weights, each positive and finite

	Do not instantiate directly, instead use :func:`weight_vector`.
	'''

	__slots__ = ('_values',)

	if not sphinx_build:
		_values: np.ndarray

	def __new__(cls, _values):
		self = super().__new__(cls)
		self._values = _values
		return self

	@property
	def values(self) -> np.ndarray:
		return self._values

	def __len__(self) -> int:
		return self._values.shape[0]

	def __iter__(self) -> Iterator[float]:
		return iter(self._values.tolist())

	def __getitem__(self, index:int) -> float:
		return float(self._values[index])

	def mean(self) -> float:
		return float(np.mean(self._values))

	def __eq__(self, other) -> bool:
		if not isinstance(other, WeightVector):
			return NotImplemented
		return bool(np.array_equal(self._values, other._values))

	def __ne__(self, other) -> bool:
		result = self.__eq__(other)
		if result is NotImplemented: return NotImplemented
		return not result

	def __hash__(self) -> int:
		return hash(self._values.tobytes())

	def __repr__(self) -> str:
		return 'weight_vector({})'.format(self._values.tolist())

	def __reduce__(self):
		return weight_vector, (self._values.tolist(),)

def weight_vector(values:Any) -> WeightVector:
	r'''
	Create a :class:`WeightVector`

	>>> weight_vector([0.5, 2.0])
	weight_vector([0.5, 2.0])
	>>> weight_vector([0.0])
	Traceback (most recent call last):
	...
	ValueError: weights must be positive
	'''
	array = np.asarray(values, dtype=np.float64)
	if array.ndim != 1:
		raise ValueError('weights must be a vector')
	check_finite('weights', array)
	if np.any(array <= 0.0):
		raise ValueError('weights must be positive')
	return WeightVector(frozen(array))

def _values(weights:Union[WeightVector, Any]) -> np.ndarray:
	if isinstance(weights, WeightVector):
		return weights.values
	return np.asarray(weights, dtype=np.float64)

def uniform_weights(n:int) -> WeightVector:
	r'''
	All-ones weights, the vanilla scheme

	>>> uniform_weights(3)
	weight_vector([1.0, 1.0, 1.0])
	'''
	return WeightVector(frozen(np.ones(n)))

def lds_weights(train:Dataset, spec:BinSpec=BinSpec(),
		cfg:KernelConfig=KernelConfig()) -> WeightVector:
	r'''
	Inverse smoothed label density of every training sample, mean 1

	Samples in the same bin share a weight.

	>>> data = Dataset.fromsamples([Sample(features=[0.0], label=y)
	... 	for y in [10.5] * 9 + [80.5]])
	>>> w = lds_weights(data)
	>>> round(w[9] / w[0], 9), round(w.mean(), 9)
	(9.0, 1.0)
	'''
	if len(train) == 0:
		raise ValueError('cannot weight an empty training set')
	density = smoothed_counts(count_bins(train, spec), cfg)[bin_indices(train.labels, spec)]
	if np.any(density <= 0.0):
		raise ValueError('occupied bin with zero smoothed density')
	raw = 1.0 / density
	if np.all(raw == raw[0]):
		return uniform_weights(len(train))
	weights = raw * (len(train) / np.sum(raw))
	logger.debug('lds weights over %d samples: min=%.6g max=%.6g',
		len(train), float(weights.min()), float(weights.max()))
	return weight_vector(weights)

_TINY: float = float(np.finfo(np.float64).tiny)

def focal_weights(losses:Any, cfg:FocalConfig=FocalConfig()) -> WeightVector:
	r'''
	Difficulty weights ``sigmoid(alpha * loss) ** gamma`` in (0, 1]

	Not normalized; with ``gamma = 0`` every weight is exactly 1. Weights that
	would underflow under a large ``gamma`` are floored at the smallest
	positive double.

	>>> focal_weights([0.0, 10.0]).values.round(4).tolist()
	[0.5, 0.8808]
	>>> focal_weights([3.0, 7.0], FocalConfig(gamma=0)).values.tolist()
	[1.0, 1.0]
	'''
	losses = check_finite('losses', np.asarray(losses, dtype=np.float64))
	if np.any(losses < 0.0):
		raise ValueError('losses must be non-negative')
	return weight_vector(np.maximum(expit(cfg.alpha * losses) ** cfg.gamma, _TINY))

def combine_weights(a:WeightVector, b:WeightVector) -> WeightVector:
	r'''
	Elementwise product of two weightings

	>>> combine_weights(weight_vector([2.0, 0.5]), weight_vector([0.5, 2.0]))
	weight_vector([1.0, 1.0])
	'''
	check_same_length(a=a, b=b)
	return weight_vector(_values(a) * _values(b))

def weighted_loss(preds:Any, labels:Any, weights:Union[WeightVector, Any, None]=None,
		base:str='l1') -> float:
	r'''
	Weighted mean of per-sample L1 losses, ``(1/N) sum w_i |y_i - p_i|``

	>>> weighted_loss([10.0], [12.0], [3.0])
	6.0
	>>> weighted_loss([0.0, 10.0], [4.0, 10.0])
	2.0
	'''
	if base != 'l1':
		raise ValueError('unsupported base loss {!r}'.format(base))
	preds = check_finite('preds', np.asarray(preds, dtype=np.float64))
	labels = check_finite('labels', np.asarray(labels, dtype=np.float64))
	size = check_same_length(preds=preds, labels=labels)
	if size == 0:
		raise ValueError('weighted loss of an empty batch')
	losses = np.abs(labels - preds)
	if weights is None:
		return float(np.sum(losses) / size)
	values = check_finite('weights', _values(weights))
	check_same_length(preds=preds, weights=values)
	return float(np.sum(values * losses) / size)

def static_weights(scheme:Scheme, train:Dataset, spec:BinSpec=BinSpec(),
		cfg:KernelConfig=KernelConfig()) -> WeightVector:
	r'''
	The label-only part of a scheme's weights: LDS or uniform
	'''
	if scheme.uses_lds:
		return lds_weights(train, spec, cfg)
	return uniform_weights(len(train))

__all__: Tuple[str, ...] = ('Scheme', 'parse_schemes', 'FocalConfig', 'KernelConfig',
	'KERNELS', 'EDGES', 'gaussian_kernel', 'kernel_window', 'smoothed_counts',
	'WeightVector', 'weight_vector', 'uniform_weights', 'lds_weights',
	'focal_weights', 'combine_weights', 'weighted_loss', 'static_weights')
