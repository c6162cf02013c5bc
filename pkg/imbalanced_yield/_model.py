from __future__ import annotations
from typing import Any, Callable, Iterable, List, Optional, Tuple, Union

import json
import logging
import math
import os

import numpy as np
from pyrsistent import PClass, field

from ._binning import BinSpec
from ._dataset import Dataset, LABEL_MAX, LABEL_MIN, UINT64_MAX
from ._reweight import FocalConfig, KernelConfig, Scheme, focal_weights, static_weights
from ._util import DimensionError, DivergenceError, check_finite, \
	check_same_length, frozen, sphinx_build

logger = logging.getLogger(__name__)

Layer = Tuple[np.ndarray, np.ndarray]
Params = Tuple[Layer, ...]

MODEL_FORMAT: str = 'imbalanced-yield-mlp'
MODEL_FORMAT_VERSION: int = 1

def _sizes_factory(values:Iterable[Any]) -> Tuple[int, ...]:
	return tuple(int(x) for x in values)

def _positive(name:str) -> Callable[[Any], Tuple[bool, str]]:
	return lambda x: (math.isfinite(x) and x > 0, name + ' must be positive')

class MlpConfig(PClass):
	r'''
	Architecture and optimizer settings of the feed-forward regressor

	Hidden layers use ReLU; updates follow Adam with ``beta1``, ``beta2``
	and ``eps``. ``output_clamp`` clips predictions to [0, 100] at
	inference only.

	>>> MlpConfig().hidden_sizes
	(64, 64)
	'''
	hidden_sizes = field(type=tuple, initial=(64, 64), factory=_sizes_factory,
		invariant=lambda xs: (all(x > 0 for x in xs), 'hidden sizes must be positive'))
	activation = field(type=str, initial='relu',
		invariant=lambda a: (a == 'relu', 'only relu activation is supported'))
	epochs = field(type=int, initial=200, factory=int, invariant=_positive('epochs'))
	batch_size = field(type=int, initial=32, factory=int, invariant=_positive('batch_size'))
	learning_rate = field(type=float, initial=1e-3, factory=float,
		invariant=_positive('learning_rate'))
	beta1 = field(type=float, initial=0.9, factory=float,
		invariant=lambda b: (0.0 <= b < 1.0, 'beta1 must lie in [0, 1)'))
	beta2 = field(type=float, initial=0.999, factory=float,
		invariant=lambda b: (0.0 <= b < 1.0, 'beta2 must lie in [0, 1)'))
	eps = field(type=float, initial=1e-8, factory=float, invariant=_positive('eps'))
	seed = field(type=int, initial=0, factory=int,
		invariant=lambda s: (0 <= s <= UINT64_MAX, 'seed must be a 64-bit unsigned integer'))
	output_clamp = field(type=bool, initial=True, factory=bool)

	def layer_sizes(self, dim:int) -> Tuple[int, ...]:
		return (dim, *self.hidden_sizes, 1)

def init_params(dim:int, cfg:MlpConfig, rng:np.random.Generator,
		output_bias:float=0.0) -> Params:
	r'''
	He-initialized weights, zero hidden biases and the given output bias
	'''
	sizes = cfg.layer_sizes(dim)
	layers: List[Layer] = []
	for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
		weights = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
		layers.append((weights, np.zeros(fan_out)))
	layers[-1] = (layers[-1][0], np.full(1, float(output_bias)))
	return tuple(layers)

def _forward(params:Params, features:np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], List[np.ndarray]]:
	inputs, preacts = [], []
	hidden = features
	last = len(params) - 1
	for n, (weights, bias) in enumerate(params):
		inputs.append(hidden)
		out = hidden @ weights + bias
		if n == last:
			return out[:, 0], inputs, preacts
		preacts.append(out)
		hidden = np.maximum(out, 0.0)
	raise ValueError('network has no layers')

def _backward(params:Params, inputs:List[np.ndarray], preacts:List[np.ndarray],
		residuals:np.ndarray, weights:np.ndarray) -> Params:
	delta = (weights * np.sign(residuals) / residuals.shape[0])[:, None]
	grads: List[Layer] = []
	for n in range(len(params) - 1, -1, -1):
		grads.append((inputs[n].T @ delta, delta.sum(axis=0)))
		if n > 0:
			delta = (delta @ params[n][0].T) * (preacts[n - 1] > 0.0)
	return tuple(reversed(grads))

def forward(params:Params, features:Any) -> np.ndarray:
	r'''
	Raw network output for a batch of (already standardized) features
	'''
	return _forward(params, np.atleast_2d(np.asarray(features, dtype=np.float64)))[0]

def loss_gradient(params:Params, features:Any, labels:Any,
		weights:Optional[Any]=None) -> Tuple[float, Params]:
	r'''
	Weighted L1 loss of a batch and its exact backpropagated subgradient

	The loss is ``(1/N) sum w_i |p_i - y_i|``; the subgradient of ``|r|``
	at ``r = 0`` is taken as 0. Weights are constants, no gradient flows
	through them.

	>>> params = ((np.array([[2.0]]), np.array([0.0])),)
	>>> loss, ((gw, gb),) = loss_gradient(params, [[1.5]], [1.0], [3.0])
	>>> loss, gw.tolist(), gb.tolist()
	(6.0, [[4.5]], [3.0])
	'''
	features = np.atleast_2d(np.asarray(features, dtype=np.float64))
	labels = np.asarray(labels, dtype=np.float64)
	size = check_same_length(features=features, labels=labels)
	if size == 0:
		raise ValueError('gradient of an empty batch')
	weights = np.ones(size) if weights is None else np.asarray(weights, dtype=np.float64)
	check_same_length(labels=labels, weights=weights)
	preds, inputs, preacts = _forward(params, features)
	residuals = preds - labels
	loss = float(np.sum(weights * np.abs(residuals)) / size)
	return loss, _backward(params, inputs, preacts, residuals, weights)

class TrainedModel:
	r'''
	Immutable trained regressor: parameters, feature standardization
	constants, configuration and per-epoch training losses

	Do not instantiate directly, instead use :func:`train`,
	:func:`load_model` or :func:`trained_model`.
	'''

	__slots__ = ('_params', '_config', '_feature_mean', '_feature_scale',
		'_training_log', '_scheme')

	if not sphinx_build:
		_params: Params
		_config: MlpConfig
		_feature_mean: np.ndarray
		_feature_scale: np.ndarray
		_training_log: Tuple[float, ...]
		_scheme: Scheme

	def __new__(cls, _params, _config, _feature_mean, _feature_scale,
			_training_log, _scheme):
		self = super().__new__(cls)
		self._params = _params
		self._config = _config
		self._feature_mean = _feature_mean
		self._feature_scale = _feature_scale
		self._training_log = _training_log
		self._scheme = _scheme
		return self

	@property
	def params(self) -> Params:
		return self._params

	@property
	def config(self) -> MlpConfig:
		return self._config

	@property
	def feature_mean(self) -> np.ndarray:
		return self._feature_mean

	@property
	def feature_scale(self) -> np.ndarray:
		return self._feature_scale

	@property
	def training_log(self) -> Tuple[float, ...]:
		return self._training_log

	@property
	def scheme(self) -> Scheme:
		return self._scheme

	@property
	def dim(self) -> int:
		return self._feature_mean.shape[0]

	def standardize(self, features:np.ndarray) -> np.ndarray:
		return (features - self._feature_mean) / self._feature_scale

	def __eq__(self, other) -> bool:
		if not isinstance(other, TrainedModel):
			return NotImplemented
		return self._config == other._config \
			and self._scheme == other._scheme \
			and self._training_log == other._training_log \
			and bool(np.array_equal(self._feature_mean, other._feature_mean)) \
			and bool(np.array_equal(self._feature_scale, other._feature_scale)) \
			and len(self._params) == len(other._params) \
			and all(np.array_equal(w1, w2) and np.array_equal(b1, b2)
				for (w1, b1), (w2, b2) in zip(self._params, other._params))

	def __ne__(self, other) -> bool:
		result = self.__eq__(other)
		if result is NotImplemented: return NotImplemented
		return not result

	__hash__ = None # type: ignore

	def __repr__(self) -> str:
		return 'TrainedModel(dim={}, layers={}, scheme={!r}, epochs={})'.format(
			self.dim, self._config.layer_sizes(self.dim), self._scheme.value,
			len(self._training_log))

	def __reduce__(self):
		return _restore_model, (model_to_dict(self),)

def trained_model(params:Iterable[Tuple[Any, Any]], config:MlpConfig=MlpConfig(),
		feature_mean:Any=None, feature_scale:Any=None,
		training_log:Iterable[float]=(), scheme:Union[str, Scheme]=Scheme.VANILLA) -> TrainedModel:
	r'''
	Assemble a :class:`TrainedModel` from explicit parameters

	Omitted standardization constants default to the identity transform.

	:raises DimensionError: if the layer shapes do not chain or do not
		match ``config.hidden_sizes``
	:raises ValueError: if a value is not finite

	>>> model = trained_model([(np.zeros((2, 1)), [42.0])], MlpConfig(hidden_sizes=[]))
	>>> predict(model, [3.0, -1.0])
	42.0
	'''
	layers = tuple((frozen(w), frozen(b)) for w, b in params)
	if not layers:
		raise DimensionError('a model needs at least one layer')
	dim = layers[0][0].shape[0] if layers[0][0].ndim == 2 else -1
	expected = config.layer_sizes(dim)
	if len(layers) != len(expected) - 1:
		raise DimensionError('expected {} layers, got {}'.format(len(expected) - 1, len(layers)))
	for n, (weights, bias) in enumerate(layers):
		shape = (expected[n], expected[n + 1])
		if weights.shape != shape or bias.shape != (shape[1],):
			raise DimensionError('layer {} has shapes {} and {}, expected {} and {}'.format(
				n, weights.shape, bias.shape, shape, (shape[1],)))
		check_finite('layer {} weights'.format(n), weights)
		check_finite('layer {} bias'.format(n), bias)
	mean = frozen(np.zeros(dim) if feature_mean is None else feature_mean)
	scale = frozen(np.ones(dim) if feature_scale is None else feature_scale)
	if mean.shape != (dim,) or scale.shape != (dim,):
		raise DimensionError('standardization constants must have length {}'.format(dim))
	check_finite('feature_mean', mean)
	check_finite('feature_scale', scale)
	if np.any(scale <= 0.0):
		raise ValueError('feature_scale must be positive')
	log = tuple(float(x) for x in training_log)
	return TrainedModel(layers, config, mean, scale, log, Scheme(scheme))

def standardization(features:np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
	r'''
	Per-dimension mean and standard deviation, with constant dimensions
	given a scale of 1

	>>> mean, scale = standardization(np.array([[1.0, 5.0], [3.0, 5.0]]))
	>>> mean.tolist(), scale.tolist()
	([2.0, 5.0], [1.0, 1.0])
	'''
	mean = features.mean(axis=0)
	scale = features.std(axis=0)
	scale[~(scale > 0.0)] = 1.0
	return mean, scale

EpochCallback = Callable[[int, float, Params], None]

def train(data:Dataset, scheme:Union[str, Scheme]=Scheme.VANILLA,
		cfg:MlpConfig=MlpConfig(), bin_spec:BinSpec=BinSpec(),
		kernel:KernelConfig=KernelConfig(), focal:FocalConfig=FocalConfig(),
		on_epoch:Optional[EpochCallback]=None) -> TrainedModel:
	r'''
	Fit the regressor by mini-batch Adam on the weighted L1 objective

	LDS weights are computed once from the training labels; Focal weights
	are recomputed for every batch from the current residuals and treated
	as constants. Each epoch visits the samples in a fresh permutation
	drawn from the seeded generator, so identical inputs give identical
	parameters. ``on_epoch`` receives the 1-based epoch, its mean weighted
	loss and a copy of the parameters.

	:raises DivergenceError: if a batch or an epoch produces a non-finite loss
	'''
	scheme = Scheme(scheme)
	if len(data) == 0:
		raise ValueError('cannot train on an empty dataset')
	rng = np.random.default_rng(cfg.seed)
	mean, scale = standardization(data.features)
	features = (data.features - mean) / scale
	labels = data.labels
	fixed = static_weights(scheme, data, bin_spec, kernel).values
	params = init_params(data.dim, cfg, rng, output_bias=float(np.median(labels)))
	moments = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
	velocities = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
	size = len(data)
	step = 0
	log: List[float] = []
	logger.info('training %s model on %d samples (layers=%s, epochs=%d)', scheme.value,
		size, cfg.layer_sizes(data.dim), cfg.epochs)
	for epoch in range(1, cfg.epochs + 1):
		order = rng.permutation(size)
		total = 0.0
		for start in range(0, size, cfg.batch_size):
			index = order[start:start + cfg.batch_size]
			batch, targets, weights = features[index], labels[index], fixed[index]
			preds, inputs, preacts = _forward(params, batch)
			residuals = preds - targets
			if not np.all(np.isfinite(residuals)):
				raise DivergenceError(epoch, float(np.sum(np.abs(residuals))))
			if scheme.uses_focal:
				weights = weights * focal_weights(np.abs(residuals), focal).values
			total += float(np.sum(weights * np.abs(residuals)))
			grads = _backward(params, inputs, preacts, residuals, weights)
			step += 1
			params = _adam_step(params, grads, moments, velocities, step, cfg)
		loss = total / size
		if not math.isfinite(loss):
			raise DivergenceError(epoch, loss)
		log.append(loss)
		logger.debug('epoch %d/%d: weighted loss %.6f', epoch, cfg.epochs, loss)
		if on_epoch is not None:
			on_epoch(epoch, loss, tuple((w.copy(), b.copy()) for w, b in params))
	logger.info('trained %s model: loss %.4f -> %.4f', scheme.value, log[0], log[-1])
	return trained_model(params, cfg, mean, scale, log, scheme)

def _adam_step(params:Params, grads:Params, moments:List[Layer],
		velocities:List[Layer], step:int, cfg:MlpConfig) -> Params:
	correct1 = 1.0 - cfg.beta1 ** step
	correct2 = 1.0 - cfg.beta2 ** step
	updated: List[Layer] = []
	for n, (layer, grad) in enumerate(zip(params, grads)):
		new: List[np.ndarray] = []
		moment: List[np.ndarray] = []
		velocity: List[np.ndarray] = []
		for p, g, m, v in zip(layer, grad, moments[n], velocities[n]):
			m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
			v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
			new.append(p - cfg.learning_rate * (m / correct1) / (np.sqrt(v / correct2) + cfg.eps))
			moment.append(m)
			velocity.append(v)
		updated.append((new[0], new[1]))
		moments[n] = (moment[0], moment[1])
		velocities[n] = (velocity[0], velocity[1])
	return tuple(updated)

def predict_many(model:TrainedModel, features:Any) -> np.ndarray:
	r'''
	Predictions for a batch of raw feature vectors

	:raises DimensionError: if the feature length differs from the model's
	'''
	features = np.asarray(features, dtype=np.float64)
	if features.ndim != 2 or features.shape[1] != model.dim:
		raise DimensionError('expected features of length {}, got shape {}'.format(
			model.dim, features.shape))
	if features.shape[0] == 0:
		return np.empty(0)
	preds = _forward(model.params, model.standardize(features))[0]
	if model.config.output_clamp:
		preds = np.clip(preds, LABEL_MIN, LABEL_MAX)
	return preds

def predict(model:TrainedModel, features:Any) -> float:
	r'''
	Prediction for a single raw feature vector

	:raises DimensionError: if the feature length differs from the model's
	'''
	features = np.asarray(features, dtype=np.float64)
	if features.ndim != 1:
		raise DimensionError('expected a single feature vector')
	return float(predict_many(model, features[None, :])[0])

def model_to_dict(model:TrainedModel) -> dict:
	return {
		'format': MODEL_FORMAT,
		'format_version': MODEL_FORMAT_VERSION,
		'scheme': model.scheme.value,
		'config': dict(model.config.serialize()),
		'feature_mean': model.feature_mean.tolist(),
		'feature_scale': model.feature_scale.tolist(),
		'layers': [{'weights': w.tolist(), 'bias': b.tolist()} for w, b in model.params],
		'training_log': list(model.training_log),
	}

def model_from_dict(payload:dict, dim:Optional[int]=None) -> TrainedModel:
	r'''
	Rebuild a model from :func:`model_to_dict` output

	:raises ValueError: on an unknown format or version
	:raises DimensionError: on inconsistent shapes or, when ``dim`` is
		given, a different feature dimension
	'''
	if payload.get('format') != MODEL_FORMAT:
		raise ValueError('not a model artifact: format={!r}'.format(payload.get('format')))
	if payload.get('format_version') != MODEL_FORMAT_VERSION:
		raise ValueError('unsupported model format version {!r}'.format(
			payload.get('format_version')))
	config = MlpConfig.create(payload['config'])
	layers = [(np.asarray(layer['weights'], dtype=np.float64).reshape(
			len(layer['weights']), -1), layer['bias']) for layer in payload['layers']]
	model = trained_model(layers, config, payload['feature_mean'],
		payload['feature_scale'], payload['training_log'], payload['scheme'])
	if dim is not None and model.dim != dim:
		raise DimensionError('model expects dim={}, data has dim={}'.format(model.dim, dim))
	return model

def _restore_model(payload:dict) -> TrainedModel:
	return model_from_dict(payload)

def save_model(model:TrainedModel, path:Union[str, os.PathLike]) -> None:
	r'''
	Write a model artifact as JSON
	'''
	with open(path, 'w', encoding='utf-8') as handle:
		json.dump(model_to_dict(model), handle, sort_keys=True)
		handle.write('\n')
	logger.info('saved model (dim=%d) to %s', model.dim, path)

def load_model(path:Union[str, os.PathLike], dim:Optional[int]=None) -> TrainedModel:
	r'''
	Read a model artifact written by :func:`save_model`

	:raises DimensionError: if ``dim`` is given and differs from the model's
	'''
	with open(path, 'r', encoding='utf-8') as handle:
		payload = json.load(handle)
	return model_from_dict(payload, dim)

__all__: Tuple[str, ...] = ('MlpConfig', 'Params', 'init_params', 'forward',
	'loss_gradient', 'TrainedModel', 'trained_model', 'standardization', 'train',
	'predict', 'predict_many', 'model_to_dict', 'model_from_dict',
	'save_model', 'load_model')
