from imbalanced_yield import \
	MlpConfig, TrainedModel, trained_model, loss_gradient, train, predict, predict_many, \
	save_model, load_model, Scheme, FocalConfig, KernelConfig, SynthConfig, \
	generate_synthetic, dataset, DimensionError, DivergenceError
from imbalanced_yield._model import forward, init_params, standardization

import hypothesis
from hypothesis import given, strategies as st
from pyrsistent import InvariantException

import json
import numpy as np
import pickle
import pytest

def linear_data(n=200, seed=0):
	rng = np.random.default_rng(seed)
	x = rng.uniform(0, 50, size=n)
	return dataset(x[:, None], 2 * x)

def uniform_label_data(n_per_bin=50, seed=0):
	rng = np.random.default_rng(seed)
	labels = np.repeat(np.arange(5, 100, 10) + 0.5, n_per_bin)
	features = np.column_stack([labels + rng.normal(0, 5, size=labels.shape[0]) for _ in range(4)])
	return dataset(features, labels)

def trajectory(data, scheme, cfg, **kwargs):
	steps = []
	model = train(data, scheme, cfg, on_epoch=lambda epoch, loss, params:
		steps.append((epoch, loss, params)), **kwargs)
	return model, steps

def max_distance(params1, params2):
	return max(float(np.max(np.abs(a - b)))
		for layer1, layer2 in zip(params1, params2)
		for a, b in zip(layer1, layer2))

def test_config():
	cfg = MlpConfig()
	assert cfg.hidden_sizes == (64, 64)
	assert (cfg.epochs, cfg.batch_size, cfg.learning_rate) == (200, 32, 1e-3)
	assert (cfg.beta1, cfg.beta2, cfg.eps) == (0.9, 0.999, 1e-8)
	assert cfg.layer_sizes(8) == (8, 64, 64, 1)
	assert MlpConfig(hidden_sizes=[]).layer_sizes(3) == (3, 1)
	for kwargs in [dict(hidden_sizes=[0]), dict(epochs=0), dict(batch_size=0),
			dict(learning_rate=0.0), dict(beta1=1.0), dict(activation='tanh'), dict(seed=-1)]:
		with pytest.raises(InvariantException):
			MlpConfig(**kwargs)

def test_init_params():
	cfg = MlpConfig(hidden_sizes=[5, 3])
	params = init_params(4, cfg, np.random.default_rng(0), output_bias=42.0)
	assert [w.shape for w, _ in params] == [(4, 5), (5, 3), (3, 1)]
	assert [b.tolist() for _, b in params] == [[0.0] * 5, [0.0] * 3, [42.0]]
	again = init_params(4, cfg, np.random.default_rng(0), output_bias=42.0)
	assert max_distance(params, again) == 0.0

def find_network(dim, batch, hidden, margin=5e-3):
	cfg = MlpConfig(hidden_sizes=hidden)
	for seed in range(1000):
		rng = np.random.default_rng(seed)
		params = init_params(dim, cfg, rng)
		features = rng.normal(size=(batch, dim))
		hidden_values, preacts = features, []
		for weights, bias in params[:-1]:
			preact = hidden_values @ weights + bias
			preacts.append(preact)
			hidden_values = np.maximum(preact, 0.0)
		if all(np.min(np.abs(z)) > margin for z in preacts):
			return params, features, rng
	raise AssertionError('no network away from relu kinks') # pragma: no cover

def test_gradient_check():
	h = 1e-4
	params, features, rng = find_network(dim=6, batch=20, hidden=[8, 6])
	preds = forward(params, features)
	residuals = rng.choice([-1.0, 1.0], size=preds.shape[0]) * rng.uniform(0.5, 2.0, size=preds.shape[0])
	labels = preds - residuals
	assert np.min(np.abs(preds - labels)) > 0.1
	weights = rng.uniform(0.5, 2.0, size=preds.shape[0])
	_, grads = loss_gradient(params, features, labels, weights)
	checked = 0
	for n, (layer, grad) in enumerate(zip(params, grads)):
		for p, (array, analytic) in enumerate(zip(layer, grad)):
			assert analytic.shape == array.shape
			for index in np.ndindex(array.shape):
				def loss_at(delta):
					shifted = [[a.copy() for a in l] for l in params]
					shifted[n][p][index] += delta
					return loss_gradient(tuple(map(tuple, shifted)), features, labels, weights)[0]
				numeric = (loss_at(h) - loss_at(-h)) / (2 * h)
				exact = float(analytic[index])
				assert abs(numeric - exact) <= 1e-4 * max(abs(numeric), abs(exact), 1e-6)
				checked += 1
	assert checked >= 100

def test_loss_gradient_weights():
	params, features, rng = find_network(dim=3, batch=10, hidden=[4])
	labels = rng.uniform(0, 100, size=10)
	loss1, grads1 = loss_gradient(params, features, labels)
	loss2, grads2 = loss_gradient(params, features, labels, np.full(10, 2.0))
	assert loss2 == pytest.approx(2 * loss1, rel=1e-12)
	for layer1, layer2 in zip(grads1, grads2):
		for a, b in zip(layer1, layer2):
			assert np.allclose(2 * a, b, rtol=1e-12, atol=0.0)
	with pytest.raises(ValueError):
		loss_gradient(params, features, labels[:5])
	with pytest.raises(ValueError):
		loss_gradient(params, features[:0], labels[:0])

def test_loss_gradient_zero_residual():
	params = ((np.array([[1.0]]), np.array([0.0])),)
	loss, ((gw, gb),) = loss_gradient(params, [[3.0]], [3.0])
	assert loss == 0.0
	assert gw.tolist() == [[0.0]] and gb.tolist() == [0.0]

def test_standardization():
	features = np.array([[1.0, 7.0], [3.0, 7.0], [5.0, 7.0]])
	mean, scale = standardization(features)
	assert mean.tolist() == [3.0, 7.0]
	assert scale[0] == pytest.approx(np.sqrt(8 / 3))
	assert scale[1] == 1.0

def test_focal_gamma_zero_matches_vanilla():
	data = generate_synthetic(SynthConfig(n=500, dim=4, seed=3))
	cfg = MlpConfig(hidden_sizes=[16, 16], epochs=5, seed=9)
	vanilla, plain = trajectory(data, Scheme.VANILLA, cfg)
	focal, weighted = trajectory(data, Scheme.FOCAL, cfg, focal=FocalConfig(gamma=0.0))
	assert len(plain) == len(weighted) == 5
	for (epoch1, loss1, params1), (epoch2, loss2, params2) in zip(plain, weighted):
		assert epoch1 == epoch2
		assert abs(loss1 - loss2) < 1e-12
		assert max_distance(params1, params2) < 1e-12
	assert vanilla.training_log == focal.training_log

def test_lds_uniform_labels_matches_vanilla():
	data = uniform_label_data()
	assert len(data) == 500
	cfg = MlpConfig(hidden_sizes=[16, 16], epochs=5, seed=4)
	_, plain = trajectory(data, Scheme.VANILLA, cfg)
	for scheme, kernel in [(Scheme.LDS, KernelConfig()),
			(Scheme.FOCAL_LDS, KernelConfig(kernel='triang', ell=3))]:
		_, weighted = trajectory(data, scheme, cfg, kernel=kernel, focal=FocalConfig(gamma=0.0))
		for (_, _, params1), (_, _, params2) in zip(plain, weighted):
			assert max_distance(params1, params2) < 1e-12

def test_schemes_differ():
	data = generate_synthetic(SynthConfig(n=300, dim=3, seed=1))
	cfg = MlpConfig(hidden_sizes=[8], epochs=3, seed=2)
	vanilla = train(data, Scheme.VANILLA, cfg)
	lds = train(data, Scheme.LDS, cfg)
	focal = train(data, Scheme.FOCAL, cfg)
	assert vanilla != lds
	assert vanilla != focal
	assert lds.scheme is Scheme.LDS

def test_train_deterministic():
	data = generate_synthetic(SynthConfig(n=200, dim=3, seed=5))
	cfg = MlpConfig(hidden_sizes=[8, 8], epochs=4, seed=7)
	model = train(data, 'focal+lds', cfg)
	assert train(data, 'focal+lds', cfg) == model
	assert train(data, 'focal+lds', cfg.set(seed=8)) != model
	assert len(model.training_log) == 4
	assert all(np.isfinite(model.training_log))

def test_train_linear():
	data = linear_data()
	cfg = MlpConfig(hidden_sizes=[], epochs=200, learning_rate=0.05, seed=0)
	model = train(data, Scheme.VANILLA, cfg)
	preds = predict_many(model, data.features)
	assert float(np.mean(np.abs(preds - data.labels))) < 2.0
	assert model.training_log[-1] < model.training_log[0]
	assert predict(model, [25.0]) == pytest.approx(50.0, abs=3.0)

def test_loss_decreases():
	data = generate_synthetic(SynthConfig(n=300, dim=4, seed=6))
	decreased = 0
	for seed in range(10):
		cfg = MlpConfig(hidden_sizes=[16], epochs=30, learning_rate=1e-2, seed=seed)
		log = train(data, Scheme.VANILLA, cfg).training_log
		decreased += log[-1] < log[0]
	assert decreased >= 9

def test_on_epoch():
	data = linear_data(n=50)
	seen = []
	model = train(data, Scheme.VANILLA, MlpConfig(hidden_sizes=[4], epochs=3),
		on_epoch=lambda epoch, loss, params: seen.append((epoch, loss)))
	assert [epoch for epoch, _ in seen] == [1, 2, 3]
	assert tuple(loss for _, loss in seen) == model.training_log

@pytest.mark.parametrize('scheme', list(Scheme))
def test_divergence(scheme):
	data = generate_synthetic(SynthConfig(n=100, dim=4, seed=0))
	cfg = MlpConfig(hidden_sizes=[8], epochs=20, learning_rate=1e308)
	with np.errstate(all='ignore'):
		with pytest.raises(DivergenceError) as info:
			train(data, scheme, cfg)
	assert 1 <= info.value.epoch <= 20
	assert not np.isfinite(info.value.loss)
	assert 'epoch {}'.format(info.value.epoch) in str(info.value)

def test_train_large_gamma():
	data = generate_synthetic(SynthConfig(n=100, dim=4, seed=0))
	cfg = MlpConfig(hidden_sizes=[8], epochs=3)
	model = train(data, Scheme.FOCAL, cfg, focal=FocalConfig(gamma=2000))
	assert len(model.training_log) == 3
	assert all(np.isfinite(model.training_log))

def test_train_empty():
	with pytest.raises(ValueError):
		train(dataset([], [], dim=2))

def test_zero_output_layer():
	rng = np.random.default_rng(0)
	params = [(rng.normal(size=(3, 4)), np.zeros(4)), (np.zeros((4, 1)), [37.5])]
	model = trained_model(params, MlpConfig(hidden_sizes=[4]))
	assert predict(model, [1.0, -2.0, 3.0]) == 37.5
	assert predict_many(model, rng.normal(size=(5, 3))).tolist() == [37.5] * 5

def test_output_clamp():
	params = [(np.zeros((1, 1)), [150.0])]
	clamped = trained_model(params, MlpConfig(hidden_sizes=[]))
	raw = trained_model(params, MlpConfig(hidden_sizes=[], output_clamp=False))
	assert predict(clamped, [0.0]) == 100.0
	assert predict(raw, [0.0]) == 150.0

def test_predict_dimension():
	model = trained_model([(np.zeros((2, 1)), [1.0])], MlpConfig(hidden_sizes=[]))
	with pytest.raises(DimensionError):
		predict(model, [1.0, 2.0, 3.0])
	with pytest.raises(DimensionError):
		predict_many(model, np.zeros((4, 3)))
	assert predict_many(model, np.zeros((0, 2))).shape == (0,)

def test_trained_model_errors():
	with pytest.raises(DimensionError):
		trained_model([], MlpConfig(hidden_sizes=[]))
	with pytest.raises(DimensionError):
		trained_model([(np.zeros((2, 1)), [0.0])], MlpConfig(hidden_sizes=[3]))
	with pytest.raises(DimensionError):
		trained_model([(np.zeros((2, 2)), [0.0, 0.0])], MlpConfig(hidden_sizes=[]))
	with pytest.raises(DimensionError):
		trained_model([(np.zeros((2, 1)), [0.0])], MlpConfig(hidden_sizes=[]), feature_mean=[0.0])
	with pytest.raises(ValueError):
		trained_model([(np.full((2, 1), np.nan), [0.0])], MlpConfig(hidden_sizes=[]))
	with pytest.raises(ValueError):
		trained_model([(np.zeros((2, 1)), [0.0])], MlpConfig(hidden_sizes=[]), feature_scale=[1.0, 0.0])

@pytest.fixture(scope='module')
def small_model():
	data = generate_synthetic(SynthConfig(n=120, dim=3, seed=2))
	return train(data, Scheme.FOCAL_LDS, MlpConfig(hidden_sizes=[6, 5], epochs=3, seed=1)), data

def test_save_load(tmp_path, small_model):
	model, data = small_model
	path = tmp_path / 'model.json'
	save_model(model, path)
	loaded = load_model(path)
	assert loaded == model
	assert np.array_equal(predict_many(loaded, data.features), predict_many(model, data.features))
	assert load_model(path, dim=3) == model
	with pytest.raises(DimensionError):
		load_model(path, dim=4)

@pytest.mark.parametrize('key, value', [
	('format_version', 99),
	('format', 'something-else'),
])
def test_load_bad_header(tmp_path, small_model, key, value):
	model, _ = small_model
	path = tmp_path / 'model.json'
	save_model(model, path)
	payload = json.loads(path.read_text())
	payload[key] = value
	path.write_text(json.dumps(payload))
	with pytest.raises(ValueError):
		load_model(path)

def test_load_bad_shapes(tmp_path, small_model):
	model, _ = small_model
	path = tmp_path / 'model.json'
	save_model(model, path)
	payload = json.loads(path.read_text())
	payload['layers'][1]['bias'] = payload['layers'][1]['bias'][:-1]
	path.write_text(json.dumps(payload))
	with pytest.raises(DimensionError):
		load_model(path)

def test_model_reduce(small_model):
	model, _ = small_model
	assert pickle.loads(pickle.dumps(model)) == model
	assert repr(model) == 'TrainedModel(dim=3, layers=(3, 6, 5, 1), scheme=\'focal+lds\', epochs=3)'
	assert isinstance(model, TrainedModel)
	with pytest.raises(TypeError):
		hash(model)
