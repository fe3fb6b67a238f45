import math

import numpy as np
import pytest

from ml.cnn_model import TINY_ARCHITECTURE, CnnModel, bce_loss, predict, sigmoid
from ml.gradient_check import check_gradients, relative_error
from ml.layers import Conv2D, Dense, MaxPool2D, build_layers
from backend.utils.errors import ContractError, DataValidationError


def random_batch(n=4, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, size=(n, 24, 24, 3))


class TestLayers:
    def test_conv_matches_direct_sum(self):
        rng = np.random.default_rng(1)
        layer = Conv2D(3, 2, 3, rng)
        layer.params['bias'][:] = [0.5, -0.5]
        x = rng.normal(size=(2, 6, 5, 3))
        out = layer.forward(x)
        assert out.shape == (2, 4, 3, 2)
        w = layer.params['weight']
        expected = sum(x[1, 2 + i, 1 + j, c] * w[1, c, i, j] for i in range(3) for j in range(3) for c in range(3))
        assert out[1, 2, 1, 1] == pytest.approx(expected - 0.5)

    def test_maxpool_drops_odd_edge(self):
        pool = MaxPool2D(2)
        x = np.arange(25, dtype=float).reshape(1, 5, 5, 1)
        out = pool.forward(x)
        assert out[..., 0].tolist() == [[[6.0, 8.0], [16.0, 18.0]]]
        dx = pool.backward(np.ones_like(out))
        assert dx.sum() == 4 and dx[0, 4].sum() == 0 and dx[0, :, 4].sum() == 0

    def test_dense_backward_shapes(self):
        layer = Dense(5, 3, np.random.default_rng(0))
        x = np.ones((4, 5))
        layer.forward(x)
        dx = layer.backward(np.ones((4, 3)))
        assert dx.shape == (4, 5)
        assert np.array_equal(layer.grads['bias'], [4.0, 4.0, 4.0])

    def test_bad_architecture(self):
        with pytest.raises(ValueError):
            build_layers([{'type': 'dense', 'units': 2}], (24, 24, 3))
        with pytest.raises(ContractError):
            CnnModel([{'type': 'flatten'}, {'type': 'dense', 'units': 2}])


class TestForward:
    def test_probabilities_in_open_interval(self):
        probabilities = CnnModel(rng_seed=0).forward(random_batch())
        assert probabilities.shape == (4,)
        assert ((probabilities > 0) & (probabilities < 1)).all()

    def test_duplicate_images_match(self):
        batch = random_batch(1)
        probabilities = CnnModel(rng_seed=0).forward(np.concatenate([batch, batch]))
        assert probabilities[0] == probabilities[1]

    def test_zero_model_gives_one_half(self):
        model = CnnModel(zero_init=True)
        assert model.forward(np.zeros((2, 24, 24, 3))).tolist() == [0.5, 0.5]

    def test_tie_predicts_failure(self):
        model = CnnModel(zero_init=True)
        assert predict(model, np.zeros((1, 24, 24, 3))).tolist() == [1]

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            CnnModel(rng_seed=0).forward(np.zeros((2, 24, 24, 4)))

    def test_sigmoid_is_stable(self):
        low, half, high = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        assert half == 0.5
        assert 0.0 < low < 1e-300
        assert 1.0 - 1e-15 < high < 1.0

    def test_saturated_logit_stays_inside_unit_interval(self):
        model = CnnModel(TINY_ARCHITECTURE, zero_init=True)
        model.layers[-1].params['bias'][:] = 40.0
        probability = model.forward(np.zeros((1, 24, 24, 3)))[0]
        assert 0.0 < probability < 1.0
        model.layers[-1].params['bias'][:] = -800.0
        assert model.forward(np.zeros((1, 24, 24, 3)))[0] > 0.0

    def test_batch_order_permutes_outputs(self):
        batch = random_batch(6, seed=2)
        order = np.array([3, 0, 5, 1, 4, 2])
        model = CnnModel(rng_seed=0)
        assert np.allclose(model.forward(batch[order]), model.forward(batch)[order], rtol=0, atol=1e-12)


class TestLoss:
    def test_half_probability(self):
        assert bce_loss(np.array([0.5]), np.array([1])) == pytest.approx(math.log(2))

    def test_two_samples(self):
        assert bce_loss(np.array([0.9, 0.2]), np.array([1, 0])) == pytest.approx(0.1643, abs=1e-4)

    def test_perfect_prediction_is_clipped(self):
        loss = bce_loss(np.array([1.0, 0.0]), np.array([1, 0]))
        assert 0 <= loss <= 1.2e-7


class TestGradients:
    def test_tiny_model_gradient_check(self):
        model = CnnModel(TINY_ARCHITECTURE, rng_seed=3)
        result = check_gradients(model, random_batch(4, seed=5), np.array([0, 1, 1, 0]))
        assert result.checked > 0.9 * model.parameter_count()
        assert result.max_relative_error < 1e-4

    def test_relative_error_floor(self):
        assert relative_error(0.0, 0.0) == 0.0
        assert relative_error(1e-12, 0.0) == pytest.approx(1e-6)

    def test_backward_returns_every_parameter(self):
        model = CnnModel(TINY_ARCHITECTURE, rng_seed=0)
        loss, grads = model.backward(random_batch(2), np.array([1, 0]))
        assert loss > 0
        assert [name for name, _ in grads] == [name for name, _ in model.parameters()]
        for (_, grad), (_, param) in zip(grads, model.parameters()):
            assert grad.shape == param.shape


    def test_unused_filter_gets_zero_gradient(self):
        model = CnnModel(TINY_ARCHITECTURE, rng_seed=0)
        conv = model.layers[0]
        conv.params['weight'][1] = 0.0
        conv.params['bias'][1] = -1.0
        _, grads = model.backward(random_batch(3), np.array([1, 0, 1]))
        grads = dict(grads)
        assert not grads['0.weight'][1].any()
        assert grads['0.bias'][1] == 0.0
        assert grads['6.bias'][0] != 0.0

    def test_duplicated_batch_keeps_mean_gradient(self):
        model = CnnModel(TINY_ARCHITECTURE, rng_seed=1)
        batch, labels = random_batch(3, seed=7), np.array([1, 0, 1])
        loss, grads = model.backward(batch, labels)
        single = {name: grad.copy() for name, grad in grads}
        doubled_loss, doubled = model.backward(np.concatenate([batch, batch]), np.concatenate([labels, labels]))
        assert doubled_loss == pytest.approx(loss, rel=1e-12)
        for name, grad in doubled:
            assert np.allclose(grad, single[name], rtol=1e-10, atol=1e-15)


class TestPersistence:
    def test_save_and_load(self, tmp_path):
        model = CnnModel(TINY_ARCHITECTURE, rng_seed=4)
        path = tmp_path / 'model.json'
        model.save(str(path), config_hash='abc')
        loaded = CnnModel.load(str(path))
        batch = random_batch(3)
        assert np.array_equal(loaded.forward(batch), model.forward(batch))

    def test_unknown_format(self):
        payload = CnnModel(TINY_ARCHITECTURE, rng_seed=4).to_dict()
        payload['format_version'] = 99
        with pytest.raises(DataValidationError):
            CnnModel.from_dict(payload)

    def test_same_seed_same_weights(self):
        first, second = CnnModel(rng_seed=9).get_weights(), CnnModel(rng_seed=9).get_weights()
        assert all(np.array_equal(first[name], second[name]) for name in first)
