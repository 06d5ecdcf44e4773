"""Tests for the losses, the RMSProp step and the training loop."""

import math

import numpy as np
import pandas as pd
import pytest

from pnnlab.dataset_service import CubicSpec, Dataset, gen_cubic
from pnnlab.errors import ConfigurationError, DomainError, TrainingError
from pnnlab.network import Architecture, GaussianPrediction, NetworkParameters, forward_batch, init_parameters
from pnnlab.numerics import Rng, sample_standard_normal
from pnnlab.training import (
    OptimizerConfig,
    OptimizerState,
    TrainConfig,
    batch_loss_and_grad,
    fit,
    mse_loss,
    nll,
    nll_grad,
    nll_vector,
    rmsprop_step,
    write_loss_history,
)


def _scalar_params(value):
    return NetworkParameters([np.array([[value]])], [np.array([value])])


class TestNll:

    def test_closed_form(self):
        half_log_2pi = 0.5 * math.log(2 * math.pi)
        assert nll(GaussianPrediction(0.0, 1.0), 0.0) == pytest.approx(half_log_2pi, abs=1e-12)
        assert nll(GaussianPrediction(0.0, 1.0), 0.0) == pytest.approx(0.918939, abs=1e-6)
        assert nll(GaussianPrediction(1.0, 1.0), 1.0) == pytest.approx(half_log_2pi, abs=1e-12)
        assert nll(GaussianPrediction(0.0, 0.5), 1.0) == pytest.approx(0.5 * math.log(math.pi) + 1.0, abs=1e-12)
        assert nll(GaussianPrediction(0.0, 0.5), 1.0) == pytest.approx(1.572364, abs=1e-6)

    def test_gradient_hand_arithmetic(self):
        d_mean, d_var = nll_grad(GaussianPrediction(0.0, 2.0), 1.0)
        assert d_mean == pytest.approx(-0.5, abs=1e-15)
        assert d_var == pytest.approx(0.125, abs=1e-15)

    def test_gradient_zeros(self):
        assert nll_grad(GaussianPrediction(1.5, 2.0), 1.5)[0] == 0.0
        assert nll_grad(GaussianPrediction(0.0, 4.0), 2.0)[1] == 0.0

    def test_non_positive_variance(self):
        with pytest.raises(DomainError):
            nll(GaussianPrediction(0.0, 0.0), 1.0)
        with pytest.raises(DomainError):
            nll_grad(GaussianPrediction(0.0, -1.0), 1.0)

    def test_gradient_matches_finite_differences(self):
        rng = Rng(31)
        h = 1e-6
        for mean, variance, y in zip(rng.uniform(-2, 2, 20), rng.uniform(0.5, 3.0, 20), rng.uniform(-2, 2, 20)):
            d_mean, d_var = nll_grad(GaussianPrediction(mean, variance), y)
            fd_mean = (nll(GaussianPrediction(mean + h, variance), y)
                       - nll(GaussianPrediction(mean - h, variance), y)) / (2 * h)
            fd_var = (nll(GaussianPrediction(mean, variance + h), y)
                      - nll(GaussianPrediction(mean, variance - h), y)) / (2 * h)
            assert d_mean == pytest.approx(fd_mean, abs=1e-8)
            assert d_var == pytest.approx(fd_var, abs=1e-8)

    @pytest.mark.parametrize("residual", [-1.5, 0.2, 3.0])
    def test_mean_gradient_shrinks_with_variance(self, residual):
        variances = np.geomspace(1e-3, 1e3, 25)
        magnitudes = [abs(nll_grad(GaussianPrediction(0.0, v), residual)[0]) for v in variances]
        assert all(a > b for a, b in zip(magnitudes, magnitudes[1:]))

    def test_vector_matches_scalar(self):
        means = np.array([0.0, 1.0, -2.0])
        variances = np.array([1.0, 0.5, 3.0])
        ys = np.array([0.5, 1.0, 0.0])
        expected = [nll(GaussianPrediction(m, v), y) for m, v, y in zip(means, variances, ys)]
        np.testing.assert_allclose(nll_vector(means, variances, ys), expected, rtol=1e-14)


class TestMse:

    def test_perfect(self):
        assert mse_loss([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_hand_arithmetic(self):
        assert mse_loss([GaussianPrediction(1.0, 1.0), GaussianPrediction(-1.0, 1.0)], [0.0, 0.0]) == 1.0

    def test_empty(self):
        with pytest.raises(DomainError):
            mse_loss([], [])

    def test_fixed_variance_nll_reduces_to_mse(self):
        rng = Rng(10)
        n, variance = 50, 0.7
        means = rng.uniform(-2, 2, size=n)
        ys = rng.uniform(-2, 2, size=n)
        total_nll = float(np.sum(nll_vector(means, np.full(n, variance), ys)))
        reduced = total_nll * 2 * variance / n - variance * math.log(2 * math.pi * variance)
        assert reduced == pytest.approx(mse_loss(means, ys), abs=1e-10)

    def test_fixed_variance_ranks_candidates_like_mse(self):
        arch = Architecture(input_dim=1, depth=2, width=4)
        rng = Rng(14)
        X = rng.uniform(-1, 1, size=(40, 1))
        ys = X[:, 0] ** 3
        variance = 0.3
        nll_scores, mse_scores = [], []
        for seed in range(8):
            means, _ = forward_batch(init_parameters(arch, Rng(seed)), arch, X)
            nll_scores.append(float(np.mean(nll_vector(means, np.full(40, variance), ys))))
            mse_scores.append(mse_loss(means, ys))
        np.testing.assert_array_equal(np.argsort(nll_scores), np.argsort(mse_scores))


class TestRmsprop:

    def test_zero_gradient(self):
        params = _scalar_params(0.3)
        state = OptimizerState(_scalar_params(2.0))
        new_state, new_params = rmsprop_step(state, params, _scalar_params(0.0), OptimizerConfig())
        np.testing.assert_array_equal(new_params.flatten(), params.flatten())
        np.testing.assert_allclose(new_state.s.flatten(), 0.9 * 2.0, rtol=1e-15)

    def test_first_step(self):
        params = _scalar_params(0.0)
        state = OptimizerState.zeros(params)
        new_state, new_params = rmsprop_step(state, params, _scalar_params(1.0), OptimizerConfig())
        np.testing.assert_allclose(new_state.s.flatten(), 0.1, rtol=1e-12)
        step = new_params.weights[0][0, 0]
        assert step == pytest.approx(-0.001 / math.sqrt(0.1 + 1e-7), abs=1e-12)
        assert step == pytest.approx(-0.00316228, abs=1e-8)

    def test_two_steps_hand_recursion(self):
        cfg = OptimizerConfig()
        params = _scalar_params(1.0)
        state = OptimizerState.zeros(params)
        g = _scalar_params(0.5)
        state, params = rmsprop_step(state, params, g, cfg)
        state, params = rmsprop_step(state, params, g, cfg)
        s1 = 0.1 * 0.25
        s2 = 0.9 * s1 + 0.1 * 0.25
        expected = 1.0 - 0.001 * 0.5 / math.sqrt(s1 + 1e-7) - 0.001 * 0.5 / math.sqrt(s2 + 1e-7)
        assert params.biases[0][0] == pytest.approx(expected, abs=1e-14)
        assert state.s.biases[0][0] == pytest.approx(s2, abs=1e-15)

    def test_second_moment_stays_non_negative(self, small_arch):
        rng = Rng(3)
        params = init_parameters(small_arch, rng)
        state = OptimizerState.zeros(params)
        cfg = OptimizerConfig(decay=0.5)
        for _ in range(200):
            scale = 10.0 ** rng.uniform(-8, 3)
            grads = params.zeros_like()
            for g in grads.arrays():
                g[...] = scale * rng.uniform(-1, 1, size=g.shape)
            state, params = rmsprop_step(state, params, grads, cfg)
            assert all(np.all(s >= 0.0) for s in state.s.arrays())
        assert np.all(np.isfinite(params.flatten()))

    def test_does_not_mutate_inputs(self):
        params = _scalar_params(1.0)
        state = OptimizerState.zeros(params)
        rmsprop_step(state, params, _scalar_params(1.0), OptimizerConfig())
        assert params.weights[0][0, 0] == 1.0
        assert state.s.weights[0][0, 0] == 0.0

    @pytest.mark.parametrize("kwargs", [{"learning_rate": 0.0}, {"decay": 1.0}, {"decay": 0.0}, {"epsilon": 0.0}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigurationError):
            OptimizerConfig(**kwargs)


class TestBatchLossAndGrad:

    def test_matches_finite_differences(self):
        """depth 3, width 8, 16 examples; central differences with step 1e-6"""
        arch = Architecture(input_dim=2, depth=3, width=8)
        rng = Rng(77)
        params = init_parameters(arch, rng)
        for b in params.biases:
            b[:] = rng.uniform(-0.3, 0.3, size=b.shape)
        X = rng.uniform(-1, 1, size=(16, 2))
        y = rng.uniform(-1, 1, size=16)

        value, grads = batch_loss_and_grad(params, arch, X, y)
        analytic = grads.flatten()
        theta = params.flatten()
        numeric = np.zeros_like(theta)
        h = 1e-6
        for i in range(theta.shape[0]):
            plus, minus = theta.copy(), theta.copy()
            plus[i] += h
            minus[i] -= h
            f_plus, _ = batch_loss_and_grad(NetworkParameters.from_flat(arch, plus), arch, X, y)
            f_minus, _ = batch_loss_and_grad(NetworkParameters.from_flat(arch, minus), arch, X, y)
            numeric[i] = (f_plus - f_minus) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)

        means, variances = forward_batch(params, arch, X)
        assert value == pytest.approx(float(np.mean(nll_vector(means, variances, y))), rel=1e-14)

    def test_mse_leaves_variance_head_alone(self, small_arch, small_params):
        X = Rng(1).uniform(-1, 1, size=(5, 3))
        y = np.arange(5.0)
        value, grads = batch_loss_and_grad(small_params, small_arch, X, y, loss="mse")
        means, _ = forward_batch(small_params, small_arch, X)
        assert value == pytest.approx(float(np.mean((y - means) ** 2)), rel=1e-14)
        np.testing.assert_array_equal(grads.weights[-1][1], 0.0)
        assert grads.biases[-1][1] == 0.0


class TestFit:

    @pytest.fixture
    def cubic(self):
        return gen_cubic(CubicSpec(n_unique=40, replicates=5, seed=1))

    def test_loss_decreases(self, cubic):
        arch = Architecture(input_dim=1, depth=4, width=6)
        _, history = fit(cubic, arch, TrainConfig(epochs=30), OptimizerConfig(), Rng(0))
        assert len(history) == 30
        assert history[-1] < history[0]

    def test_deterministic(self, cubic):
        arch = Architecture(input_dim=1, depth=2, width=4)
        a_params, a_hist = fit(cubic, arch, TrainConfig(epochs=3), OptimizerConfig(), Rng(4))
        b_params, b_hist = fit(cubic, arch, TrainConfig(epochs=3), OptimizerConfig(), Rng(4))
        assert a_hist == b_hist
        np.testing.assert_array_equal(a_params.flatten(), b_params.flatten())

    def test_shuffle_seed_changes_order_only(self, cubic):
        arch = Architecture(input_dim=1, depth=1, width=3)
        a_params, _ = fit(cubic, arch, TrainConfig(epochs=1, shuffle_seed=1), OptimizerConfig(), Rng(4))
        b_params, _ = fit(cubic, arch, TrainConfig(epochs=1, shuffle_seed=2), OptimizerConfig(), Rng(4))
        assert not np.array_equal(a_params.flatten(), b_params.flatten())

    def test_partial_batch_kept(self):
        data = gen_cubic(CubicSpec(n_unique=7, replicates=1, seed=0))
        arch = Architecture(input_dim=1, depth=1, width=2)
        _, history = fit(data, arch, TrainConfig(batch_size=5, epochs=2), OptimizerConfig(), Rng(0))
        assert len(history) == 2 and all(math.isfinite(h) for h in history)

    def test_learns_constant_output(self):
        c, variance = 2.0, 0.09
        rng = Rng(123)
        x = rng.uniform(-1, 1, size=20)
        inputs = np.repeat(x, 50)[:, None]
        keys = np.repeat(np.arange(20), 50)
        outputs = c + math.sqrt(variance) * sample_standard_normal(rng, 1000)
        data = Dataset(inputs, outputs, keys)
        arch = Architecture(input_dim=1, depth=2, width=4)
        params, _ = fit(data, arch, TrainConfig(epochs=100), OptimizerConfig(learning_rate=0.005), Rng(9))
        means, variances = forward_batch(params, arch, x[:, None])
        assert abs(float(np.mean(means)) - c) < 0.05
        assert abs(float(np.median(variances)) - variance) < 0.3 * variance

    def test_divergence_reports_epoch_and_step(self, cubic):
        arch = Architecture(input_dim=1, depth=1, width=2)
        params = init_parameters(arch, Rng(0))
        params.weights[-1][:] = 1e300
        with pytest.raises(TrainingError) as excinfo:
            fit(cubic, arch, TrainConfig(epochs=2), OptimizerConfig(), Rng(0), initial_params=params)
        assert excinfo.value.epoch == 0
        assert excinfo.value.step == 0
        assert "epoch 0, step 0" in str(excinfo.value)

    @pytest.mark.parametrize("kwargs", [{"batch_size": 0}, {"epochs": 0}, {"loss": "hinge"}])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ConfigurationError):
            TrainConfig(**kwargs)


class TestLossHistory:

    def test_write(self, tmp_path):
        path = tmp_path / "loss.csv"
        write_loss_history(str(path), [1.5, 0.25])
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["epoch", "mean_train_nll"]
        assert frame["epoch"].tolist() == [1, 2]
        assert frame["mean_train_nll"].tolist() == [1.5, 0.25]
