"""Tests for ADAM training."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gcnnstab.core.filters import GraphFilter
from gcnnstab.core.gcnn import GCNN
from gcnnstab.errors import ConfigurationError, InputError, TrainingDivergedError
from gcnnstab.tools.datasets import SignalSet, community_sources, make_source_dataset
from gcnnstab.tools.trainer import (
    TRACE_HEADER,
    AdamOptimizer,
    evaluate,
    train_adam,
)


@pytest.fixture
def regression(small_normalized):
    """Targets y = S x for 64 random signals, shaped n x 1 x N."""
    x = np.random.default_rng(3).standard_normal((small_normalized.n, 64))
    return SignalSet(x, (small_normalized.matrix @ x)[:, None, :])


def linear_net(coeffs):
    return GCNN.from_filters([[[GraphFilter(coeffs)]]], ["identity"])


class TestAdamOptimizer:
    def test_first_step_is_lr_times_sign(self):
        opt = AdamOptimizer(lr=0.01)
        w = (np.array([1.0, -2.0, 0.5]),)
        g = (np.array([3.0, -0.2, 1e-3]),)
        (updated,) = opt.step(w, g)
        assert_allclose(updated, w[0] - 0.01 * np.sign(g[0]), rtol=1e-4)
        assert opt.step_count == 1

    @pytest.mark.parametrize("kwargs", [{"lr": -1.0}, {"betas": (0.9, 1.0)}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            AdamOptimizer(**kwargs)


class TestTrainAdam:
    def test_convex_loss_decreases(self, small_normalized, regression):
        net, trace = train_adam(
            linear_net([0.5, -0.5]),
            small_normalized,
            regression,
            "squared_error",
            lr=5e-3,
            epochs=50,
            batch_size=64,
        )
        assert len(trace) == 50
        assert all(b < a for a, b in zip(trace.train_loss, trace.train_loss[1:]))
        assert np.all(np.isnan(trace.val_acc))
        assert net.weights[0][0, 0, 1] > -0.5

    def test_input_net_untouched(self, small_normalized, regression):
        start = linear_net([0.5, -0.5])
        train_adam(start, small_normalized, regression, "squared_error", epochs=2)
        assert_array_equal(start.weights[0][0, 0], [0.5, -0.5])

    def test_seeded(self, small_normalized, regression):
        runs = [
            train_adam(
                linear_net([0.5, -0.5]),
                small_normalized,
                regression,
                "squared_error",
                epochs=3,
                batch_size=16,
                seed=7,
            )[0]
            for _ in range(2)
        ]
        assert_array_equal(runs[0].weights[0], runs[1].weights[0])

    def test_empty_training_set(self, small_normalized):
        empty = SignalSet(np.zeros((12, 0)), np.zeros((12, 1, 0)))
        with pytest.raises(InputError):
            train_adam(linear_net([1.0]), small_normalized, empty, "squared_error")

    @pytest.mark.parametrize("kwargs", [{"epochs": -1}, {"batch_size": 0}])
    def test_invalid_schedule(self, small_normalized, regression, kwargs):
        net = linear_net([1.0, 0.0])
        with pytest.raises(ConfigurationError):
            train_adam(net, small_normalized, regression, "squared_error", **kwargs)

    def test_divergence_is_reported(self, small_normalized, regression):
        with pytest.raises(TrainingDivergedError) as info:
            train_adam(
                linear_net([0.5, -0.5]),
                small_normalized,
                regression,
                "squared_error",
                lr=1e308,
                epochs=5,
                batch_size=16,
            )
        assert info.value.epoch == 0

    def test_classification_trace(self, small_sbm):
        data = make_source_dataset(
            small_sbm, community_sources(small_sbm), sizes=(24, 12, 0), seed=2
        )
        net = GCNN.random(1, 1, 2, out_features=1, nonlinearity="identity", seed=0)
        _, trace = train_adam(
            net,
            data.shift,
            data.train,
            "softmax_cross_entropy",
            lr=1e-2,
            epochs=3,
            batch_size=8,
            val=data.val,
            readout="source_nodes",
            sources=data.sources,
        )
        rows = trace.rows()
        assert len(rows) == 3 and len(rows[0]) == len(TRACE_HEADER)
        assert all(0.0 <= acc <= 1.0 for acc in trace.val_acc)


class TestEvaluate:
    def test_perfect_regression(self, small_normalized, regression):
        loss, acc = evaluate(linear_net([0.0, 1.0]), small_normalized, regression, "squared_error")
        assert loss == pytest.approx(0.0, abs=1e-20)
        assert np.isnan(acc)

    def test_empty_set(self, small_normalized):
        empty = SignalSet(np.zeros((12, 0)), np.zeros(0, dtype=int))
        loss, acc = evaluate(linear_net([1.0]), small_normalized, empty, "softmax_cross_entropy")
        assert np.isnan(loss) and np.isnan(acc)
