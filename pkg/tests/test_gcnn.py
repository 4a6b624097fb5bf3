"""Tests for GCNN forward passes, stochastic realizations and gradients."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gcnnstab.core.filters import GraphFilter, filter_apply
from gcnnstab.core.gcnn import (
    GCNN,
    Loss,
    Nonlinearity,
    Readout,
    StochasticRealizationPolicy,
    gcnn_backward,
    gcnn_forward,
    gcnn_forward_stochastic,
    readout_classify,
)
from gcnnstab.core.graph import sbm_generate, shift_from_graph
from gcnnstab.core.perturbation import ChainSampler, RESModel
from gcnnstab.errors import ConfigurationError, InputError


@pytest.fixture
def five_node():
    return shift_from_graph(sbm_generate(5, 1, 0.7, 0.0, seed=2), "normalized_adjacency")


def numeric_gradient(net, loss_at, step=1e-6):
    grads = []
    for layer, w in enumerate(net.weights):
        grad = np.zeros_like(w)
        for index in np.ndindex(w.shape):
            plus = [np.array(v) for v in net.weights]
            minus = [np.array(v) for v in net.weights]
            plus[layer][index] += step
            minus[layer][index] -= step
            grad[index] = (
                loss_at(net.with_weights(plus)) - loss_at(net.with_weights(minus))
            ) / (2 * step)
        grads.append(grad)
    return grads


class TestGCNN:
    def test_random_architecture(self):
        net = GCNN.random(3, 4, 2, out_features=5, seed=1)
        assert net.layers == 3 and net.order == 2
        assert net.widths == (1, 4, 4, 5)
        assert [w.shape for w in net.weights] == [(4, 1, 3), (4, 4, 3), (5, 4, 3)]
        assert net.num_filters == len(net.filters()) == 4 + 16 + 20
        assert net.num_parameters == 3 * (4 + 16 + 20)

    def test_random_is_seeded(self):
        a, b = GCNN.random(2, 3, 2, seed=7), GCNN.random(2, 3, 2, seed=7)
        for wa, wb in zip(a.weights, b.weights):
            assert_array_equal(wa, wb)
        assert not np.array_equal(a.weights[0], GCNN.random(2, 3, 2, seed=8).weights[0])

    @pytest.mark.parametrize("args", [(0, 2, 2), (2, 0, 2), (2, 2, -1)])
    def test_invalid_architecture(self, args):
        with pytest.raises(ConfigurationError):
            GCNN.random(*args)

    def test_width_mismatch(self):
        with pytest.raises(InputError):
            GCNN((np.ones((2, 1, 3)), np.ones((1, 3, 3))), ("relu", "relu"))

    def test_filter_accessors(self):
        net = GCNN.random(2, 2, 1, seed=0)
        assert_array_equal(net.filter(1, 0, 1).coeffs, net.weights[1][0, 1])
        assert isinstance(net.filters()[0], GraphFilter)
        with pytest.raises(ValueError):
            net.weights[0][0, 0, 0] = 1.0

    def test_filter_bank_is_linear(self):
        bank = GCNN.filter_bank(3, out_features=2, seed=1)
        assert bank.layers == 1 and bank.widths == (1, 2)
        assert bank.nonlinearities == (Nonlinearity.IDENTITY,)


class TestNonlinearity:
    def test_values(self):
        a = np.array([-2.0, 0.0, 3.0])
        assert_array_equal(Nonlinearity.RELU(a), [0.0, 0.0, 3.0])
        assert_array_equal(Nonlinearity.ABS(a), [2.0, 0.0, 3.0])
        assert_allclose(Nonlinearity.TANH(a), np.tanh(a))
        assert all(Nonlinearity(s)(np.zeros(1))[0] == 0.0 for s in ("relu", "abs", "tanh"))

    def test_parse(self):
        assert Nonlinearity.parse("ReLU") is Nonlinearity.RELU
        with pytest.raises(ConfigurationError):
            Nonlinearity.parse("sigmoid")
        with pytest.raises(ConfigurationError):
            StochasticRealizationPolicy.parse("per_node")


class TestForward:
    def test_two_node_shift(self, two_node):
        net = GCNN.from_filters([[[GraphFilter([0.0, 1.0])]]], ["identity"])
        out, _ = gcnn_forward(net, shift_from_graph(two_node, "adjacency"), np.array([1.0, 0.0]))
        assert out.shape == (2, 1)
        assert_allclose(out[:, 0], [0.0, 1.0])

    def test_explicit_materialization(self, five_node, rng):
        net = GCNN.random(2, 2, 2, out_features=2, nonlinearity="tanh", seed=3)
        x = rng.standard_normal(5)
        hidden = [
            np.tanh(filter_apply(net.filter(0, f, 0), five_node, x)) for f in range(2)
        ]
        expected = np.stack(
            [
                np.tanh(
                    sum(filter_apply(net.filter(1, f, g), five_node, hidden[g]) for g in range(2))
                )
                for f in range(2)
            ],
            axis=1,
        )
        out, _ = gcnn_forward(net, five_node, x)
        assert_allclose(out, expected, atol=1e-12)

    def test_batch_matches_single(self, five_node, rng):
        net = GCNN.random(2, 3, 2, out_features=2, seed=4)
        x = rng.standard_normal((5, 4))
        out, _ = gcnn_forward(net, five_node, x)
        assert out.shape == (5, 2, 4)
        for b in range(4):
            assert_allclose(out[:, :, b], gcnn_forward(net, five_node, x[:, b])[0])

    def test_dimension_mismatch(self, five_node):
        with pytest.raises(InputError):
            gcnn_forward(GCNN.random(1, 1, 1), five_node, np.ones(4))


class TestStochasticForward:
    @pytest.mark.parametrize("policy", list(StochasticRealizationPolicy))
    def test_p_one_matches_nominal(self, five_node, rng, policy):
        net = GCNN.random(2, 3, 3, out_features=2, nonlinearity="relu", seed=5)
        x = rng.standard_normal(5)
        m = RESModel.from_shift(five_node, 1.0, rng_seed=1)
        nominal, _ = gcnn_forward(net, five_node, x)
        assert_allclose(gcnn_forward_stochastic(net, m, policy, x, 0), nominal, atol=1e-12)

    @pytest.mark.parametrize(
        "policy, chains",
        [("independent_per_filter", 8), ("shared_per_layer_shift", 2)],
    )
    def test_chain_count(self, five_node, rng, policy, chains):
        net = GCNN.random(2, 2, 2, out_features=2, seed=6, in_features=2)
        x = rng.standard_normal((5, 2, 3))
        m = RESModel.from_shift(five_node, 0.8, rng_seed=2)
        sampler = ChainSampler(m, 0)
        gcnn_forward_stochastic(net, m, policy, x, 0, sampler=sampler)
        assert sampler.chains_drawn == chains

    def test_depends_only_on_draw(self, small_normalized, rng):
        net = GCNN.random(2, 2, 2, seed=1)
        x = rng.standard_normal(small_normalized.n)
        m = RESModel.from_shift(small_normalized, 0.5, rng_seed=3)
        first = gcnn_forward_stochastic(net, m, "independent_per_filter", x, 4)
        gcnn_forward_stochastic(net, m, "independent_per_filter", x, 5)
        assert_array_equal(first, gcnn_forward_stochastic(net, m, "independent_per_filter", x, 4))


class TestBackward:
    def test_linear_closed_form(self, five_node, rng):
        net = GCNN.random(1, 1, 3, nonlinearity="identity", seed=2)
        x = rng.standard_normal(5)
        y = rng.standard_normal((5, 1))
        out, cache = gcnn_forward(net, five_node, x)
        _, d_out = Loss.SQUARED_ERROR.value_and_grad(out, y)
        grads = gcnn_backward(net, cache, d_out)
        residual = out[:, 0] - y[:, 0]
        s = five_node.matrix
        expected = [2 * residual @ np.linalg.matrix_power(s, k) @ x for k in range(4)]
        assert_allclose(grads[0][0, 0], expected, atol=1e-12)

    def test_squared_error_finite_differences(self, five_node, rng):
        net = GCNN.random(2, 2, 2, out_features=2, nonlinearity="tanh", seed=8)
        x = rng.standard_normal((5, 3))
        targets = rng.standard_normal((5, 2, 3))

        def loss_at(candidate):
            out = gcnn_forward(candidate, five_node, x)[0]
            return Loss.SQUARED_ERROR.value_and_grad(out, targets)[0]

        out, cache = gcnn_forward(net, five_node, x)
        grads = gcnn_backward(net, cache, Loss.SQUARED_ERROR.value_and_grad(out, targets)[1])
        for analytic, numeric in zip(grads, numeric_gradient(net, loss_at)):
            assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)

    def test_cross_entropy_finite_differences(self, five_node, rng):
        net = GCNN.random(2, 3, 2, out_features=1, nonlinearity="tanh", seed=9)
        x = rng.standard_normal((5, 4))
        labels = np.array([0, 2, 1, 1])
        sources = [0, 2, 4]

        def loss_at(candidate):
            out = gcnn_forward(candidate, five_node, x)[0]
            loss = Loss.SOFTMAX_CROSS_ENTROPY
            return loss.value_and_grad(out, labels, "source_nodes", sources)[0]

        out, cache = gcnn_forward(net, five_node, x)
        _, d_out = Loss.SOFTMAX_CROSS_ENTROPY.value_and_grad(out, labels, "source_nodes", sources)
        grads = gcnn_backward(net, cache, d_out)
        for analytic, numeric in zip(grads, numeric_gradient(net, loss_at)):
            assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)

    def test_foreign_cache(self, five_node):
        net = GCNN.random(1, 1, 1, seed=0)
        out, cache = gcnn_forward(net, five_node, np.ones(5))
        with pytest.raises(InputError):
            gcnn_backward(GCNN.random(1, 1, 1, seed=0), cache, out)
        with pytest.raises(InputError):
            gcnn_backward(net, cache, np.ones(3))


class TestReadout:
    def test_max_node_pooling(self):
        out = np.array([[0.1, 0.9], [0.5, 0.2], [0.3, 0.4]])
        assert readout_classify(out) == 1

    def test_ties_go_to_lowest_class(self):
        assert readout_classify(np.ones((3, 4))) == 0

    def test_source_nodes(self):
        out = np.zeros((4, 1, 2))
        out[3, 0, 0] = 1.0
        out[1, 0, 1] = 1.0
        labels = readout_classify(out, "source_nodes", sources=[1, 3])
        assert_array_equal(labels, [1, 0])

    def test_source_nodes_need_sources(self):
        with pytest.raises(InputError):
            readout_classify(np.zeros((4, 1)), Readout.SOURCE_NODES)
        with pytest.raises(InputError):
            readout_classify(np.zeros((4, 1)), Readout.SOURCE_NODES, sources=[5])


class TestLoss:
    def test_uniform_scores(self):
        value, _ = Loss.SOFTMAX_CROSS_ENTROPY.value_and_grad(
            np.zeros((4, 1, 2)), np.array([0, 2]), "source_nodes", [0, 1, 2]
        )
        assert value == pytest.approx(np.log(3))

    def test_squared_error_shape_check(self):
        with pytest.raises(InputError):
            Loss.SQUARED_ERROR.value_and_grad(np.zeros((3, 1)), np.zeros((3, 2)))

    def test_label_range(self):
        with pytest.raises(InputError):
            Loss.SOFTMAX_CROSS_ENTROPY.value_and_grad(np.zeros((3, 2)), np.array([2]))
