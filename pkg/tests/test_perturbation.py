"""Tests for random edge sampling and its moment identities."""

from dataclasses import FrozenInstanceError

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from gcnnstab.core.graph import Graph, sbm_generate, shift_from_graph
from gcnnstab.core.perturbation import (
    ChainSampler,
    ErrorMatrix,
    RESModel,
    check_first_moment,
    check_moments,
    check_second_moment,
    moment_convergence_slope,
    sample_chain,
    sample_subgraph,
    second_moment_target,
)
from gcnnstab.errors import ConfigurationError, InputError


@pytest.fixture
def path31() -> Graph:
    return Graph.from_edges(31, [(i, i + 1) for i in range(30)])


class TestRESModel:
    @pytest.mark.parametrize("p", [0.0, -0.1, 1.5])
    def test_invalid_probability(self, small_adjacency, p):
        with pytest.raises(ConfigurationError):
            RESModel.from_shift(small_adjacency, p)

    def test_p_one_keeps_everything(self, small_normalized):
        m = RESModel.from_shift(small_normalized, 1.0, rng_seed=4)
        assert m.keep_mask(7).all()
        assert_array_equal(sample_subgraph(m, 7).matrix, small_normalized.matrix)

    def test_realizations_are_addressable(self, small_adjacency):
        m = RESModel.from_shift(small_adjacency, 0.5, rng_seed=9)
        assert_array_equal(m.realize(3).matrix, m.realize(3).matrix)
        assert not np.array_equal(m.keep_mask(3), m.keep_mask(4))
        other_seed = RESModel.from_shift(small_adjacency, 0.5, rng_seed=10)
        assert not np.array_equal(m.keep_mask(3), other_seed.keep_mask(3))

    def test_survival_frequency(self, path31):
        m = RESModel.from_shift(shift_from_graph(path31, "adjacency"), 0.7, rng_seed=2)
        masks = np.stack([m.keep_mask(d) for d in range(10000)])
        assert masks.shape == (10000, 30)
        assert np.max(np.abs(masks.mean(axis=0) - 0.7)) <= 0.02

    def test_normalized_realization_keeps_nominal_scale(self, small_normalized):
        m = RESModel.from_shift(small_normalized, 0.6, rng_seed=1)
        keep = m.keep_mask(0)
        expected = small_normalized.source.adjacency(keep) / small_normalized.scale
        assert_allclose(m.realize(0).matrix, expected)

    def test_laplacian_realization_is_laplacian(self, small_sbm):
        s = shift_from_graph(small_sbm, "laplacian")
        realized = RESModel.from_shift(s, 0.5, rng_seed=3).realize(0).matrix
        assert_allclose(realized.sum(axis=1), 0.0, atol=1e-12)
        assert np.all(np.diag(realized) <= np.diag(s.matrix))

    def test_with_p_reuses_nominal(self, small_adjacency):
        m = RESModel.from_shift(small_adjacency, 0.9, rng_seed=5).with_p(0.5)
        assert m.p == 0.5 and m.rng_seed == 5
        assert m.nominal is small_adjacency


class TestChains:
    def test_first_member_is_the_subgraph(self, small_adjacency):
        m = RESModel.from_shift(small_adjacency, 0.7, rng_seed=1)
        chain = sample_chain(m, 1, 11)
        assert len(chain) == 1
        assert_array_equal(chain[0].matrix, sample_subgraph(m, 11).matrix)
        assert sample_chain(m, 0, 11) == []

    def test_negative_length(self, small_adjacency):
        with pytest.raises(InputError):
            sample_chain(RESModel.from_shift(small_adjacency, 0.7), -1, 0)

    def test_positions_are_independent(self, path31):
        m = RESModel.from_shift(shift_from_graph(path31, "adjacency"), 0.9, rng_seed=6)
        first = np.array([m.keep_mask(d, 0, 0) for d in range(10000)], dtype=float)
        second = np.array([m.keep_mask(d, 0, 1) for d in range(10000)], dtype=float)
        cov = (first - first.mean(0)).T @ (second - second.mean(0)) / len(first)
        assert np.max(np.abs(cov)) <= 0.02

    def test_sampler_counts_chains(self, small_adjacency):
        m = RESModel.from_shift(small_adjacency, 0.7, rng_seed=1)
        sampler = ChainSampler(m, draw_index=2)
        a = sampler.next_chain(3)
        b = sampler.next_chain(3)
        assert sampler.chains_drawn == 2
        assert_array_equal(b[1].matrix, sample_chain(m, 3, 2, chain_index=1)[1].matrix)
        assert not np.array_equal(a[0].matrix, b[0].matrix)


class TestErrorMatrix:
    def test_sign_convention(self, small_adjacency):
        m = RESModel.from_shift(small_adjacency, 0.5, rng_seed=0)
        e = m.error(0)
        assert_allclose(e.matrix, m.realize(0).matrix - small_adjacency.matrix)
        assert np.all(e.matrix <= 0.0)
        assert_allclose(e.squared(), e.matrix @ e.matrix)

    def test_is_frozen(self, small_adjacency):
        e = RESModel.from_shift(small_adjacency, 0.5).error(0)
        with pytest.raises(FrozenInstanceError):
            e.matrix = np.zeros((12, 12))

    def test_size_mismatch(self, small_adjacency, two_node):
        with pytest.raises(InputError):
            ErrorMatrix.between(shift_from_graph(two_node, "adjacency"), small_adjacency)

    @pytest.mark.parametrize("variant", ["adjacency", "laplacian", "normalized_adjacency"])
    def test_removes_edges_only(self, small_sbm, variant):
        m = RESModel.from_shift(shift_from_graph(small_sbm, variant), 0.6, rng_seed=3)
        assert all(m.error(d).removes_edges_only(m.nominal) for d in range(10))

    def test_added_edge_is_rejected(self, two_node):
        s = shift_from_graph(two_node, "adjacency")
        assert not ErrorMatrix(np.eye(2)).removes_edges_only(s)
        assert not ErrorMatrix(np.array([[0.0, 1.0], [1.0, 0.0]])).removes_edges_only(s)
        assert ErrorMatrix(-s.matrix).removes_edges_only(s)

    def test_p_one_is_zero(self, small_sbm):
        m = RESModel.from_shift(shift_from_graph(small_sbm, "laplacian"), 1.0)
        assert_array_equal(m.error(4).matrix, np.zeros((12, 12)))


class TestMoments:
    def test_two_node_second_moment_closed_form(self, two_node):
        m = RESModel.from_shift(shift_from_graph(two_node, "adjacency"), 0.5)
        assert_allclose(second_moment_target(m), 0.5 * np.eye(2))

    def test_two_node_first_moment(self, two_node):
        m = RESModel.from_shift(shift_from_graph(two_node, "adjacency"), 0.5, rng_seed=1)
        assert check_first_moment(m, 10000) <= 3 * 0.5 / np.sqrt(10000)

    def test_sbm_first_moment(self):
        s = shift_from_graph(sbm_generate(20, 4, 0.8, 0.2, seed=3), "adjacency")
        assert check_first_moment(RESModel.from_shift(s, 0.8, rng_seed=2), 10000) <= 0.02

    def test_two_node_first_moment_large_sample(self, two_node):
        m = RESModel.from_shift(shift_from_graph(two_node, "adjacency"), 0.5, rng_seed=5)
        assert check_first_moment(m, 100000) <= 3 * 0.5 / np.sqrt(100000)

    def test_sbm_adjacency_second_moment(self):
        s = shift_from_graph(sbm_generate(8, 2, 0.8, 0.2, seed=1), "adjacency")
        m = RESModel.from_shift(s, 0.7, rng_seed=6)
        assert check_second_moment(m, 100000) <= 0.03

    def test_triangle_laplacian_second_moment(self):
        triangle = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
        m = RESModel.from_shift(shift_from_graph(triangle, "laplacian"), 0.7, rng_seed=4)
        assert check_second_moment(m, 100000) <= 0.03

    def test_normalized_has_no_second_moment(self, small_normalized):
        m = RESModel.from_shift(small_normalized, 0.8)
        first, second = check_moments(m, 500)
        assert first >= 0.0 and second is None
        with pytest.raises(ConfigurationError):
            second_moment_target(m)

    def test_p_one_is_exact(self, small_adjacency, small_normalized):
        assert check_moments(RESModel.from_shift(small_adjacency, 1.0), 10) == (0.0, 0.0)
        assert check_moments(RESModel.from_shift(small_normalized, 1.0), 10) == (0.0, None)

    def test_invalid_draws(self, small_adjacency):
        with pytest.raises(ConfigurationError):
            check_moments(RESModel.from_shift(small_adjacency, 0.5), 0)

    def test_convergence_slope(self):
        counts = [100, 1000, 10000, 100000]
        assert moment_convergence_slope(counts, [c**-0.5 for c in counts]) == pytest.approx(-0.5)
        with pytest.raises(InputError):
            moment_convergence_slope([100], [0.1])
