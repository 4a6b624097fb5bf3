"""Shared fixtures."""

import numpy as np
import pytest

from gcnnstab.core.graph import Graph, sbm_generate, shift_from_graph


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def two_node() -> Graph:
    """Two nodes joined by one unit edge."""
    return Graph.from_edges(2, [(0, 1)])


@pytest.fixture
def path4() -> Graph:
    """Path 0-1-2-3."""
    return Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])


@pytest.fixture
def small_sbm() -> Graph:
    return sbm_generate(12, 3, 0.8, 0.2, seed=1)


@pytest.fixture
def small_adjacency(small_sbm):
    return shift_from_graph(small_sbm, "adjacency")


@pytest.fixture
def small_normalized(small_sbm):
    return shift_from_graph(small_sbm, "normalized_adjacency")
