"""
Random edge sampling (RES) of a nominal graph.

Each realization keeps every nominal edge independently with probability
p and rebuilds the shift operator from the surviving edges with the
nominal normalization frozen. Realizations are addressed by
(seed, draw_index, chain_index, position) through counter-based streams,
so any realization can be regenerated on its own, in any order, on any
thread.

Sign convention: E_k = S_k - S, hence E[E_k] = -(1 - p) S.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np
from tqdm import tqdm

from gcnnstab.core.graph import Graph, ShiftOperator, ShiftVariant, shift_from_graph
from gcnnstab.errors import ConfigurationError, InputError
from gcnnstab.util.rng import Purpose, counter_stream

logger = logging.getLogger(__name__)

# Realizations stacked per block when accumulating moments.
_MOMENT_BLOCK = 2048

MOMENT_HEADER = ("p", "draws", "first_moment_dev", "second_moment_dev")


@dataclass(frozen=True, eq=False)
class RESModel:
    """
    RES(G, p): the nominal graph plus its link sampling probability.

    Attributes:
        base: Nominal graph
        shift_variant: How every realization is turned into a shift operator
        p: Probability that an edge survives, 0 < p <= 1
        rng_seed: Seed of every realization
    """

    base: Graph
    shift_variant: ShiftVariant
    p: float
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "shift_variant", ShiftVariant.parse(self.shift_variant))
        if not 0.0 < self.p <= 1.0:
            raise ConfigurationError(f"Sampling probability p={self.p} must lie in (0, 1]")

    @cached_property
    def nominal(self) -> ShiftOperator:
        """Shift operator of the nominal graph."""
        return shift_from_graph(self.base, self.shift_variant)

    @classmethod
    def from_shift(cls, s: ShiftOperator, p: float, rng_seed: int = 0) -> "RESModel":
        """Model whose nominal operator is s (reused, not rebuilt)."""
        model = cls(base=s.source, shift_variant=s.variant, p=p, rng_seed=rng_seed)
        model.__dict__["nominal"] = s
        return model

    def with_p(self, p: float) -> "RESModel":
        return RESModel.from_shift(self.nominal, p, self.rng_seed)

    def keep_mask(self, draw_index: int, chain_index: int = 0, position: int = 0) -> np.ndarray:
        """Surviving-edge mask of one realization."""
        rng = counter_stream(self.rng_seed, Purpose.EDGES, draw_index, chain_index, position)
        return rng.random(self.base.num_edges) < self.p

    def realize(self, draw_index: int, chain_index: int = 0, position: int = 0) -> ShiftOperator:
        return self.nominal.restrict(self.keep_mask(draw_index, chain_index, position))

    def error(self, draw_index: int, chain_index: int = 0, position: int = 0) -> "ErrorMatrix":
        return ErrorMatrix.between(self.realize(draw_index, chain_index, position), self.nominal)


@dataclass(frozen=True, eq=False)
class ErrorMatrix:
    """
    E_k = S_k - S for one realization.

    Attributes:
        matrix: Symmetric n x n deviation of the realization from the nominal operator
    """

    matrix: np.ndarray

    @classmethod
    def between(cls, realization: ShiftOperator, nominal: ShiftOperator) -> "ErrorMatrix":
        if realization.n != nominal.n:
            raise InputError("Realization and nominal operator differ in size")
        return cls(realization.matrix - nominal.matrix)

    def squared(self) -> np.ndarray:
        return self.matrix @ self.matrix

    def removes_edges_only(self, nominal: ShiftOperator) -> bool:
        """
        True when every off-diagonal entry is 0 or -[S]_ij.

        The diagonal must stay zero, except for the Laplacian where it
        follows the removed weights and every row of E sums to zero.
        """
        e, s = self.matrix, nominal.matrix
        off = ~np.eye(nominal.n, dtype=bool)
        entries = np.isclose(e, 0.0) | np.isclose(e, -s)
        if not np.all(entries[off]):
            return False
        if nominal.variant is ShiftVariant.LAPLACIAN:
            return bool(np.allclose(e.sum(axis=1), 0.0))
        return bool(np.all(np.diag(e) == 0.0))


def sample_subgraph(m: RESModel, draw_index: int) -> ShiftOperator:
    """One RES(G, p) realization, deterministic given (m.rng_seed, draw_index)."""
    return m.realize(draw_index)


def sample_chain(
    m: RESModel, k: int, draw_index: int, chain_index: int = 0
) -> list[ShiftOperator]:
    """
    K independent realizations S_1, ..., S_K.

    sample_chain(m, 1, d)[0] is the same realization as sample_subgraph(m, d).
    """
    if k < 0:
        raise InputError(f"Chain length must be non-negative, got {k}")
    return [m.realize(draw_index, chain_index, position) for position in range(k)]


class ChainSampler:
    """
    Hands out fresh chains for one draw, counting how many were consumed.

    Chain j of draw d is sample_chain(m, k, d, chain_index=j).
    """

    def __init__(self, model: RESModel, draw_index: int):
        self.model = model
        self.draw_index = draw_index
        self.chains_drawn = 0

    def next_chain(self, k: int) -> list[ShiftOperator]:
        chain = sample_chain(self.model, k, self.draw_index, self.chains_drawn)
        self.chains_drawn += 1
        return chain


def _realization_stack(m: RESModel, draws: Sequence[int]) -> np.ndarray:
    """Stacked realization matrices, shape (len(draws), n, n)."""
    g = m.base
    rows, cols, w = g.edge_index
    masks = np.stack([m.keep_mask(d) for d in draws]) if g.num_edges else np.zeros((len(draws), 0))
    weights = masks * w
    stack = np.zeros((len(draws), g.n, g.n))
    stack[:, rows, cols] = weights
    stack[:, cols, rows] = weights
    if m.shift_variant is ShiftVariant.LAPLACIAN:
        degrees = stack.sum(axis=2)
        stack = -stack
        idx = np.arange(g.n)
        stack[:, idx, idx] = degrees
    elif m.shift_variant is ShiftVariant.NORMALIZED_ADJACENCY:
        stack /= m.nominal.scale
    return stack


def _empirical_moments(m: RESModel, draws: int, show_progress: bool = False):
    if draws < 1:
        raise ConfigurationError(f"draws must be >= 1, got {draws}")
    s = m.nominal.matrix
    first = np.zeros_like(s)
    second = np.zeros_like(s)
    for start in tqdm(
        range(0, draws, _MOMENT_BLOCK), desc="Sampling", disable=not show_progress
    ):
        stack = _realization_stack(m, range(start, min(start + _MOMENT_BLOCK, draws)))
        first += stack.sum(axis=0)
        errors = stack - s
        second += np.einsum("bij,bjk->ik", errors, errors)
    return first / draws, second / draws


def first_moment_target(m: RESModel) -> np.ndarray:
    """E[S_k] = p S."""
    return m.p * m.nominal.matrix


def second_moment_target(m: RESModel) -> np.ndarray:
    """
    E[E_k^2] = (1-p)^2 S^2 + beta p (1-p) E_hat.

    Adjacency: beta = 1, E_hat = diag(sum_j w_ij^2) (the degree matrix
    for unit weights). Laplacian: beta = 2, E_hat is the Laplacian built
    with squared weights (S itself for unit weights).

    Raises:
        ConfigurationError: Normalized adjacency (no closed form here)
    """
    variant = m.shift_variant
    if variant not in (ShiftVariant.ADJACENCY, ShiftVariant.LAPLACIAN):
        raise ConfigurationError(
            f"Second-moment identity is stated for adjacency and Laplacian, not {variant.value}"
        )
    s = m.nominal.matrix
    squared = m.base.adjacency() ** 2
    if variant is ShiftVariant.ADJACENCY:
        beta, e_hat = 1.0, np.diag(squared.sum(axis=1))
    else:
        beta, e_hat = 2.0, np.diag(squared.sum(axis=1)) - squared
    q = 1.0 - m.p
    return q * q * (s @ s) + beta * m.p * q * e_hat


def check_first_moment(m: RESModel, draws: int, show_progress: bool = False) -> float:
    """Max-abs deviation of the empirical mean of S_k from p S."""
    if m.p == 1.0:
        return 0.0
    mean, _ = _empirical_moments(m, draws, show_progress)
    return float(np.max(np.abs(mean - first_moment_target(m))))


def check_second_moment(m: RESModel, draws: int, show_progress: bool = False) -> float:
    """Max-abs deviation of the empirical mean of E_k^2 from its closed form."""
    target = second_moment_target(m)
    if m.p == 1.0:
        return 0.0
    _, second = _empirical_moments(m, draws, show_progress)
    return float(np.max(np.abs(second - target)))


def check_moments(
    m: RESModel, draws: int, show_progress: bool = False
) -> tuple[float, Union[float, None]]:
    """
    Both moment deviations from one set of draws.

    The second entry is None for the normalized adjacency variant.
    """
    if draws < 1:
        raise ConfigurationError(f"draws must be >= 1, got {draws}")
    if m.p == 1.0:
        first_dev, second_dev = 0.0, 0.0
    else:
        mean, second = _empirical_moments(m, draws, show_progress)
        first_dev = float(np.max(np.abs(mean - first_moment_target(m))))
        second_dev = None
        if m.shift_variant is not ShiftVariant.NORMALIZED_ADJACENCY:
            second_dev = float(np.max(np.abs(second - second_moment_target(m))))
    if m.shift_variant is ShiftVariant.NORMALIZED_ADJACENCY:
        second_dev = None
    return first_dev, second_dev


def moment_convergence_slope(draw_counts: Sequence[int], deviations: Sequence[float]) -> float:
    """Least-squares slope of log(deviation) against log(draws); about -0.5 expected."""
    counts = np.asarray(draw_counts, dtype=float)
    devs = np.asarray(deviations, dtype=float)
    if counts.size < 2 or counts.size != devs.size or np.any(devs <= 0) or np.any(counts <= 0):
        raise InputError("Need at least two positive (draws, deviation) pairs")
    slope, _ = np.polyfit(np.log(counts), np.log(devs), 1)
    return float(slope)
