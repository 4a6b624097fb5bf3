"""
Graph construction, shift operators and symmetric spectral decomposition.

Graphs are undirected with canonical edges (i < j). A ShiftOperator is a
dense symmetric matrix built from a Graph under one of three variants:
adjacency, Laplacian (D - A) or normalized adjacency (A / lambda_max(A)).
Self-loops never appear in the edge set; only the Laplacian carries a
nonzero diagonal.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from itertools import combinations
from typing import Optional, Union

import networkx as nx
import numpy as np

from gcnnstab.config.settings import (
    DEFAULT_EIGEN_METHOD,
    JACOBI_MAX_SWEEPS,
    JACOBI_TOLERANCE,
    SYMMETRY_TOLERANCE,
)
from gcnnstab.errors import ConfigurationError, InputError, NumericError

logger = logging.getLogger(__name__)

Edge = tuple[int, int]


class ShiftVariant(str, Enum):
    """Which matrix represents the graph."""

    ADJACENCY = "adjacency"
    LAPLACIAN = "laplacian"
    NORMALIZED_ADJACENCY = "normalized_adjacency"

    @classmethod
    def parse(cls, value: Union[str, "ShiftVariant"]) -> "ShiftVariant":
        """Parse a variant name, raising ConfigurationError when unknown."""
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError as e:
            choices = ", ".join(v.value for v in cls)
            raise ConfigurationError(
                f"Unknown shift variant '{value}' (choose from {choices})"
            ) from e


@dataclass(frozen=True)
class Graph:
    """
    Undirected weighted graph with canonical edges.

    Attributes:
        n: Number of nodes, labelled 0..n-1
        edges: Sorted tuple of (i, j) pairs with i < j
        weights: Edge weights aligned with edges
        communities: Optional community label per node (set by sbm_generate)
    """

    n: int
    edges: tuple[Edge, ...] = ()
    weights: tuple[float, ...] = ()
    communities: Optional[tuple[int, ...]] = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.weights) != len(self.edges):
            raise InputError(
                f"{len(self.edges)} edges but {len(self.weights)} weights"
            )

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges,
        weights=None,
        communities=None,
    ) -> "Graph":
        """
        Build a graph from an iterable of (i, j) pairs.

        Args:
            n: Node count
            edges: Iterable of node pairs in any orientation
            weights: Optional weights aligned with edges (default 1.0)
            communities: Optional community label per node

        Raises:
            InputError: On out-of-range nodes, self-loops or duplicate edges
        """
        if n < 0:
            raise InputError(f"Node count must be non-negative, got {n}")

        edges = [tuple(int(v) for v in e) for e in edges]
        if weights is None:
            weights = [1.0] * len(edges)
        weights = [float(w) for w in weights]
        if len(weights) != len(edges):
            raise InputError(f"{len(edges)} edges but {len(weights)} weights")

        canonical: dict[Edge, float] = {}
        for (i, j), w in zip(edges, weights):
            if not (0 <= i < n and 0 <= j < n):
                raise InputError(f"Edge ({i}, {j}) out of range for n={n}")
            if i == j:
                raise InputError(f"Self-loop ({i}, {i}) is not an edge")
            key = (min(i, j), max(i, j))
            if key in canonical:
                raise InputError(f"Duplicate edge {key}")
            if not np.isfinite(w):
                raise InputError(f"Edge {key} has non-finite weight {w}")
            canonical[key] = w

        ordered = sorted(canonical)
        labels = tuple(int(c) for c in communities) if communities is not None else None
        if labels is not None and len(labels) != n:
            raise InputError(f"{len(labels)} community labels for {n} nodes")
        return cls(
            n=n,
            edges=tuple(ordered),
            weights=tuple(canonical[e] for e in ordered),
            communities=labels,
        )

    @classmethod
    def from_networkx(cls, nx_graph: nx.Graph, weight: str = "weight") -> "Graph":
        """Convert a networkx graph whose nodes are 0..n-1."""
        n = nx_graph.number_of_nodes()
        edges = []
        weights = []
        for i, j, data in nx_graph.edges(data=True):
            edges.append((i, j))
            weights.append(data.get(weight, 1.0))
        blocks = [nx_graph.nodes[v].get("block") for v in range(n)]
        communities = blocks if n and all(b is not None for b in blocks) else None
        return cls.from_edges(n, edges, weights, communities)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edge endpoints and weights as arrays (rows, cols, weights)."""
        if not self.edges:
            empty = np.zeros(0, dtype=np.intp)
            return empty, empty.copy(), np.zeros(0)
        rows, cols = (np.array(side, dtype=np.intp) for side in zip(*self.edges))
        return rows, cols, np.asarray(self.weights, dtype=float)

    def adjacency(self, keep: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Dense weighted adjacency matrix.

        Args:
            keep: Optional boolean mask over edges; dropped edges get weight 0
        """
        rows, cols, w = self.edge_index
        if keep is not None:
            w = np.where(keep, w, 0.0)
        a = np.zeros((self.n, self.n))
        a[rows, cols] = w
        a[cols, rows] = w
        return a

    def degrees(self) -> np.ndarray:
        """Incident-edge count per node."""
        rows, cols, _ = self.edge_index
        return np.bincount(np.concatenate([rows, cols]), minlength=self.n)

    def weight(self, i: int, j: int) -> float:
        """Weight of edge (i, j); 0.0 if absent."""
        key = (min(i, j), max(i, j))
        try:
            return self.weights[self.edges.index(key)]
        except ValueError:
            return 0.0

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_weighted_edges_from((i, j, w) for (i, j), w in zip(self.edges, self.weights))
        return g


def _freeze(matrix: np.ndarray) -> np.ndarray:
    matrix = np.array(matrix, dtype=float)
    matrix.setflags(write=False)
    return matrix


def check_symmetric(matrix: np.ndarray, atol: float = SYMMETRY_TOLERANCE) -> None:
    """Raise InputError unless matrix is square and symmetric within atol."""
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InputError(f"Expected a square matrix, got shape {matrix.shape}")
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=atol):
        raise InputError("Shift operator matrix is not symmetric")


@dataclass(frozen=True, eq=False)
class ShiftOperator:
    """
    Symmetric graph shift operator S.

    Attributes:
        matrix: Read-only n x n matrix
        variant: Construction variant
        source: Graph the operator was built from
        scale: Divisor applied to the adjacency (lambda_max(A) for the
            normalized variant, 1.0 otherwise)
    """

    matrix: np.ndarray
    variant: ShiftVariant
    source: Graph
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "matrix", _freeze(self.matrix))
        check_symmetric(self.matrix)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """One shift: S @ x."""
        return self.matrix @ x

    def restrict(self, keep: np.ndarray) -> "ShiftOperator":
        """
        Rebuild the operator over a subset of the source edges.

        The normalization of the nominal operator is kept: a normalized
        adjacency realization is divided by the nominal lambda_max, not
        its own.

        Args:
            keep: Boolean mask over source.edges
        """
        return ShiftOperator(
            matrix=_assemble(self.source, self.variant, self.scale, keep),
            variant=self.variant,
            source=self.source,
            scale=self.scale,
        )

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvalsh(self.matrix)))) if self.n else 0.0


def _assemble(
    g: Graph, variant: ShiftVariant, scale: float, keep: Optional[np.ndarray] = None
) -> np.ndarray:
    a = g.adjacency(keep)
    if variant is ShiftVariant.LAPLACIAN:
        return np.diag(a.sum(axis=1)) - a
    if variant is ShiftVariant.NORMALIZED_ADJACENCY:
        return a / scale
    return a


def shift_from_graph(g: Graph, variant: Union[ShiftVariant, str]) -> ShiftOperator:
    """
    Assemble the shift operator of a graph.

    Args:
        g: Source graph
        variant: adjacency, laplacian or normalized_adjacency

    Returns:
        ShiftOperator

    Raises:
        ConfigurationError: Empty graph, or edgeless graph under the
            normalized variant
    """
    variant = ShiftVariant.parse(variant)
    if g.n == 0:
        raise ConfigurationError("Cannot build a shift operator for an empty graph")

    scale = 1.0
    if variant is ShiftVariant.NORMALIZED_ADJACENCY:
        scale = float(np.linalg.eigvalsh(g.adjacency())[-1])
        if scale <= 0.0:
            raise ConfigurationError(
                "Normalized adjacency needs lambda_max(A) > 0 (graph has no edges)"
            )

    return ShiftOperator(
        matrix=_assemble(g, variant, scale), variant=variant, source=g, scale=scale
    )


def max_degree(g: Graph) -> int:
    """Maximum incident-edge count over all nodes (0 for edgeless graphs)."""
    if g.n == 0:
        return 0
    return int(g.degrees().max())


def sbm_generate(
    n: int,
    communities: int,
    p_intra: float,
    p_inter: float,
    seed: int,
) -> Graph:
    """
    Sample a stochastic block model graph with equal-sized communities.

    Args:
        n: Node count, divisible by communities
        communities: Number of communities
        p_intra: Link probability inside a community
        p_inter: Link probability across communities
        seed: Random seed; the graph is a deterministic function of it

    Returns:
        Graph with community labels attached

    Raises:
        ConfigurationError: Invalid sizes or probabilities
    """
    if communities <= 0 or n <= 0:
        raise ConfigurationError("Node and community counts must be positive")
    if n % communities != 0:
        raise ConfigurationError(
            f"n={n} is not divisible by communities={communities}"
        )
    for name, prob in (("p_intra", p_intra), ("p_inter", p_inter)):
        if not 0.0 <= prob <= 1.0:
            raise ConfigurationError(f"{name}={prob} is not a probability")

    sizes = [n // communities] * communities
    probs = np.full((communities, communities), float(p_inter))
    np.fill_diagonal(probs, float(p_intra))
    nx_graph = nx.stochastic_block_model(sizes, probs.tolist(), seed=int(seed))
    return Graph.from_networkx(nx_graph)


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """
    S = V diag(eigenvalues) V^T with ascending eigenvalues.

    Attributes:
        eigenvalues: Ascending real eigenvalues
        eigenvectors: Orthonormal columns, eigenvectors[:, i] pairs with eigenvalues[i]
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _freeze(self.eigenvalues))
        object.__setattr__(self, "eigenvectors", _freeze(self.eigenvectors))

    def gft(self, x: np.ndarray) -> np.ndarray:
        """Graph Fourier transform: V^T x."""
        return self.eigenvectors.T @ x

    def igft(self, x_hat: np.ndarray) -> np.ndarray:
        """Inverse graph Fourier transform: V x_hat."""
        return self.eigenvectors @ x_hat

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def _jacobi(matrix: np.ndarray, max_sweeps: int, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi rotations until the off-diagonal norm falls below tol."""
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    threshold = tol * max(np.linalg.norm(a), 1.0)

    for _ in range(max_sweeps + 1):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= threshold:
            return np.diag(a).copy(), v
        for p, q in combinations(range(n), 2):
            apq = a[p, q]
            if abs(apq) < 1e-300:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            col_p, col_q = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * col_p - s * col_q
            a[:, q] = s * col_p + c * col_q
            row_p, row_q = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c * row_p - s * row_q
            a[q, :] = s * row_p + c * row_q
            vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vec_p - s * vec_q
            v[:, q] = s * vec_p + c * vec_q

    raise NumericError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")


def eigendecompose(
    s: Union[ShiftOperator, np.ndarray],
    method: str = DEFAULT_EIGEN_METHOD,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
    tol: float = JACOBI_TOLERANCE,
) -> SpectralDecomposition:
    """
    Symmetric eigendecomposition with ascending eigenvalues.

    Args:
        s: Shift operator or symmetric matrix
        method: "eigh" (LAPACK) or "jacobi" (cyclic Jacobi rotations)
        max_sweeps: Jacobi sweep budget
        tol: Jacobi off-diagonal tolerance, relative to max(||S||_F, 1)

    Raises:
        InputError: Matrix not symmetric
        NumericError: Solver failed to converge
        ConfigurationError: Unknown method
    """
    matrix = s.matrix if isinstance(s, ShiftOperator) else np.asarray(s, dtype=float)
    check_symmetric(matrix)

    if method == "eigh":
        try:
            eigenvalues, eigenvectors = np.linalg.eigh(matrix)
        except np.linalg.LinAlgError as e:
            raise NumericError(f"eigh failed: {e}") from e
    elif method == "jacobi":
        eigenvalues, eigenvectors = _jacobi(matrix, max_sweeps, tol)
        order = np.argsort(eigenvalues, kind="stable")
        eigenvalues, eigenvectors = eigenvalues[order], eigenvectors[:, order]
    else:
        raise ConfigurationError(f"Unknown eigensolver '{method}' (use eigh or jacobi)")

    return SpectralDecomposition(eigenvalues=eigenvalues, eigenvectors=eigenvectors)
