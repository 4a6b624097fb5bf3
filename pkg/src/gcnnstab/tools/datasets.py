"""
Source localization data: diffused, noisy deltas on a graph.

A sample picks a source s uniformly from the candidate sources and a
diffusion time t uniformly from [0, t_max], then observes
x = S^t delta_s + noise with S the nominal normalized adjacency. The
label is the index of s among the sources.
"""

import logging
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from gcnnstab.config.settings import DEFAULT_NOISE_STD, DEFAULT_SPLITS, DEFAULT_T_MAX
from gcnnstab.core.graph import (
    Graph,
    ShiftOperator,
    ShiftVariant,
    eigendecompose,
    shift_from_graph,
)
from gcnnstab.errors import ConfigurationError, InputError
from gcnnstab.util.rng import Purpose, counter_stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiffusionSample:
    x: np.ndarray
    label: int
    t: int


@dataclass(frozen=True)
class SignalSet:
    """
    A column-stacked set of signals.

    Attributes:
        x: n x N signals
        targets: N class labels, or an array whose last axis has length N
        t: N diffusion times (empty when not applicable)
    """

    x: np.ndarray
    targets: np.ndarray
    t: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __post_init__(self):
        if self.x.ndim != 2 or np.shape(self.targets)[-1] != self.x.shape[1]:
            raise InputError(
                f"Signals {self.x.shape} and targets {np.shape(self.targets)} disagree"
            )

    def __len__(self) -> int:
        return self.x.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return self.targets

    def subset(self, index: np.ndarray) -> "SignalSet":
        return SignalSet(
            x=self.x[:, index],
            targets=self.targets[..., index],
            t=self.t[index] if self.t.size else self.t,
        )

    def samples(self) -> Iterator[DiffusionSample]:
        for i in range(len(self)):
            yield DiffusionSample(self.x[:, i], int(self.targets[i]), int(self.t[i]))


@dataclass(frozen=True, eq=False)
class SourceDataset:
    """Train / validation / test splits of one source localization problem."""

    train: SignalSet
    val: SignalSet
    test: SignalSet
    sources: tuple[int, ...]
    shift: ShiftOperator
    t_max: int
    noise_std: float

    @property
    def classes(self) -> int:
        return len(self.sources)

    def split(self, name: str) -> SignalSet:
        try:
            return {"train": self.train, "val": self.val, "test": self.test}[name]
        except KeyError:
            raise ConfigurationError(f"Unknown split '{name}' (train, val, test)") from None


def community_sources(g: Graph) -> list[int]:
    """
    One candidate source per community: its highest-degree member.

    Ties go to the lowest node index.
    """
    if g.communities is None:
        raise ConfigurationError("Graph has no community labels to pick sources from")
    degrees = g.degrees()
    communities = np.asarray(g.communities)
    sources = []
    for community in sorted(set(communities.tolist())):
        members = np.flatnonzero(communities == community)
        sources.append(int(members[np.argmax(degrees[members])]))
    return sources


def _check_splits(sizes: Sequence[int]) -> tuple[int, int, int]:
    if len(sizes) != 3:
        raise ConfigurationError(f"Expected (train, val, test) sizes, got {tuple(sizes)}")
    train, val, test = (int(v) for v in sizes)
    if train < 1 or val < 0 or test < 0:
        raise ConfigurationError(f"Invalid split sizes {tuple(sizes)}")
    return train, val, test


def diffusion_table(s: ShiftOperator, sources: Sequence[int], t_max: int) -> np.ndarray:
    """Clean signals S^t delta_s, shape (t_max + 1, len(sources), n)."""
    table = np.zeros((t_max + 1, len(sources), s.n))
    table[0, np.arange(len(sources)), list(sources)] = 1.0
    for t in range(1, t_max + 1):
        table[t] = table[t - 1] @ s.matrix
    return table


def make_source_dataset(
    g: Graph,
    sources: Sequence[int],
    t_max: int = DEFAULT_T_MAX,
    noise_std: float = DEFAULT_NOISE_STD,
    sizes: Sequence[int] = DEFAULT_SPLITS,
    seed: int = 0,
    shift: Optional[ShiftOperator] = None,
) -> SourceDataset:
    """
    Generate disjoint train/val/test splits.

    Sample i is drawn from its own stream (seed, DATASET, i); the first
    sizes[0] samples form the training split, the next sizes[1] the
    validation split and the rest the test split.

    Args:
        g: Graph
        sources: Candidate source nodes; label c means sources[c]
        t_max: Largest diffusion time
        noise_std: Standard deviation of the additive Gaussian noise
        sizes: (train, val, test) sample counts
        seed: Random seed
        shift: Diffusion operator; the normalized adjacency of g by default

    Raises:
        ConfigurationError: Empty or invalid sources, negative t_max or
            noise, invalid split sizes
    """
    train, val, test = _check_splits(sizes)
    sources = tuple(int(v) for v in sources)
    if not sources:
        raise ConfigurationError("At least one source node is required")
    if len(set(sources)) != len(sources) or min(sources) < 0 or max(sources) >= g.n:
        raise ConfigurationError(f"Sources {sources} must be distinct nodes of a {g.n}-node graph")
    if t_max < 0:
        raise ConfigurationError(f"t_max must be >= 0, got {t_max}")
    if noise_std < 0:
        raise ConfigurationError(f"noise_std must be >= 0, got {noise_std}")

    s = shift or shift_from_graph(g, ShiftVariant.NORMALIZED_ADJACENCY)
    table = diffusion_table(s, sources, t_max)
    total = train + val + test

    x = np.empty((g.n, total))
    labels = np.empty(total, dtype=int)
    times = np.empty(total, dtype=int)
    for i in range(total):
        rng = counter_stream(seed, Purpose.DATASET, i)
        labels[i] = rng.integers(len(sources))
        times[i] = rng.integers(t_max + 1)
        x[:, i] = table[times[i], labels[i]] + noise_std * rng.standard_normal(g.n)

    full = SignalSet(x, labels, times)
    logger.debug("Generated %d samples over %d sources", total, len(sources))
    return SourceDataset(
        train=full.subset(np.arange(train)),
        val=full.subset(np.arange(train, train + val)),
        test=full.subset(np.arange(train + val, total)),
        sources=sources,
        shift=s,
        t_max=t_max,
        noise_std=noise_std,
    )


def nearest_source_baseline(dataset: SourceDataset, split: str = "test") -> float:
    """
    Accuracy of a nearest-template classifier working in the graph
    Fourier domain.

    Every (source, t) pair gives a clean template lambda^t * V^T delta_s;
    a signal is assigned the source of the closest template.
    """
    signals = dataset.split(split)
    if len(signals) == 0:
        raise InputError(f"Split '{split}' is empty")
    decomposition = eigendecompose(dataset.shift)
    lam = decomposition.eigenvalues
    deltas = decomposition.eigenvectors[list(dataset.sources), :]
    templates = np.stack([deltas * lam**t for t in range(dataset.t_max + 1)])
    flat = templates.reshape(-1, lam.size)
    x_hat = decomposition.gft(signals.x)

    distances = (
        np.sum(flat**2, axis=1)[:, None] - 2.0 * flat @ x_hat + np.sum(x_hat**2, axis=0)[None, :]
    )
    nearest = np.argmin(distances, axis=0) % dataset.classes
    return float(np.mean(nearest == signals.labels))
