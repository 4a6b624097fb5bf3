"""
Run configuration files.

A config file holds any of the blocks graph, filter, gcnn, res, signal,
train, sweep, bound, lipschitz and stability. Each maps onto a frozen
dataclass below; missing keys keep the defaults from settings.
"""

import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional, Union, get_args, get_origin, get_type_hints

from gcnnstab.config.settings import (
    BOUND_SLACK,
    DEFAULT_BATCH_SIZE,
    DEFAULT_BETAS,
    DEFAULT_COMMUNITIES,
    DEFAULT_EPOCHS,
    DEFAULT_FEATURES,
    DEFAULT_LAYERS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_LIPSCHITZ_SAMPLES,
    DEFAULT_NODES,
    DEFAULT_NOISE_STD,
    DEFAULT_NONLINEARITY,
    DEFAULT_ORDER,
    DEFAULT_P_INTER,
    DEFAULT_P_INTRA,
    DEFAULT_POLICY,
    DEFAULT_READOUT,
    DEFAULT_REFINE_ROUNDS,
    DEFAULT_SAMPLING_PROBABILITY,
    DEFAULT_SEED,
    DEFAULT_SPLITS,
    DEFAULT_T_MAX,
    DEFAULT_TRIALS,
)
from gcnnstab.errors import ConfigurationError
from gcnnstab.parsers.base_parser import ConfigBlock
from gcnnstab.parsers.block_parser import BlockParser

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GraphConfig:
    """
    kind: sbm (generated), edgelist (read from path) or edges (inline list).
    """

    kind: str = "sbm"
    n: int = DEFAULT_NODES
    communities: int = DEFAULT_COMMUNITIES
    p_intra: float = DEFAULT_P_INTRA
    p_inter: float = DEFAULT_P_INTER
    path: Optional[str] = None
    edges: Optional[tuple] = None
    shift: str = "normalized_adjacency"

    def __post_init__(self):
        if self.kind not in ("sbm", "edgelist", "edges"):
            raise ConfigurationError(f"graph.kind must be sbm, edgelist or edges, got {self.kind}")
        if self.kind == "edgelist" and not self.path:
            raise ConfigurationError("graph.kind = edgelist needs a path")
        if self.kind == "edges" and self.edges is None:
            raise ConfigurationError("graph.kind = edges needs an edges list")


@dataclass(frozen=True)
class FilterConfig:
    """Explicit coefficients, or a random filter of the given order."""

    coeffs: Optional[tuple[float, ...]] = None
    order: int = DEFAULT_ORDER


@dataclass(frozen=True)
class GCNNConfig:
    layers: int = DEFAULT_LAYERS
    features: int = DEFAULT_FEATURES
    order: int = DEFAULT_ORDER
    nonlinearity: str = DEFAULT_NONLINEARITY
    policy: str = DEFAULT_POLICY
    readout: str = DEFAULT_READOUT
    linear: bool = False
    checkpoint: Optional[str] = None


@dataclass(frozen=True)
class ResConfig:
    p: float = DEFAULT_SAMPLING_PROBABILITY
    seed: int = DEFAULT_SEED


@dataclass(frozen=True)
class SignalConfig:
    """
    kind: random (unit-norm Gaussian), ones, delta (at node) or values.
    """

    kind: str = "random"
    node: int = 0
    values: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind not in ("random", "ones", "delta", "values"):
            raise ConfigurationError(
                f"signal.kind must be random, ones, delta or values, got {self.kind}"
            )
        if self.kind == "values" and self.values is None:
            raise ConfigurationError("signal.kind = values needs a values list")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = DEFAULT_LEARNING_RATE
    betas: tuple[float, float] = DEFAULT_BETAS
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    t_max: int = DEFAULT_T_MAX
    noise_std: float = DEFAULT_NOISE_STD
    splits: tuple[int, int, int] = DEFAULT_SPLITS


@dataclass(frozen=True)
class SweepConfig:
    variable: str = "p"
    grid: tuple = (0.94, 0.95, 0.96, 0.97, 0.98, 0.99)
    p: float = DEFAULT_SAMPLING_PROBABILITY
    metric: str = "accuracy"
    train: bool = True
    name: Optional[str] = None


@dataclass(frozen=True)
class BoundConfig:
    """
    Explicit bound inputs. When n, alpha and c_l are all given the bound
    is evaluated in closed form without building a graph.
    """

    n: Optional[int] = None
    alpha: Optional[float] = None
    c_l: Optional[float] = None
    p: Optional[float] = None
    x_norm_sq: float = 1.0
    layers: int = 1
    features: int = 1
    c_sigma: float = 1.0

    @property
    def closed_form(self) -> bool:
        return self.n is not None and self.alpha is not None and self.c_l is not None


@dataclass(frozen=True)
class LipschitzConfig:
    samples: int = DEFAULT_LIPSCHITZ_SAMPLES
    refine_rounds: int = DEFAULT_REFINE_ROUNDS
    interval: Optional[tuple[float, float]] = None


@dataclass(frozen=True)
class StabilityConfig:
    """
    target: filter or gcnn. draws is the realization count of moment checks.
    """

    target: str = "filter"
    trials: int = DEFAULT_TRIALS
    slack: float = BOUND_SLACK
    draws: int = 10000
    epsilons: tuple[float, ...] = (0.1, 0.3, 0.6)

    def __post_init__(self):
        if self.target not in ("filter", "gcnn"):
            raise ConfigurationError(f"stability.target must be filter or gcnn, got {self.target}")


@dataclass(frozen=True)
class RunConfig:
    """All blocks of one config file."""

    graph: GraphConfig = field(default_factory=GraphConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    gcnn: GCNNConfig = field(default_factory=GCNNConfig)
    res: ResConfig = field(default_factory=ResConfig)
    signal: SignalConfig = field(default_factory=SignalConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    bound: BoundConfig = field(default_factory=BoundConfig)
    lipschitz: LipschitzConfig = field(default_factory=LipschitzConfig)
    stability: StabilityConfig = field(default_factory=StabilityConfig)
    source: Optional[Path] = field(default=None, compare=False)
    present: frozenset = field(default_factory=frozenset, compare=False)

    @property
    def seed(self) -> int:
        return self.res.seed

    def with_overrides(
        self, seed: Optional[int] = None, trials: Optional[int] = None
    ) -> "RunConfig":
        """Apply command-line overrides."""
        config = self
        if seed is not None:
            config = replace(config, res=replace(config.res, seed=seed))
        if trials is not None:
            config = replace(config, stability=replace(config.stability, trials=trials))
        return config

    def experiment_config(self):
        """ExperimentConfig of the source localization pipeline."""
        from gcnnstab.tools.experiments import ExperimentConfig

        g, net, tr = self.graph, self.gcnn, self.train
        return ExperimentConfig(
            n=g.n,
            communities=g.communities,
            p_intra=g.p_intra,
            p_inter=g.p_inter,
            t_max=tr.t_max,
            noise_std=tr.noise_std,
            splits=tr.splits,
            layers=net.layers,
            features=net.features,
            order=net.order,
            nonlinearity=net.nonlinearity,
            readout=net.readout,
            policy=net.policy,
            lr=tr.lr,
            betas=tr.betas,
            epochs=tr.epochs,
            batch_size=tr.batch_size,
            linear=net.linear,
            seed=self.seed,
        )


_BLOCKS = {f.name: f for f in fields(RunConfig) if f.name not in ("source", "present")}


def _matches(value: Any, annotation: Any) -> bool:
    origin = get_origin(annotation)
    if origin is Union:
        return any(_matches(value, arg) for arg in get_args(annotation))
    if annotation is type(None):
        return value is None
    if annotation is bool:
        return isinstance(value, bool)
    if annotation is int:
        return isinstance(value, int) and not isinstance(value, bool)
    if annotation is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if annotation is str:
        return isinstance(value, str)
    if annotation is tuple or origin is tuple:
        if not isinstance(value, (list, tuple)):
            return False
        args = get_args(annotation)
        if not args:
            return True
        if len(args) == 2 and args[1] is Ellipsis:
            return all(_matches(v, args[0]) for v in value)
        return len(args) == len(value) and all(_matches(v, a) for v, a in zip(value, args))
    return True


def _coerce(value: Any, annotation: Any) -> Any:
    if isinstance(value, list):
        value = tuple(_coerce(v, None) for v in value)
    if annotation is float and isinstance(value, int):
        return float(value)
    return value


def _build(cls: type, block: ConfigBlock) -> Any:
    hints = get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    values = {}
    for key, value in block.entries.items():
        if key not in known:
            raise ConfigurationError(
                f"Unknown key '{key}' in block '{block.name}' (line {block.line}); "
                f"expected one of: {', '.join(sorted(known))}"
            )
        if not _matches(value, hints[key]):
            raise ConfigurationError(
                f"Invalid value {value!r} for '{block.name}.{key}' (line {block.line})"
            )
        values[key] = _coerce(value, hints[key])
    return cls(**values)


def config_from_blocks(blocks: list[ConfigBlock], source: Optional[Path] = None) -> RunConfig:
    """
    Map parsed blocks onto a RunConfig.

    Raises:
        ConfigurationError: Unknown or duplicate block, unknown key or wrong value type
    """
    sections: dict[str, Any] = {}
    for block in blocks:
        if block.name not in _BLOCKS:
            raise ConfigurationError(
                f"Unknown block '{block.name}' (line {block.line}); "
                f"expected one of: {', '.join(_BLOCKS)}"
            )
        if block.name in sections:
            raise ConfigurationError(f"Duplicate block '{block.name}' (line {block.line})")
        section_type = _BLOCKS[block.name].default_factory  # type: ignore[misc]
        sections[block.name] = _build(section_type, block)
    logger.debug("Loaded blocks: %s", ", ".join(sections) or "(none)")
    return RunConfig(**sections, source=source, present=frozenset(sections))


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Load a config file; all defaults when path is None.

    Raises:
        ConfigurationError: If the file cannot be read or is invalid
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    return config_from_blocks(BlockParser().parse_file(path), source=path)


__all__ = [
    "BoundConfig",
    "FilterConfig",
    "GCNNConfig",
    "GraphConfig",
    "LipschitzConfig",
    "ResConfig",
    "RunConfig",
    "SignalConfig",
    "StabilityConfig",
    "SweepConfig",
    "TrainConfig",
    "config_from_blocks",
    "load_config",
]
