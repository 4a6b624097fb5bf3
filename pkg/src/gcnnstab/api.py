"""
Python API for programmatic access to gcnnstab.

Provides a high-level class that builds graphs, filters, networks and
perturbation models from a run configuration and runs the stability
studies on them.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from gcnnstab.config.loader import RunConfig, load_config
from gcnnstab.core.filters import (
    FrequencySpace,
    GraphFilter,
    LipschitzEstimate,
    estimate_integral_lipschitz,
)
from gcnnstab.core.gcnn import GCNN
from gcnnstab.core.graph import Graph, ShiftOperator, sbm_generate, shift_from_graph
from gcnnstab.core.perturbation import RESModel, check_moments
from gcnnstab.core.stability import (
    StabilityConstant,
    StabilityReport,
    alpha_for,
    first_order_bound,
    gcnn_constant,
    probability_bound,
    verify_filter_stability,
    verify_gcnn_stability,
)
from gcnnstab.errors import ConfigurationError
from gcnnstab.parsers.base_parser import ConfigBlock
from gcnnstab.parsers.edgelist_parser import graph_from_block, load_edgelist
from gcnnstab.tools.experiments import ExperimentResult, SourceLocalizationExperiment
from gcnnstab.tools.sweeper import SweepSpec, SweepTable, run_sweep
from gcnnstab.util.parallel import resolve_threads
from gcnnstab.util.rng import Purpose, counter_stream
from gcnnstab.util.storage import ResultStorage

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundValue:
    """A first-order bound together with its constant."""

    value: float
    constant: StabilityConstant
    p: float
    x_norm_sq: float
    c_l: Optional[LipschitzEstimate] = None


class StabilityStudy:
    """
    Main API class for stability studies.

    Everything is built lazily from the configuration, so constructing a
    study is cheap and only the parts a command needs are computed.

    Example:
        >>> from gcnnstab import StabilityStudy
        >>>
        >>> study = StabilityStudy.from_file("ex/2node.cfg")
        >>> report = study.verify()
        >>> print(report.empirical_mean_sq_dev, report.bound_first_order)
    """

    def __init__(
        self,
        config: Optional[RunConfig] = None,
        storage_path: Optional[Union[str, Path]] = None,
        threads: Optional[int] = None,
        show_progress: bool = False,
    ):
        """
        Initialize a study.

        Args:
            config: Run configuration (all defaults when None)
            storage_path: Output directory (default: ./gcnnstab_runs)
            threads: Worker threads; GCNN_STAB_THREADS overrides it
            show_progress: Whether to show progress bars
        """
        self.config = config or RunConfig()
        self.threads = resolve_threads(threads)
        self.show_progress = show_progress
        self._storage_path = storage_path

        # Lazy initialization
        self._storage: Optional[ResultStorage] = None
        self._graph: Optional[Graph] = None
        self._shift: Optional[ShiftOperator] = None
        self._network: Optional[GCNN] = None
        self._experiment: Optional[SourceLocalizationExperiment] = None

    @classmethod
    def from_file(cls, path: Union[str, Path], **kwargs) -> "StabilityStudy":
        return cls(load_config(path), **kwargs)

    @property
    def storage(self) -> ResultStorage:
        """Get or create storage instance."""
        if self._storage is None:
            self._storage = ResultStorage(self._storage_path)
        return self._storage

    @property
    def graph(self) -> Graph:
        if self._graph is None:
            cfg = self.config.graph
            if cfg.kind == "sbm":
                self._graph = sbm_generate(
                    cfg.n, cfg.communities, cfg.p_intra, cfg.p_inter, self.config.seed
                )
            elif cfg.kind == "edgelist":
                path = Path(cfg.path)
                if not path.is_absolute() and self.config.source is not None:
                    path = self.config.source.parent / path
                self._graph = load_edgelist(path)
            else:
                block = ConfigBlock("graph", {"n": cfg.n, "edges": cfg.edges})
                self._graph = graph_from_block(block)
            logger.debug("Graph with %d nodes and %d edges", self._graph.n, self._graph.num_edges)
        return self._graph

    @property
    def shift(self) -> ShiftOperator:
        if self._shift is None:
            self._shift = shift_from_graph(self.graph, self.config.graph.shift)
        return self._shift

    def res_model(self, p: Optional[float] = None) -> RESModel:
        p = self.config.res.p if p is None else p
        return RESModel.from_shift(self.shift, p, self.config.seed)

    def signal(self) -> np.ndarray:
        """Input signal described by the signal block."""
        cfg = self.config.signal
        n = self.shift.n
        if cfg.kind == "values":
            x = np.asarray(cfg.values, dtype=float)
            if x.shape != (n,):
                raise ConfigurationError(f"signal.values has {x.size} entries for {n} nodes")
            return x
        if cfg.kind == "ones":
            return np.ones(n)
        if cfg.kind == "delta":
            if not 0 <= cfg.node < n:
                raise ConfigurationError(f"signal.node={cfg.node} out of range for n={n}")
            x = np.zeros(n)
            x[cfg.node] = 1.0
            return x
        x = counter_stream(self.config.seed, Purpose.SIGNAL).standard_normal(n)
        return x / np.linalg.norm(x)

    def graph_filter(self) -> GraphFilter:
        """Filter from the filter block; random coefficients when none are given."""
        cfg = self.config.filter
        if cfg.coeffs is not None:
            return GraphFilter(np.asarray(cfg.coeffs, dtype=float))
        return GCNN.filter_bank(cfg.order, seed=self.config.seed).filter(0, 0, 0)

    def network(self) -> GCNN:
        """GCNN from the gcnn block, or the checkpoint it names."""
        if self._network is None:
            cfg = self.config.gcnn
            if cfg.checkpoint:
                self._network = self.storage.load_checkpoint(cfg.checkpoint)
            elif cfg.linear:
                self._network = GCNN.filter_bank(cfg.order, seed=self.config.seed)
            else:
                self._network = GCNN.random(
                    cfg.layers, cfg.features, cfg.order, 1, cfg.nonlinearity, seed=self.config.seed
                )
        return self._network

    def _estimate(self, f: GraphFilter) -> LipschitzEstimate:
        cfg = self.config.lipschitz
        space = (
            FrequencySpace.parse(cfg.interval)
            if cfg.interval is not None
            else FrequencySpace.from_shift(self.shift)
        )
        return estimate_integral_lipschitz(
            f, space, cfg.samples, self.config.seed, cfg.refine_rounds, self.threads
        )

    def lipschitz(self) -> LipschitzEstimate:
        """c_L of the filter, or the worst case over the network's filters."""
        if self.config.stability.target == "filter":
            return self._estimate(self.graph_filter())
        return LipschitzEstimate.combine([self._estimate(f) for f in self.network().filters()])

    def bound(self) -> BoundValue:
        """
        First-order bound C (1-p) ||x||^2.

        With n, alpha and c_l in the bound block the value is computed in
        closed form; otherwise everything is derived from the graph, the
        filter or network, and the signal.
        """
        cfg = self.config.bound
        p = cfg.p if cfg.p is not None else self.config.res.p
        if cfg.closed_form:
            constant = StabilityConstant(
                cfg.n, cfg.alpha, cfg.c_l, cfg.layers, cfg.features, cfg.c_sigma
            )
            value = first_order_bound(
                cfg.n, cfg.alpha, cfg.c_l, p, cfg.x_norm_sq, cfg.layers, cfg.features, cfg.c_sigma
            )
            return BoundValue(value, constant, p, cfg.x_norm_sq)

        if not 0.0 < p <= 1.0:
            raise ConfigurationError(f"Sampling probability p={p} must lie in (0, 1]")
        cl = self.lipschitz()
        x_norm_sq = float(np.sum(self.signal() ** 2))
        if self.config.stability.target == "filter":
            constant = StabilityConstant(self.shift.n, alpha_for(self.shift), cl.c_l)
        else:
            constant = gcnn_constant(self.network(), self.shift, cl)
        return BoundValue(constant.bound(p, x_norm_sq), constant, p, x_norm_sq, cl)

    def verify(self, p: Optional[float] = None) -> StabilityReport:
        """Monte Carlo deviation against the bound for the configured target."""
        cfg = self.config.stability
        m = self.res_model(p)
        cl = self.lipschitz()
        if cfg.target == "filter":
            return verify_filter_stability(
                self.graph_filter(),
                m,
                self.signal(),
                cfg.trials,
                cl=cl,
                slack=cfg.slack,
                threads=self.threads,
                show_progress=self.show_progress,
            )
        return verify_gcnn_stability(
            self.network(),
            m,
            self.signal(),
            cfg.trials,
            policy=self.config.gcnn.policy,
            cl=cl,
            slack=cfg.slack,
            threads=self.threads,
            show_progress=self.show_progress,
        )

    def probability_bounds(self, report: StabilityReport) -> list[tuple[float, float, float]]:
        """(epsilon, lower bound, observed fraction) for each configured epsilon."""
        return [(eps, *probability_bound(report, eps)) for eps in self.config.stability.epsilons]

    def moments(self, p: Optional[float] = None) -> tuple[float, Optional[float]]:
        return check_moments(self.res_model(p), self.config.stability.draws, self.show_progress)

    def experiment(self) -> SourceLocalizationExperiment:
        if self._experiment is None:
            self._experiment = SourceLocalizationExperiment(
                self.config.experiment_config(), show_progress=self.show_progress
            )
        return self._experiment

    def train(self) -> ExperimentResult:
        return self.experiment().run()

    def sweep_spec(self) -> SweepSpec:
        cfg = self.config.sweep
        return SweepSpec(
            variable=cfg.variable,
            grid=tuple(cfg.grid),
            fixed=self.config.experiment_config(),
            trials=self.config.stability.trials,
            p=cfg.p,
            metric=cfg.metric,
            train=cfg.train,
        )

    def sweep(self, write: bool = True) -> SweepTable:
        spec = self.sweep_spec()
        return run_sweep(
            spec,
            threads=self.threads,
            storage=self.storage if write else None,
            name=self.config.sweep.name,
            show_progress=self.show_progress,
        )
