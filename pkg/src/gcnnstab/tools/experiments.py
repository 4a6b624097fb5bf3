"""
Desk-scale source localization and accuracy-under-perturbation runs.

The pipeline samples an SBM graph, places one candidate source in each
community, generates diffused noisy deltas, trains a GCNN (or a linear
filter bank) with ADAM on the nominal graph and finally measures how much
accuracy is lost when the trained model runs over RES(G, p) realizations.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from gcnnstab.config.settings import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_BETAS,
    DEFAULT_COMMUNITIES,
    DEFAULT_EPOCHS,
    DEFAULT_FEATURES,
    DEFAULT_LAYERS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_NODES,
    DEFAULT_NOISE_STD,
    DEFAULT_NONLINEARITY,
    DEFAULT_ORDER,
    DEFAULT_P_INTER,
    DEFAULT_P_INTRA,
    DEFAULT_POLICY,
    DEFAULT_READOUT,
    DEFAULT_SEED,
    DEFAULT_SPLITS,
    DEFAULT_T_MAX,
)
from gcnnstab.core.filters import ShiftLike
from gcnnstab.core.gcnn import (
    GCNN,
    Loss,
    Readout,
    StochasticRealizationPolicy,
    gcnn_forward,
    gcnn_forward_stochastic,
    readout_classify,
)
from gcnnstab.core.graph import Graph, ShiftOperator, ShiftVariant, sbm_generate, shift_from_graph
from gcnnstab.core.perturbation import RESModel
from gcnnstab.errors import ConfigurationError
from gcnnstab.tools.datasets import (
    SignalSet,
    SourceDataset,
    community_sources,
    make_source_dataset,
)
from gcnnstab.tools.trainer import LossTrace, evaluate, train_adam
from gcnnstab.util.parallel import parallel_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AccuracyDeviation:
    """Nominal accuracy against the mean accuracy over perturbed runs."""

    nominal_accuracy: float
    perturbed_accuracy: float
    difference: float
    std: float
    trials: int

    @property
    def std_error(self) -> float:
        return self.std / np.sqrt(self.trials)


def _accuracy(output: np.ndarray, labels: np.ndarray, readout: Readout, sources) -> float:
    return float(np.mean(readout_classify(output, readout, sources) == labels))


def run_accuracy_deviation(
    net: GCNN,
    m: RESModel,
    test: SignalSet,
    trials: int,
    policy: Union[str, StochasticRealizationPolicy] = DEFAULT_POLICY,
    readout: Union[str, Readout] = DEFAULT_READOUT,
    sources: Optional[Sequence[int]] = None,
    s: Optional[ShiftLike] = None,
    threads: int = 1,
    show_progress: bool = False,
) -> AccuracyDeviation:
    """
    Accuracy lost by running a trained model over RES(G, p) realizations.

    Trial t evaluates the whole test split under one realization set
    (draw index t); the perturbed accuracy is the mean over trials and
    the difference is nominal minus perturbed. std is the standard
    deviation of the per-trial accuracies.

    Args:
        net: Trained GCNN or filter bank
        m: Perturbation model; m.nominal is used unless s is given
        test: Test signals with integer labels
        trials: Number of perturbed evaluations
    """
    if trials < 1:
        raise ConfigurationError(f"trials must be >= 1, got {trials}")
    readout = Readout.parse(readout)
    policy = StochasticRealizationPolicy.parse(policy)
    nominal_output, _ = gcnn_forward(net, m.nominal if s is None else s, test.x)
    nominal = _accuracy(nominal_output, test.labels, readout, sources)

    def _trial(draw_index: int) -> float:
        output = gcnn_forward_stochastic(net, m, policy, test.x, draw_index)
        return _accuracy(output, test.labels, readout, sources)

    accuracies = np.asarray(
        parallel_map(
            _trial,
            range(trials),
            threads=threads,
            desc="Perturbed runs",
            show_progress=show_progress,
        )
    )
    perturbed = float(np.mean(accuracies))
    std = float(np.std(accuracies, ddof=1)) if trials > 1 else 0.0
    return AccuracyDeviation(nominal, perturbed, nominal - perturbed, std, trials)


@dataclass(frozen=True)
class ExperimentConfig:
    """Hyperparameters of one source localization run."""

    n: int = DEFAULT_NODES
    communities: int = DEFAULT_COMMUNITIES
    p_intra: float = DEFAULT_P_INTRA
    p_inter: float = DEFAULT_P_INTER
    t_max: int = DEFAULT_T_MAX
    noise_std: float = DEFAULT_NOISE_STD
    splits: tuple[int, int, int] = DEFAULT_SPLITS
    layers: int = DEFAULT_LAYERS
    features: int = DEFAULT_FEATURES
    order: int = DEFAULT_ORDER
    nonlinearity: str = DEFAULT_NONLINEARITY
    readout: str = DEFAULT_READOUT
    policy: str = DEFAULT_POLICY
    lr: float = DEFAULT_LEARNING_RATE
    betas: tuple[float, float] = DEFAULT_BETAS
    epochs: int = DEFAULT_EPOCHS
    batch_size: int = DEFAULT_BATCH_SIZE
    linear: bool = False
    seed: int = DEFAULT_SEED

    def with_value(self, name: str, value) -> "ExperimentConfig":
        return replace(self, **{name: value})


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    graph: Graph
    shift: ShiftOperator
    dataset: SourceDataset
    net: GCNN
    trace: LossTrace
    val_accuracy: float
    test_accuracy: float

    @property
    def sources(self) -> tuple[int, ...]:
        return self.dataset.sources


class SourceLocalizationExperiment:
    """
    Source localization on an SBM graph.

    Graph, dataset and model are built lazily and cached, so several
    perturbation studies can share one trained model.

    Args:
        config: Experiment hyperparameters
        show_progress: Whether to show tqdm progress bars
    """

    def __init__(self, config: Optional[ExperimentConfig] = None, show_progress: bool = False):
        self.config = config or ExperimentConfig()
        self.show_progress = show_progress
        self._problem: Optional[tuple[Graph, ShiftOperator, SourceDataset]] = None
        self._result: Optional[ExperimentResult] = None

    def build_graph(self) -> Graph:
        cfg = self.config
        return sbm_generate(cfg.n, cfg.communities, cfg.p_intra, cfg.p_inter, cfg.seed)

    def build_model(self, classes: int) -> GCNN:
        """Initial GCNN, or a linear filter bank when config.linear is set."""
        cfg = self.config
        readout = Readout.parse(cfg.readout)
        out_features = 1 if readout is Readout.SOURCE_NODES else classes
        if cfg.linear:
            return GCNN.filter_bank(cfg.order, out_features, seed=cfg.seed)
        return GCNN.random(
            cfg.layers, cfg.features, cfg.order, out_features, cfg.nonlinearity, seed=cfg.seed
        )

    def setup(self) -> tuple[Graph, ShiftOperator, SourceDataset]:
        """Graph, nominal normalized adjacency and dataset (cached)."""
        if self._problem is None:
            cfg = self.config
            graph = self.build_graph()
            shift = shift_from_graph(graph, ShiftVariant.NORMALIZED_ADJACENCY)
            dataset = make_source_dataset(
                graph,
                community_sources(graph),
                cfg.t_max,
                cfg.noise_std,
                cfg.splits,
                cfg.seed,
                shift=shift,
            )
            self._problem = (graph, shift, dataset)
        return self._problem

    def probe_signal(self) -> np.ndarray:
        """First test signal (first training signal when there is no test split)."""
        _, _, dataset = self.setup()
        signals = dataset.test if len(dataset.test) else dataset.train
        return signals.x[:, 0]

    def run(self) -> ExperimentResult:
        """Train once; later calls return the cached result."""
        if self._result is not None:
            return self._result

        cfg = self.config
        graph, shift, dataset = self.setup()
        readout = Readout.parse(cfg.readout)
        sources = dataset.sources
        net, trace = train_adam(
            self.build_model(dataset.classes),
            shift,
            dataset.train,
            Loss.SOFTMAX_CROSS_ENTROPY,
            lr=cfg.lr,
            betas=cfg.betas,
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            seed=cfg.seed,
            val=dataset.val,
            readout=readout,
            sources=sources,
            show_progress=self.show_progress,
        )
        _, val_accuracy = evaluate(
            net, shift, dataset.val, Loss.SOFTMAX_CROSS_ENTROPY, readout, sources
        )
        _, test_accuracy = evaluate(
            net, shift, dataset.test, Loss.SOFTMAX_CROSS_ENTROPY, readout, sources
        )
        logger.info(
            "Trained model: val accuracy %.3f, test accuracy %.3f", val_accuracy, test_accuracy
        )
        self._result = ExperimentResult(
            cfg, graph, shift, dataset, net, trace, val_accuracy, test_accuracy
        )
        return self._result

    def res_model(self, p: float) -> RESModel:
        _, shift, _ = self.setup()
        return RESModel.from_shift(shift, p, self.config.seed)

    def accuracy_deviation(
        self,
        p: float,
        trials: int,
        policy: Optional[Union[str, StochasticRealizationPolicy]] = None,
        threads: int = 1,
    ) -> AccuracyDeviation:
        result = self.run()
        return run_accuracy_deviation(
            result.net,
            self.res_model(p),
            result.dataset.test,
            trials,
            policy or self.config.policy,
            self.config.readout,
            result.sources,
            threads=threads,
            show_progress=self.show_progress,
        )
