"""
Parameter sweeps over p, F, K, n or L.

Each grid point derives its experiment configuration from the fixed one,
trains a model when the swept variable changes the architecture or the
graph (one shared model for p sweeps), and measures either the accuracy
lost under perturbation or the mean squared output deviation. Points are
independent tasks; rows are assembled in grid order.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from gcnnstab.config.settings import DEFAULT_TRIALS
from gcnnstab.core.stability import mc_gcnn_deviation
from gcnnstab.errors import ConfigurationError, TrainingDivergedError
from gcnnstab.tools.experiments import ExperimentConfig, SourceLocalizationExperiment
from gcnnstab.util.parallel import parallel_map
from gcnnstab.util.storage import ResultStorage

logger = logging.getLogger(__name__)

SWEEP_HEADER = ("variable", "value", "mean", "std", "std_error", "trials", "status")

# Config field each sweep variable drives.
_FIELDS = {"F": "features", "K": "order", "n": "n", "L": "layers"}


class SweepMetric(str, Enum):
    ACCURACY = "accuracy"
    DEVIATION = "deviation"


@dataclass(frozen=True)
class SweepSpec:
    """
    One sweep.

    Attributes:
        variable: p, F, K, n or L
        grid: Ascending values of the variable
        fixed: Configuration of everything else
        trials: Monte Carlo trials per point
        p: Sampling probability for sweeps over the other variables
        metric: accuracy (difference) or deviation (mean squared output change)
        train: Train a model per point; untrained random models otherwise
    """

    variable: str
    grid: tuple
    fixed: ExperimentConfig = field(default_factory=ExperimentConfig)
    trials: int = DEFAULT_TRIALS
    p: float = 0.97
    metric: SweepMetric = SweepMetric.ACCURACY
    train: bool = True

    def __post_init__(self):
        if self.variable not in ("p", *_FIELDS):
            raise ConfigurationError(
                f"Unknown sweep variable '{self.variable}' (choose from p, F, K, n, L)"
            )
        grid = tuple(self.grid)
        if not grid:
            raise ConfigurationError("Sweep grid is empty")
        if list(grid) != sorted(grid):
            raise ConfigurationError(f"Sweep grid must be sorted ascending: {grid}")
        if self.variable != "p":
            grid = tuple(int(v) for v in grid)
        object.__setattr__(self, "grid", grid)
        try:
            metric = SweepMetric(getattr(self.metric, "value", self.metric))
        except ValueError:
            raise ConfigurationError(
                f"Unknown sweep metric '{self.metric}' (accuracy or deviation)"
            ) from None
        object.__setattr__(self, "metric", metric)
        if self.trials < 2:
            raise ConfigurationError(f"A sweep needs at least two trials, got {self.trials}")

    def config_at(self, value) -> ExperimentConfig:
        if self.variable == "p":
            return self.fixed
        return self.fixed.with_value(_FIELDS[self.variable], value)

    def p_at(self, value) -> float:
        return float(value) if self.variable == "p" else self.p


@dataclass(frozen=True)
class SweepRow:
    variable: str
    value: float
    mean: float
    std: float
    trials: int
    status: str = "ok"

    @property
    def std_error(self) -> float:
        return self.std / np.sqrt(self.trials) if self.trials else float("nan")

    def as_tuple(self) -> tuple:
        return (
            self.variable,
            self.value,
            self.mean,
            self.std,
            self.std_error,
            self.trials,
            self.status,
        )


@dataclass
class SweepTable:
    spec: SweepSpec
    rows: list[SweepRow]

    @property
    def failed(self) -> list[SweepRow]:
        return [row for row in self.rows if row.status != "ok"]

    def plot_data(self) -> list[tuple[float, float, float]]:
        """(x, y, yerr) triplets of the successful points."""
        return [(row.value, row.mean, row.std_error) for row in self.rows if row.status == "ok"]


def _measure(experiment: SourceLocalizationExperiment, spec: SweepSpec, value) -> SweepRow:
    p = spec.p_at(value)
    if spec.metric is SweepMetric.ACCURACY:
        result = experiment.accuracy_deviation(p, spec.trials)
        return SweepRow(spec.variable, value, result.difference, result.std, spec.trials)

    _, shift, dataset = experiment.setup()
    net = experiment.run().net if spec.train else experiment.build_model(dataset.classes)
    stats = mc_gcnn_deviation(
        net,
        shift,
        experiment.res_model(p),
        experiment.config.policy,
        experiment.probe_signal(),
        spec.trials,
    )
    return SweepRow(spec.variable, value, stats.mean, stats.std, spec.trials)


def _failed(spec: SweepSpec, value, error: Exception) -> SweepRow:
    logger.warning("Sweep point %s=%s failed: %s", spec.variable, value, error)
    return SweepRow(spec.variable, value, float("nan"), float("nan"), 0, status="failed")


def run_sweep(
    spec: SweepSpec,
    threads: int = 1,
    storage: Optional[ResultStorage] = None,
    name: Optional[str] = None,
    show_progress: bool = False,
) -> SweepTable:
    """
    Run every grid point and assemble the table in grid order.

    A p sweep trains one model up front and reuses it for all points.
    Training divergence marks the affected rows failed; the sweep
    continues.

    Args:
        spec: Sweep description
        threads: Grid points evaluated concurrently
        storage: When given, the table is written as <name>.csv plus
            <name>.dat plot data
        name: Output name (defaults to sweep_<variable>)
        show_progress: Whether to show tqdm progress bars

    Returns:
        SweepTable
    """
    shared: Optional[SourceLocalizationExperiment] = None
    shared_error: Optional[TrainingDivergedError] = None
    if spec.variable == "p":
        shared = SourceLocalizationExperiment(spec.fixed, show_progress=show_progress)
        shared.setup()
        if spec.train or spec.metric is SweepMetric.ACCURACY:
            try:
                shared.run()
            except TrainingDivergedError as e:
                shared_error = e

    def _point(value) -> SweepRow:
        if shared_error is not None:
            return _failed(spec, value, shared_error)
        experiment = shared or SourceLocalizationExperiment(spec.config_at(value))
        try:
            return _measure(experiment, spec, value)
        except TrainingDivergedError as e:
            return _failed(spec, value, e)

    rows = parallel_map(
        _point,
        spec.grid,
        threads=threads,
        desc=f"Sweep {spec.variable}",
        show_progress=show_progress,
    )
    table = SweepTable(spec, rows)
    if storage is not None:
        write_sweep(storage, table, name or f"sweep_{spec.variable}")
    return table


def write_sweep(storage: ResultStorage, table: SweepTable, name: str) -> None:
    """Write <name>.csv and the <name>.dat plot data."""
    storage.write_csv(f"{name}.csv", SWEEP_HEADER, [row.as_tuple() for row in table.rows])
    storage.write_plot_data(f"{name}.dat", table.plot_data())
