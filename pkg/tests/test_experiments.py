"""Tests for the source localization experiment and parameter sweeps."""

import numpy as np
import pytest

from gcnnstab.core.gcnn import Nonlinearity
from gcnnstab.errors import ConfigurationError, TrainingDivergedError
from gcnnstab.tools.experiments import (
    ExperimentConfig,
    SourceLocalizationExperiment,
    run_accuracy_deviation,
)
from gcnnstab.tools.sweeper import SWEEP_HEADER, SweepMetric, SweepSpec, run_sweep
from gcnnstab.util.storage import ResultStorage

TINY = ExperimentConfig(
    n=20,
    communities=4,
    splits=(40, 10, 10),
    layers=2,
    features=2,
    order=2,
    epochs=2,
    batch_size=10,
    seed=0,
)


@pytest.fixture
def experiment():
    return SourceLocalizationExperiment(TINY)


class TestExperimentConfig:
    def test_defaults_are_desk_scale(self):
        cfg = ExperimentConfig()
        assert (cfg.n, cfg.communities, cfg.t_max, cfg.noise_std) == (40, 4, 2, 0.1)
        assert cfg.betas == (0.9, 0.999) and cfg.lr == 1e-3
        assert cfg.readout == "source_nodes"

    def test_with_value(self):
        assert TINY.with_value("order", 5).order == 5
        assert TINY.order == 2


class TestSourceLocalizationExperiment:
    def test_setup(self, experiment):
        graph, shift, dataset = experiment.setup()
        assert graph.n == 20 and shift.n == 20
        assert dataset.classes == 4
        assert experiment.setup()[2] is dataset
        assert experiment.probe_signal().shape == (20,)

    def test_model_shapes(self, experiment):
        assert experiment.build_model(4).widths == (1, 2, 1)
        pooled = SourceLocalizationExperiment(TINY.with_value("readout", "max_node_pooling"))
        assert pooled.build_model(4).widths == (1, 2, 4)
        linear = SourceLocalizationExperiment(TINY.with_value("linear", True)).build_model(4)
        assert linear.layers == 1
        assert linear.nonlinearities == (Nonlinearity.IDENTITY,)

    def test_run_is_cached(self, experiment):
        result = experiment.run()
        assert experiment.run() is result
        assert len(result.trace) == 2
        assert 0.0 <= result.test_accuracy <= 1.0
        assert result.sources == result.dataset.sources

    def test_no_loss_at_p_one(self, experiment):
        deviation = experiment.accuracy_deviation(1.0, trials=3)
        assert deviation.difference == pytest.approx(0.0, abs=1e-12)
        assert deviation.std == pytest.approx(0.0, abs=1e-12)
        assert deviation.perturbed_accuracy == pytest.approx(deviation.nominal_accuracy)

    def test_difference_is_nominal_minus_perturbed(self, experiment):
        deviation = experiment.accuracy_deviation(0.8, trials=4, threads=2)
        assert deviation.difference == pytest.approx(
            deviation.nominal_accuracy - deviation.perturbed_accuracy
        )
        assert 0.0 <= deviation.perturbed_accuracy <= 1.0
        assert deviation.trials == 4

    def test_needs_trials(self, experiment):
        result = experiment.run()
        with pytest.raises(ConfigurationError):
            run_accuracy_deviation(result.net, experiment.res_model(0.9), result.dataset.test, 0)


class TestSweepSpec:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"variable": "q", "grid": (1,)},
            {"variable": "p", "grid": ()},
            {"variable": "p", "grid": (0.99, 0.95)},
            {"variable": "K", "grid": (1, 2), "metric": "loss"},
            {"variable": "K", "grid": (1, 2), "trials": 1},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            SweepSpec(**kwargs)

    def test_structural_variables(self):
        spec = SweepSpec("K", (2.0, 3.0), fixed=TINY, metric="deviation")
        assert spec.grid == (2, 3)
        assert spec.metric is SweepMetric.DEVIATION
        assert spec.config_at(3).order == 3
        assert spec.p_at(3) == spec.p

    def test_p_variable(self):
        spec = SweepSpec("p", (0.9, 0.99), fixed=TINY)
        assert spec.config_at(0.9) is TINY
        assert spec.p_at(0.9) == 0.9


class TestRunSweep:
    def test_untrained_deviation_sweep(self, tmp_path):
        spec = SweepSpec("p", (0.8, 1.0), fixed=TINY, trials=4, metric="deviation", train=False)
        table = run_sweep(spec, storage=ResultStorage(tmp_path), name="dev")
        assert [row.value for row in table.rows] == [0.8, 1.0]
        assert table.rows[1].mean == pytest.approx(0.0, abs=1e-20)
        assert table.rows[0].mean >= 0.0
        assert not table.failed

        lines = (tmp_path / "dev.csv").read_text().splitlines()
        assert lines[0] == ",".join(SWEEP_HEADER)
        assert len(lines) == 3
        assert len((tmp_path / "dev.dat").read_text().splitlines()) == 2

    def test_rows_follow_grid_order(self):
        spec = SweepSpec("K", (1, 2, 3), fixed=TINY, trials=2, metric="deviation", train=False)
        serial = run_sweep(spec, threads=1)
        threaded = run_sweep(spec, threads=3)
        assert [row.value for row in threaded.rows] == [1, 2, 3]
        assert [r.mean for r in serial.rows] == [r.mean for r in threaded.rows]

    def test_csv_is_byte_identical_across_threads(self, tmp_path):
        spec = SweepSpec("K", (1, 2, 3), fixed=TINY, trials=2, metric="deviation", train=False)
        run_sweep(spec, threads=1, storage=ResultStorage(tmp_path / "serial"), name="k")
        run_sweep(spec, threads=3, storage=ResultStorage(tmp_path / "threaded"), name="k")
        for table in ("k.csv", "k.dat"):
            serial = (tmp_path / "serial" / table).read_bytes()
            assert serial == (tmp_path / "threaded" / table).read_bytes()

    def test_accuracy_sweep(self):
        spec = SweepSpec("p", (0.9, 1.0), fixed=TINY, trials=2)
        table = run_sweep(spec)
        assert table.rows[1].mean == pytest.approx(0.0, abs=1e-12)
        assert all(-1.0 <= row.mean <= 1.0 for row in table.rows)

    @pytest.mark.parametrize("variable, grid", [("p", (0.9, 0.95)), ("K", (1, 2))])
    def test_divergence_marks_rows_failed(self, monkeypatch, variable, grid):
        def diverge(self):
            raise TrainingDivergedError(0, float("nan"))

        monkeypatch.setattr(SourceLocalizationExperiment, "run", diverge)
        table = run_sweep(SweepSpec(variable, grid, fixed=TINY, trials=2))
        assert len(table.failed) == 2
        assert all(np.isnan(row.mean) for row in table.rows)
        assert table.plot_data() == []


DESK = ExperimentConfig()


@pytest.fixture(scope="module")
def desk():
    return SourceLocalizationExperiment(DESK)


def _drops(points) -> list[str]:
    """Adjacent (value, mean, std_error) pairs where the mean falls by more than 2 std-errors."""
    return [
        f"{a[0]} -> {b[0]}: {a[1]:.4g} -> {b[1]:.4g}"
        for a, b in zip(points, points[1:])
        if b[1] < a[1] - 2.0 * np.hypot(a[2], b[2])
    ]


@pytest.mark.slow
class TestDeskScaleTrends:
    def test_accuracy_loss_shrinks_as_p_grows(self, desk):
        grid = (0.99, 0.98, 0.97, 0.96, 0.95, 0.94)
        losses = [desk.accuracy_deviation(p, 50) for p in grid]
        points = [(p, d.difference, d.std_error) for p, d in zip(grid, losses)]
        assert not _drops(points)

    @pytest.mark.parametrize("variable, grid", [("K", (2, 3, 5)), ("F", (8, 16, 32))])
    def test_deviation_grows_with_architecture(self, variable, grid):
        spec = SweepSpec(variable, grid, fixed=DESK, trials=100, metric="deviation")
        table = run_sweep(spec)
        assert not table.failed
        assert not _drops(table.plot_data())

    def test_gcnn_loses_less_than_filter_bank(self, desk):
        bank = SourceLocalizationExperiment(DESK.with_value("linear", True))
        gcnn_loss = desk.accuracy_deviation(0.95, 100)
        bank_loss = bank.accuracy_deviation(0.95, 100)
        tolerance = 2.0 * np.hypot(gcnn_loss.std_error, bank_loss.std_error)
        assert gcnn_loss.difference <= bank_loss.difference + tolerance
