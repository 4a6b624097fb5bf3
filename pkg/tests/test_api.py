"""Tests for the StabilityStudy API."""

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from gcnnstab import RunConfig, StabilityStudy, Verdict, load_config
from gcnnstab.config.loader import GCNNConfig, GraphConfig, SignalConfig, StabilityConfig
from gcnnstab.errors import ConfigurationError
from gcnnstab.util.storage import ResultStorage

EX = Path(__file__).resolve().parents[1] / "ex"


def study_for(name: str, tmp_path, **overrides) -> StabilityStudy:
    config = load_config(EX / name).with_overrides(**overrides)
    return StabilityStudy(config, storage_path=tmp_path)


class TestBound:
    def test_closed_form(self, tmp_path):
        result = study_for("thm1.cfg", tmp_path).bound()
        assert result.value == pytest.approx(0.05)
        assert result.constant.value == pytest.approx(5.0)
        assert result.c_l is None

    def test_estimated_on_two_nodes(self, tmp_path):
        result = study_for("2node.cfg", tmp_path).bound()
        assert result.c_l.c_l == pytest.approx(1.0)
        assert result.value == pytest.approx(1.0)
        assert result.x_norm_sq == 1.0

    def test_invalid_probability(self, tmp_path):
        config = load_config(EX / "2node.cfg")
        config = replace(config, res=replace(config.res, p=1.5))
        with pytest.raises(ConfigurationError):
            StabilityStudy(config, storage_path=tmp_path).bound()


class TestVerify:
    def test_two_node_filter(self, tmp_path):
        study = study_for("2node.cfg", tmp_path, trials=2000)
        report = study.verify()
        assert report.p == 0.5
        assert report.empirical_mean_sq_dev == pytest.approx(0.5, abs=0.05)
        assert report.verdict is Verdict.WITHIN_BOUND
        bounds = study.probability_bounds(report)
        assert [eps for eps, _, _ in bounds] == [0.5, 1.0, 2.0]
        assert bounds[-1][1] == pytest.approx(0.5)
        assert bounds[-1][2] == 1.0

    def test_gcnn_target(self, tmp_path):
        config = RunConfig(
            graph=GraphConfig(n=12, communities=3),
            gcnn=GCNNConfig(layers=2, features=2, order=2, policy="shared_per_layer_shift"),
            stability=StabilityConfig(target="gcnn", trials=5),
        )
        study = StabilityStudy(config, storage_path=tmp_path)
        report = study.verify(1.0)
        assert report.empirical_mean_sq_dev == pytest.approx(0.0, abs=1e-20)
        assert report.verdict is Verdict.WITHIN_BOUND
        assert study.lipschitz().c_l >= 0.0


class TestBuilding:
    def test_signal_kinds(self, tmp_path):
        study = study_for("2node.cfg", tmp_path)
        assert_array_equal(study.signal(), [1.0, 0.0])

        for signal, expected in [
            (SignalConfig(kind="ones"), [1.0, 1.0]),
            (SignalConfig(kind="delta", node=1), [0.0, 1.0]),
        ]:
            config = replace(study.config, signal=signal)
            assert_array_equal(StabilityStudy(config).signal(), expected)

        random = StabilityStudy(replace(study.config, signal=SignalConfig()))
        assert np.linalg.norm(random.signal()) == pytest.approx(1.0)

    @pytest.mark.parametrize(
        "signal",
        [SignalConfig(kind="delta", node=2), SignalConfig(kind="values", values=(1.0,))],
    )
    def test_invalid_signal(self, tmp_path, signal):
        study = study_for("2node.cfg", tmp_path)
        with pytest.raises(ConfigurationError):
            StabilityStudy(replace(study.config, signal=signal)).signal()

    def test_edgelist_relative_to_config(self, tmp_path):
        (tmp_path / "ring.edges").write_text("n 4\n0 1\n1 2\n2 3\n3 0\n")
        path = tmp_path / "ring.cfg"
        path.write_text("graph { kind = edgelist, path = ring.edges, shift = laplacian }\n")
        study = StabilityStudy.from_file(path, storage_path=tmp_path)
        assert study.graph.n == 4 and study.graph.num_edges == 4
        assert_array_equal(np.diag(study.shift.matrix), [2.0, 2.0, 2.0, 2.0])

    def test_random_filter_and_network(self, tmp_path):
        study = StabilityStudy(RunConfig(), storage_path=tmp_path)
        assert study.graph_filter().order == 5
        assert study.network().widths == (1, 16, 1)
        assert study.network() is study.network()

    def test_linear_network(self, tmp_path):
        config = RunConfig(gcnn=GCNNConfig(linear=True, order=3))
        assert StabilityStudy(config, storage_path=tmp_path).network().layers == 1

    def test_checkpoint(self, tmp_path):
        net = StabilityStudy(RunConfig(gcnn=GCNNConfig(layers=1, features=2, order=1))).network()
        ResultStorage(tmp_path).save_checkpoint("model.cfg", net)
        config = RunConfig(gcnn=GCNNConfig(checkpoint="model.cfg"))
        loaded = StabilityStudy(config, storage_path=tmp_path).network()
        assert_array_equal(loaded.weights[0], net.weights[0])

    def test_moments(self, tmp_path):
        config = replace(load_config(EX / "2node.cfg"), stability=StabilityConfig(draws=2000))
        first, second = StabilityStudy(config, storage_path=tmp_path).moments(1.0)
        assert first == 0.0 and second == 0.0
