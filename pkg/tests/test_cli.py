"""Tests for the command-line interface."""

from pathlib import Path

import pytest
from click.testing import CliRunner

from gcnnstab import __version__
from gcnnstab.cli import cli
from gcnnstab.core.perturbation import MOMENT_HEADER
from gcnnstab.core.stability import REPORT_HEADER
from gcnnstab.tools import selftest
from gcnnstab.util.storage import ResultStorage

EX = Path(__file__).resolve().parents[1] / "ex"

TINY_SWEEP = """
graph { kind = sbm, n = 20, communities = 4 }
gcnn { layers = 2, features = 2, order = 2 }
train { splits = [40, 10, 10], epochs = 2, batch_size = 10 }
sweep { variable = K, grid = [1, 2], metric = deviation, train = false, name = tiny }
stability { trials = 2 }
"""


@pytest.fixture
def runner():
    return CliRunner()


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_unknown_command_exits_with_2(runner):
    assert runner.invoke(cli, ["nope"]).exit_code == 2


class TestBound:
    def test_closed_form(self, runner):
        result = runner.invoke(cli, ["--config", str(EX / "thm1.cfg"), "bound"])
        assert result.exit_code == 0
        assert result.output.strip() == "0.05"

    def test_details(self, runner):
        result = runner.invoke(cli, ["--config", str(EX / "thm1.cfg"), "bound", "--details"])
        assert result.exit_code == 0
        assert "graph factor" in result.output

    def test_bad_config_exits_with_2(self, runner, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("res { q = 1 }\n")
        assert runner.invoke(cli, ["--config", str(path), "bound"]).exit_code == 2

    def test_missing_config_exits_with_2(self, runner, tmp_path):
        result = runner.invoke(cli, ["--config", str(tmp_path / "absent.cfg"), "bound"])
        assert result.exit_code == 2


class TestMonteCarlo:
    def test_two_node(self, runner, tmp_path):
        args = ["--config", str(EX / "2node.cfg"), "--out", str(tmp_path), "--trials", "200"]
        result = runner.invoke(cli, args + ["mc"])
        assert result.exit_code == 0, result.output
        assert "within_bound" in result.output
        lines = (tmp_path / "mc.csv").read_text().splitlines()
        assert lines[0] == ",".join(REPORT_HEADER)
        assert len(lines) == 2

    def test_several_p_values_are_fitted(self, runner, tmp_path):
        args = ["--config", str(EX / "2node.cfg"), "--out", str(tmp_path), "--trials", "1000"]
        p_args = ["--p", "0.9", "--p", "0.95", "--p", "0.99"]
        result = runner.invoke(cli, args + ["mc", "--name", "fit"] + p_args)
        assert result.exit_code == 0, result.output
        assert "Linear fit" in result.output
        assert len((tmp_path / "fit.csv").read_text().splitlines()) == 4


def test_moments(runner, tmp_path):
    args = ["--config", str(EX / "2node.cfg"), "--out", str(tmp_path), "moments", "--p", "0.8"]
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.output
    assert "First moment" in result.output
    assert "Second moment" in result.output
    header, row = (tmp_path / "moments.csv").read_text().splitlines()
    assert header == ",".join(MOMENT_HEADER)
    assert row.startswith("0.8,10000,")


def test_sweep(runner, tmp_path):
    config = tmp_path / "tiny.cfg"
    config.write_text(TINY_SWEEP)
    result = runner.invoke(cli, ["--config", str(config), "--out", str(tmp_path), "sweep"])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "tiny.csv").exists()
    assert (tmp_path / "tiny.dat").exists()


class TestSelftest:
    def test_passing(self, runner, monkeypatch):
        monkeypatch.setattr(selftest, "CHECKS", {"trivial": lambda seed: (True, "ok")})
        result = runner.invoke(cli, ["selftest"])
        assert result.exit_code == 0
        assert "trivial" in result.output

    def test_failing_exits_with_1(self, runner, monkeypatch):
        monkeypatch.setattr(selftest, "CHECKS", {"broken": lambda seed: (False, "off")})
        assert runner.invoke(cli, ["selftest"]).exit_code == 1


def test_train(runner, tmp_path):
    config = tmp_path / "tiny.cfg"
    config.write_text(TINY_SWEEP)
    args = ["--config", str(config), "--out", str(tmp_path), "train", "--perturb", "0.9"]
    result = runner.invoke(cli, args + ["--name", "run"])
    assert result.exit_code == 0, result.output
    assert len((tmp_path / "run" / "trace.csv").read_text().splitlines()) == 3
    summary = ResultStorage(tmp_path).read_summary("run/summary.cfg")
    assert 0.0 <= summary["test_accuracy"] <= 1.0
    assert len(summary["sources"]) == 4
    assert "accuracy_difference_0_9" in summary
    assert ResultStorage(tmp_path).load_checkpoint("run/model.cfg").layers == 2
