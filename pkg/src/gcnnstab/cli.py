"""
CLI interface for gcnnstab.

Provides command-line commands for evaluating stability bounds, running
Monte Carlo deviation studies, training the source localization model
and sweeping hyperparameters. Organized using command groups for better
maintainability.

Exit codes: 0 success, 1 verdict or check failure, 2 configuration error.
"""

import logging
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Optional

import click

from gcnnstab import __version__
from gcnnstab.api import StabilityStudy
from gcnnstab.config.loader import load_config
from gcnnstab.core.perturbation import MOMENT_HEADER
from gcnnstab.core.stability import (
    REPORT_HEADER,
    StabilityReport,
    Verdict,
    linearity_fit,
    report_row,
)
from gcnnstab.errors import ConfigurationError, GcnnStabError, InputError
from gcnnstab.tools.datasets import nearest_source_baseline
from gcnnstab.tools.selftest import run_selftest
from gcnnstab.tools.sweeper import SWEEP_HEADER
from gcnnstab.tools.trainer import TRACE_HEADER

EXIT_FAILURE = 1
EXIT_CONFIG = 2


class AutoRegisteringGroup(click.Group):
    """
    Base class for command groups that auto-registers commands.

    Automatically discovers and registers Click commands defined as
    static methods on subclasses.
    """

    def __init__(self, name: str, help: str):
        """Initialize the command group and auto-register commands."""
        super().__init__(name=name, help=help)
        for attr in dir(self.__class__):
            cmd = getattr(self.__class__, attr)
            if isinstance(cmd, click.Command):
                self.add_command(cmd)


class OutputFormatter:
    """Utility class for formatting CLI output with colors."""

    @staticmethod
    def success(message: str) -> None:
        """Print success message in green."""
        click.echo(click.style(f"\n✓ {message}", fg="green"))

    @staticmethod
    def error(message: str, hint: Optional[str] = None) -> None:
        """Print error message in red with optional hint."""
        click.echo(click.style(f"\n✗ Error: {message}", fg="red"), err=True)
        if hint:
            click.echo(hint, err=True)

    @staticmethod
    def warning(message: str) -> None:
        """Print warning message in yellow."""
        click.echo(click.style(message, fg="yellow"))

    @staticmethod
    def info(message: str) -> None:
        """Print info message."""
        click.echo(message)

    @staticmethod
    def format_report(report: StabilityReport) -> None:
        """Display a stability report."""
        colors = {
            Verdict.WITHIN_BOUND: "green",
            Verdict.INCONCLUSIVE: "yellow",
            Verdict.EXCEEDS_BOUND: "red",
        }
        se = report.empirical_std / report.trials**0.5
        click.echo(f"  p:          {report.p}")
        click.echo(f"  Trials:     {report.trials}")
        click.echo(f"  Deviation:  {report.empirical_mean_sq_dev:.6g} ± {se:.2g}")
        click.echo(f"  Bound:      {report.bound_first_order:.6g}")
        if report.bound_second_order is not None:
            click.echo(f"  With O((1-p)^2): {report.bound_second_order:.6g}")
        click.echo(
            f"  C = {report.stability_constant_C:.6g} "
            f"(alpha={report.alpha:g}, c_L={report.c_L:.4g})"
        )
        click.echo(
            f"  Verdict:    {click.style(report.verdict.value, fg=colors[report.verdict])}"
        )

    @staticmethod
    def format_table(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
        """Display rows as aligned columns."""
        cells = [[str(h) for h in header]] + [
            [f"{v:.6g}" if isinstance(v, float) else str(v) for v in row] for row in rows
        ]
        widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
        for index, row in enumerate(cells):
            line = "  ".join(cell.rjust(width) for cell, width in zip(row, widths))
            click.echo(click.style(line, bold=True) if index == 0 else line)


@dataclass
class CliState:
    """Global options shared by every command."""

    config_path: Optional[str] = None
    seed: Optional[int] = None
    out: Optional[str] = None
    trials: Optional[int] = None
    threads: Optional[int] = None

    def study(self) -> StabilityStudy:
        config = load_config(self.config_path).with_overrides(seed=self.seed, trials=self.trials)
        return StabilityStudy(
            config, storage_path=self.out, threads=self.threads, show_progress=True
        )


@contextmanager
def handle_errors() -> Iterator[None]:
    """Turn library errors into messages and exit codes."""
    try:
        yield
    except (ConfigurationError, InputError, FileNotFoundError) as e:
        OutputFormatter.error(str(e), hint="Check the config file and command-line options")
        raise click.exceptions.Exit(EXIT_CONFIG) from e
    except GcnnStabError as e:
        OutputFormatter.error(str(e))
        raise click.exceptions.Exit(EXIT_FAILURE) from e


class StabilityCommands(AutoRegisteringGroup):
    """Commands for bounds, Monte Carlo deviations and moment checks."""

    def __init__(self):
        super().__init__(
            name="stability-commands",
            help="Commands for stability bounds and Monte Carlo checks",
        )

    @staticmethod
    @click.command()
    @click.option("--details", is_flag=True, help="Show the factors of the constant")
    @click.pass_obj
    def bound(state: CliState, details: bool) -> None:
        """
        Compute the first-order stability bound C (1-p) ||x||^2.

        Uses the explicit values of the bound block when n, alpha and
        c_l are given; otherwise estimates c_L for the configured filter
        or GCNN on the configured graph.

        Examples:
            gcnnstab --config ex/thm1.cfg bound
            gcnnstab --config ex/desk.cfg bound --details
        """
        with handle_errors():
            result = state.study().bound()
        click.echo(f"{result.value:.6g}")
        if details:
            c = result.constant
            click.echo(f"  C = {c.value:.6g} at p={result.p}, ||x||^2={result.x_norm_sq:.6g}")
            click.echo(f"  graph factor n*alpha:        {c.graph_factor:.6g}")
            click.echo(f"  filter factor c_L^2:         {c.filter_factor:.6g}")
            click.echo(f"  architecture factor:         {c.architecture_factor:.6g}")
            if result.c_l is not None:
                click.echo(
                    f"  c_L from {result.c_l.samples_used} samples, "
                    f"max response {result.c_l.max_response:.4g}"
                )

    @staticmethod
    @click.command()
    @click.option(
        "--p", "p_values", type=float, multiple=True, help="Sampling probability (repeatable)"
    )
    @click.option("--name", default="mc", help="Output table name (default: mc)")
    @click.pass_obj
    def mc(state: CliState, p_values: tuple[float, ...], name: str) -> None:
        """
        Monte Carlo deviation of the configured filter or GCNN.

        Compares the mean squared output deviation with its bound and
        exits with 1 when the bound is exceeded. With three or more p
        values the deviation is also fitted as a line in (1-p).

        Examples:
            gcnnstab --config ex/2node.cfg --trials 100000 mc
            gcnnstab --config ex/desk.cfg mc --p 0.96 --p 0.98 --p 0.99
        """
        with handle_errors():
            study = state.study()
            reports = [study.verify(p) for p in (p_values or (None,))]
            study.storage.write_csv(
                f"{name}.csv", REPORT_HEADER, [report_row(r) for r in reports]
            )

        for report in reports:
            title = f"\nStability report ({study.config.stability.target})"
            click.echo(click.style(title, fg="green"))
            OutputFormatter.format_report(report)
            for eps, lower, observed in study.probability_bounds(report):
                click.echo(f"  Pr[dev <= {eps:g}] >= {lower:.4g} (observed {observed:.4g})")

        if len(reports) >= 3:
            with handle_errors():
                slope, intercept, r2 = linearity_fit(
                    [r.p for r in reports], [r.empirical_mean_sq_dev for r in reports]
                )
            click.echo(
                f"\nLinear fit in (1-p): slope {slope:.6g}, "
                f"intercept {intercept:.3g}, r^2 {r2:.4f}"
            )

        if any(r.verdict is Verdict.EXCEEDS_BOUND for r in reports):
            OutputFormatter.error("Empirical deviation exceeds the bound")
            raise click.exceptions.Exit(EXIT_FAILURE)

    @staticmethod
    @click.command()
    @click.option("--p", "p_value", type=float, default=None, help="Sampling probability")
    @click.option("--name", default="moments", help="Output table name (default: moments)")
    @click.pass_obj
    def moments(state: CliState, p_value: Optional[float], name: str) -> None:
        """
        Check the first and second moments of RES(G, p) realizations.

        Writes one (p, draws, first, second) row to <name>.csv; the second
        column is empty for the normalized adjacency.

        Example:
            gcnnstab --config ex/2node.cfg moments --p 0.8
        """
        with handle_errors():
            study = state.study()
            first, second = study.moments(p_value)
            draws = study.config.stability.draws
            p = study.config.res.p if p_value is None else p_value
            row = (p, draws, first, "" if second is None else second)
            study.storage.write_csv(f"{name}.csv", MOMENT_HEADER, [row])
        click.echo(f"  Draws: {draws}")
        click.echo(f"  First moment max-abs deviation:  {first:.6g}")
        if second is None:
            OutputFormatter.warning("  Second moment: no closed form for this shift operator")
        else:
            click.echo(f"  Second moment max-abs deviation: {second:.6g}")


class ExperimentCommands(AutoRegisteringGroup):
    """Commands for source localization training and sweeps."""

    def __init__(self):
        super().__init__(
            name="experiment-commands",
            help="Commands for training and parameter sweeps",
        )

    @staticmethod
    @click.command()
    @click.option(
        "--perturb", "p_values", type=float, multiple=True, help="Also measure accuracy at p"
    )
    @click.option("--name", default="train", help="Run directory name (default: train)")
    @click.pass_obj
    def train(state: CliState, p_values: tuple[float, ...], name: str) -> None:
        """
        Train the source localization GCNN on an SBM graph.

        Writes the loss trace, a checkpoint and a summary into the run
        directory.

        Example:
            gcnnstab --config ex/desk.cfg train --perturb 0.95 --perturb 0.99
        """
        with handle_errors():
            study = state.study()
            result = study.train()
            storage = study.storage
            storage.write_csv(f"{name}/trace.csv", TRACE_HEADER, result.trace.rows())
            storage.save_checkpoint(f"{name}/model.cfg", result.net)
            baseline = nearest_source_baseline(result.dataset)
            deviations = [
                (p, study.experiment().accuracy_deviation(p, study.config.stability.trials))
                for p in p_values
            ]
            summary = {
                "val_accuracy": result.val_accuracy,
                "test_accuracy": result.test_accuracy,
                "baseline_accuracy": baseline,
                "sources": list(result.sources),
            }
            for p, dev in deviations:
                summary[f"accuracy_difference_{p:g}".replace(".", "_")] = dev.difference
            storage.write_summary(f"{name}/summary.cfg", summary)

        click.echo(f"  Validation accuracy: {result.val_accuracy:.4f}")
        click.echo(f"  Test accuracy:       {result.test_accuracy:.4f}")
        click.echo(f"  Spectral baseline:   {baseline:.4f}")
        for p, dev in deviations:
            click.echo(
                f"  p={p:g}: perturbed {dev.perturbed_accuracy:.4f}, "
                f"difference {dev.difference:.4f} ± {dev.std_error:.2g}"
            )
        OutputFormatter.success(f"Run saved to {storage.run_path(name)}")

    @staticmethod
    @click.command()
    @click.pass_obj
    def sweep(state: CliState) -> None:
        """
        Run the sweep block: p, F, K, n or L against accuracy or deviation.

        Writes <name>.csv and <name>.dat plot data.

        Example:
            gcnnstab --config ex/sweep.cfg --out runs sweep
        """
        with handle_errors():
            table = state.study().sweep()
        OutputFormatter.format_table(SWEEP_HEADER, [row.as_tuple() for row in table.rows])
        for row in table.failed:
            OutputFormatter.warning(f"Point {row.variable}={row.value} failed (training diverged)")


class CheckCommands(AutoRegisteringGroup):
    """Commands for checking the installation."""

    def __init__(self):
        super().__init__(name="check-commands", help="Commands for self-checks")

    @staticmethod
    @click.command()
    @click.pass_obj
    def selftest(state: CliState) -> None:
        """
        Run the invariant suite.

        Example:
            gcnnstab selftest
        """
        results = run_selftest(seed=state.seed or 0, show_progress=True)
        for result in results:
            mark = click.style("✓", fg="green") if result.passed else click.style("✗", fg="red")
            click.echo(f"  {mark} {result.name:<22} {result.detail} ({result.seconds:.2f}s)")
        failed = [r.name for r in results if not r.passed]
        if failed:
            OutputFormatter.error(f"{len(failed)} check(s) failed: {', '.join(failed)}")
            raise click.exceptions.Exit(EXIT_FAILURE)
        OutputFormatter.success(f"All {len(results)} checks passed")


# Main CLI group
@click.group()
@click.version_option(version=__version__)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Config file")
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Override the seed")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory")
@click.option("--trials", type=click.IntRange(min=2), default=None, help="Monte Carlo trials")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.pass_context
def cli(
    ctx: click.Context,
    config_path: Optional[str],
    seed: Optional[int],
    out: Optional[str],
    trials: Optional[int],
    threads: Optional[int],
    verbose: bool,
) -> None:
    """
    gcnnstab - stability of graph filters and GCNNs under random edge sampling.
    """
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    ctx.obj = CliState(config_path, seed, out, trials, threads)


# Register command groups
stability_commands = StabilityCommands()
experiment_commands = ExperimentCommands()
check_commands = CheckCommands()

# Add commands to main CLI
cli.add_command(stability_commands.commands["bound"])
cli.add_command(stability_commands.commands["mc"])
cli.add_command(stability_commands.commands["moments"])
cli.add_command(experiment_commands.commands["train"])
cli.add_command(experiment_commands.commands["sweep"])
cli.add_command(check_commands.commands["selftest"])


if __name__ == "__main__":
    cli()
