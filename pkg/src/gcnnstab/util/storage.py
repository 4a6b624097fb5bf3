"""
Storage module for run outputs.

Handles writing CSV tables, plot data, run summaries and GCNN
checkpoints to a local output directory, one subdirectory per run.
"""

import csv
import logging
import shutil
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from gcnnstab.config.settings import DEFAULT_OUTPUT_DIR
from gcnnstab.core.gcnn import GCNN
from gcnnstab.errors import ConfigurationError
from gcnnstab.parsers.block_parser import BlockParser, format_block

logger = logging.getLogger(__name__)


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


class ResultStorage:
    """
    Manages run outputs under a base directory.

    Storage format:
        {base_dir}/
        ├── sweep_p.csv        # Tables (floats written with repr)
        ├── sweep_p.dat        # Plot data, "x y yerr" per line
        └── {run}/
            ├── summary.cfg    # Run summary in the block format
            └── model.cfg      # GCNN checkpoint
    """

    def __init__(self, base_dir: Optional[Union[str, Path]] = None):
        """
        Initialize storage manager.

        Args:
            base_dir: Output directory. If None, uses ./gcnnstab_runs
        """
        self.base_dir = Path(base_dir if base_dir is not None else DEFAULT_OUTPUT_DIR)
        self.base_dir.mkdir(parents=True, exist_ok=True)

    def run_path(self, name: str) -> Path:
        """Path of an output file or run directory relative to the base."""
        path = self.base_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def write_csv(
        self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]
    ) -> Path:
        """
        Write a CSV table.

        Args:
            name: File name, e.g. "sweep_p.csv"
            header: Column names
            rows: Rows aligned with the header

        Returns:
            Path of the written file
        """
        path = self.run_path(name)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                if len(row) != len(header):
                    raise ConfigurationError(
                        f"Row of {len(row)} values for {len(header)} columns in {name}"
                    )
                writer.writerow([_cell(v) for v in row])
        logger.info("Table written to %s", path)
        return path

    def write_plot_data(self, name: str, rows: Iterable[Sequence[float]]) -> Path:
        """Write (x, y, yerr) triplets, one per line."""
        path = self.run_path(name)
        lines = [" ".join(_cell(float(v)) for v in row) for row in rows]
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        logger.info("Plot data written to %s", path)
        return path

    def write_summary(self, name: str, summary: Mapping[str, Any], block: str = "run") -> Path:
        """Write a run summary as a single block of key = value lines."""
        path = self.run_path(name)
        path.write_text(format_block(block, summary), encoding="utf-8")
        return path

    def read_summary(self, name: str) -> dict[str, Any]:
        path = self.base_dir / name
        if not path.exists():
            raise FileNotFoundError(f"Summary '{name}' not found at {path}")
        blocks = BlockParser().parse_file(path)
        return dict(blocks[0].entries) if blocks else {}

    def save_checkpoint(self, name: str, net: GCNN) -> Path:
        """
        Save a GCNN in the block format.

        One ``gcnn`` block with the architecture is followed by one
        ``filter`` block per filter, layer by layer in (out, in) order.
        """
        path = self.run_path(name)
        parts = [
            format_block(
                "gcnn",
                {
                    "layers": net.layers,
                    "order": net.order,
                    "widths": list(net.widths),
                    "nonlinearities": [s.value for s in net.nonlinearities],
                },
            )
        ]
        for layer, w in enumerate(net.weights):
            for f in range(w.shape[0]):
                for g in range(w.shape[1]):
                    entries = {"layer": layer, "out": f, "in": g, "coeffs": w[f, g]}
                    parts.append(format_block("filter", entries))
        path.write_text("\n".join(parts), encoding="utf-8")
        logger.info("Checkpoint saved to %s", path)
        return path

    def load_checkpoint(self, name: str) -> GCNN:
        """
        Load a GCNN written by save_checkpoint.

        Raises:
            FileNotFoundError: If the checkpoint doesn't exist
            ConfigurationError: If the file is malformed or incomplete
        """
        path = self.base_dir / name
        if not path.exists():
            raise FileNotFoundError(f"Checkpoint '{name}' not found at {path}")
        blocks = BlockParser().parse_file(path)
        if not blocks or blocks[0].name != "gcnn":
            raise ConfigurationError(f"{path}: checkpoint must start with a gcnn block")

        header = blocks[0]
        try:
            widths = [int(v) for v in header.entries["widths"]]
            order = int(header.entries["order"])
            nonlinearities = list(header.entries["nonlinearities"])
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"{path}: incomplete gcnn block ({e})") from e

        weights = [
            np.full((f_out, f_in, order + 1), np.nan) for f_in, f_out in zip(widths, widths[1:])
        ]
        for block in blocks[1:]:
            if block.name != "filter":
                raise ConfigurationError(f"{path}:{block.line}: unexpected block '{block.name}'")
            try:
                layer, f, g = block.entries["layer"], block.entries["out"], block.entries["in"]
                if min(layer, f, g) < 0:
                    raise IndexError("negative index")
                weights[layer][f, g] = block.entries["coeffs"]
            except (KeyError, IndexError, TypeError, ValueError) as e:
                raise ConfigurationError(f"{path}:{block.line}: invalid filter block ({e})") from e

        if any(np.isnan(w).any() for w in weights):
            raise ConfigurationError(f"{path}: checkpoint is missing filters")
        return GCNN(tuple(weights), tuple(nonlinearities))

    def list_runs(self) -> list[str]:
        """
        List run directories.

        Returns:
            Sorted list of run names
        """
        if not self.base_dir.exists():
            return []
        return sorted(item.name for item in self.base_dir.iterdir() if item.is_dir())

    def delete(self, name: str) -> bool:
        """Delete a run directory or output file. Returns False if it didn't exist."""
        path = self.base_dir / name
        if path.is_dir():
            shutil.rmtree(path)
        elif path.exists():
            path.unlink()
        else:
            logger.warning("Nothing to delete at %s", path)
            return False
        logger.info("Deleted %s", path)
        return True
