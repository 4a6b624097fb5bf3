"""
Edge-list files.

    # optional comments
    n 5
    0 1
    1 2 0.5

The ``n`` header is optional; without it the node count is one more than
the largest node id. A missing weight defaults to 1.
"""

from pathlib import Path

from gcnnstab.config.settings import EDGELIST_EXTENSIONS
from gcnnstab.core.graph import Graph
from gcnnstab.errors import ConfigurationError
from gcnnstab.parsers.base_parser import BaseParser, ConfigBlock


class EdgeListParser(BaseParser):
    """Parser for plain edge-list files; yields a single ``graph`` block."""

    def can_parse(self, file_path: Path) -> bool:
        return Path(file_path).suffix in EDGELIST_EXTENSIONS

    def parse(self, file_path: Path, content: str) -> list[ConfigBlock]:
        n = None
        edges: list[list] = []
        for line_no, raw in enumerate(content.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            where = f"{file_path}:{line_no}"
            if fields[0] == "n":
                if n is not None or edges or len(fields) != 2:
                    raise ConfigurationError(f"{where}: 'n <count>' must be the first entry")
                n = self._int(fields[1], where)
                continue
            if len(fields) not in (2, 3):
                raise ConfigurationError(f"{where}: expected 'i j [weight]', got {line!r}")
            i, j = self._int(fields[0], where), self._int(fields[1], where)
            try:
                w = float(fields[2]) if len(fields) == 3 else 1.0
            except ValueError:
                raise ConfigurationError(f"{where}: invalid weight {fields[2]!r}") from None
            edges.append([i, j, w])

        if n is None:
            n = 1 + max((max(i, j) for i, j, _ in edges), default=-1)
        entries = {"kind": "edges", "n": n, "edges": edges}
        return [ConfigBlock(name="graph", entries=entries, line=1)]

    @staticmethod
    def _int(text: str, where: str) -> int:
        try:
            value = int(text)
        except ValueError:
            raise ConfigurationError(f"{where}: expected an integer, got {text!r}") from None
        if value < 0:
            raise ConfigurationError(f"{where}: negative value {value}")
        return value


def format_edgelist(graph: Graph) -> str:
    """Write a graph in the format EdgeListParser reads."""
    lines = [f"n {graph.n}"]
    for (i, j), w in zip(graph.edges, graph.weights):
        lines.append(f"{i} {j}" if w == 1.0 else f"{i} {j} {w!r}")
    return "\n".join(lines) + "\n"


def load_edgelist(file_path) -> Graph:
    """Read an edge-list file into a Graph."""
    block = EdgeListParser().parse_file(file_path)[0]
    return graph_from_block(block)


def graph_from_block(block: ConfigBlock) -> Graph:
    """Graph from a block holding ``n`` and ``edges = [[i, j(, w)], ...]``."""
    n = block.get("n")
    raw = block.get("edges", [])
    if not isinstance(n, int) or isinstance(n, bool):
        raise ConfigurationError(f"Block '{block.name}' needs an integer 'n'")
    if not isinstance(raw, (list, tuple)):
        raise ConfigurationError(f"Block '{block.name}': 'edges' must be a list")
    pairs, weights = [], []
    for edge in raw:
        if not isinstance(edge, (list, tuple)) or len(edge) not in (2, 3):
            raise ConfigurationError(f"Block '{block.name}': invalid edge {edge!r}")
        pairs.append((edge[0], edge[1]))
        weights.append(edge[2] if len(edge) == 3 else 1.0)
    try:
        return Graph.from_edges(n, pairs, weights)
    except ValueError as e:
        raise ConfigurationError(f"Block '{block.name}': {e}") from e
