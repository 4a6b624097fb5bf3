"""
Structured-text block format.

    # comment
    graph {
        kind = sbm, n = 40
        shift = normalized_adjacency
    }

Entries are separated by commas or newlines. Values are Python literals
(numbers, quoted strings, lists, tuples); true/false/none are accepted,
and bare words such as ``laplacian`` are read as strings. Brackets may
span several lines.
"""

import ast
import re
from collections.abc import Iterator, Mapping
from pathlib import Path
from typing import Any, Optional

import numpy as np

from gcnnstab.config.settings import CONFIG_EXTENSIONS
from gcnnstab.errors import ConfigurationError
from gcnnstab.parsers.base_parser import BaseParser, ConfigBlock

_TOKEN = re.compile(
    r"""
    (?P<string>"(?:[^"\\\n]|\\.)*"|'(?:[^'\\\n]|\\.)*')
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<open>[\[(])
  | (?P<close>[\])])
  | (?P<lbrace>\{)
  | (?P<rbrace>\})
  | (?P<comma>,)
  | (?P<equals>=)
  | (?P<space>[ \t\r]+)
  | (?P<text>[^\s"'\#\[\](){},=]+)
    """,
    re.VERBOSE,
)

_WORD = re.compile(r"(?<![\w.])([A-Za-z_]\w*)")
_IDENTIFIER = re.compile(r"[A-Za-z_]\w*\Z")
_KEYWORDS = {"true": "True", "false": "False", "none": "None", "null": "None"}


def _tokens(content: str, file_path: Path) -> Iterator[tuple[str, str, int]]:
    line = 1
    pos = 0
    while pos < len(content):
        match = _TOKEN.match(content, pos)
        if match is None:
            raise ConfigurationError(
                f"{file_path}:{line}: unexpected character {content[pos]!r}"
            )
        kind = match.lastgroup or ""
        yield kind, match.group(), line
        if kind == "newline":
            line += 1
        pos = match.end()


def _convert_word(match: re.Match) -> str:
    word = match.group(1)
    return _KEYWORDS.get(word.lower(), repr(word))


def parse_value(raw: list[tuple[str, str]], where: str) -> Any:
    """Evaluate the tokens of one value."""
    pieces = []
    for kind, text in raw:
        if kind == "text":
            pieces.append(_WORD.sub(_convert_word, text))
        elif kind in ("newline", "space"):
            pieces.append(" ")
        else:
            pieces.append(text)
    source = "".join(pieces).strip()
    if not source:
        raise ConfigurationError(f"{where}: missing value")
    try:
        return ast.literal_eval(source)
    except (ValueError, SyntaxError) as e:
        raise ConfigurationError(f"{where}: invalid value {source!r}") from e


class BlockParser(BaseParser):
    """Parser for block-structured configuration and checkpoint files."""

    def can_parse(self, file_path: Path) -> bool:
        return Path(file_path).suffix in CONFIG_EXTENSIONS

    def parse(self, file_path: Path, content: str) -> list[ConfigBlock]:
        blocks: list[ConfigBlock] = []
        current: Optional[ConfigBlock] = None
        pending_name: Optional[tuple[str, int]] = None
        entry: list[tuple[str, str]] = []
        entry_line = 0
        depth = 0

        def _finish_entry() -> None:
            nonlocal entry
            if current is None:
                return
            significant = [t for t in entry if t[0] not in ("space", "newline", "comment")]
            if significant:
                self._add_entry(current, entry, f"{file_path}:{entry_line}")
            entry = []

        for kind, text, line in _tokens(content, file_path):
            if current is None:
                if kind in ("space", "newline", "comment"):
                    continue
                if kind == "text" and pending_name is None:
                    pending_name = (text, line)
                elif kind == "lbrace" and pending_name is not None:
                    current = ConfigBlock(name=pending_name[0], line=pending_name[1])
                    pending_name = None
                else:
                    raise ConfigurationError(
                        f"{file_path}:{line}: expected 'name {{', got {text!r}"
                    )
                continue

            if kind == "comment":
                continue
            if depth == 0 and kind in ("comma", "newline"):
                _finish_entry()
                continue
            if depth == 0 and kind == "rbrace":
                _finish_entry()
                blocks.append(current)
                current = None
                continue
            if kind in ("lbrace", "rbrace"):
                raise ConfigurationError(f"{file_path}:{line}: unexpected {text!r}")
            if kind == "open":
                depth += 1
            elif kind == "close":
                depth -= 1
                if depth < 0:
                    raise ConfigurationError(f"{file_path}:{line}: unbalanced {text!r}")
            if not entry:
                entry_line = line
            entry.append((kind, text))

        if current is not None or pending_name is not None:
            raise ConfigurationError(f"{file_path}: unterminated block")
        return blocks

    @staticmethod
    def _add_entry(block: ConfigBlock, tokens: list[tuple[str, str]], where: str) -> None:
        split = next((i for i, (kind, _) in enumerate(tokens) if kind == "equals"), None)
        if split is None:
            raise ConfigurationError(f"{where}: expected 'key = value'")
        key = "".join(text for kind, text in tokens[:split] if kind == "text")
        if not _IDENTIFIER.match(key) or any(
            kind not in ("text", "space") for kind, _ in tokens[:split]
        ):
            raise ConfigurationError(f"{where}: invalid key in block '{block.name}'")
        if key in block.entries:
            raise ConfigurationError(f"{where}: duplicate key '{key}' in block '{block.name}'")
        block.entries[key] = parse_value(tokens[split + 1 :], where)


def format_value(value: Any) -> str:
    """Inverse of parse_value for the types the package writes."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, str):
        return value if _IDENTIFIER.match(value) and value.lower() not in _KEYWORDS else repr(value)
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    raise ConfigurationError(f"Cannot write value of type {type(value).__name__}")


def format_block(name: str, entries: Mapping[str, Any]) -> str:
    lines = [f"{name} {{"]
    lines.extend(f"    {key} = {format_value(value)}" for key, value in entries.items())
    lines.append("}")
    return "\n".join(lines) + "\n"
