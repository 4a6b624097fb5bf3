"""
Base parser module.

Defines the abstract base class for all parsers and the ConfigBlock
dataclass every parser produces.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Union

from gcnnstab.errors import ConfigurationError


@dataclass
class ConfigBlock:
    """
    A named group of settings, e.g. ``graph { n = 10, shift = laplacian }``.

    Attributes:
        name: Block name
        entries: Key/value pairs in file order
        line: Line the block starts on (1-based)
    """

    name: str
    entries: dict[str, Any] = field(default_factory=dict)
    line: int = 0

    def get(self, key: str, default: Any = None) -> Any:
        return self.entries.get(key, default)


class BaseParser(ABC):
    """
    Abstract base class for all input parsers.

    Subclasses must implement parse() and can_parse().
    """

    @abstractmethod
    def parse(self, file_path: Path, content: str) -> list[ConfigBlock]:
        """
        Parse file content into blocks.

        Args:
            file_path: Path the content came from (used in messages)
            content: File content as string

        Returns:
            List of ConfigBlock objects

        Raises:
            ConfigurationError: Malformed content
        """

    @abstractmethod
    def can_parse(self, file_path: Path) -> bool:
        """
        Check if this parser can handle the given file.

        Args:
            file_path: Path to the file

        Returns:
            True if this parser can handle the file
        """

    def parse_file(self, file_path: Union[str, Path]) -> list[ConfigBlock]:
        """Read a file and parse it."""
        path = Path(file_path)
        try:
            content = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"Cannot read {path}: {e}") from e
        return self.parse(path, content)
