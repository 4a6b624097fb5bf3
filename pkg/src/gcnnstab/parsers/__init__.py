"""
Parsers for configuration, checkpoint and edge-list files.

Every parser turns a file into a list of ConfigBlock records.
"""

from gcnnstab.parsers.base_parser import BaseParser, ConfigBlock
from gcnnstab.parsers.block_parser import BlockParser, format_block, format_value
from gcnnstab.parsers.edgelist_parser import (
    EdgeListParser,
    format_edgelist,
    graph_from_block,
    load_edgelist,
)

__all__ = [
    "BaseParser",
    "ConfigBlock",
    "BlockParser",
    "EdgeListParser",
    "format_block",
    "format_value",
    "format_edgelist",
    "graph_from_block",
    "load_edgelist",
]
