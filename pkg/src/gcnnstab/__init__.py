"""
gcnnstab - stability of graph filters and GCNNs under random edge sampling.

Builds graph filters and graph convolutional networks, runs them over
randomly sampled subgraphs of a nominal graph and compares the observed
output deviation with closed-form stability bounds. Includes a desk-scale
source localization experiment and parameter sweeps.
"""

__version__ = "0.1.0"
__license__ = "MIT"

from gcnnstab.api import BoundValue, StabilityStudy
from gcnnstab.config.loader import RunConfig, load_config
from gcnnstab.core.filters import GraphFilter, filter_apply, filter_apply_chain
from gcnnstab.core.gcnn import GCNN, gcnn_backward, gcnn_forward, gcnn_forward_stochastic
from gcnnstab.core.graph import Graph, ShiftOperator, sbm_generate, shift_from_graph
from gcnnstab.core.perturbation import RESModel, sample_chain, sample_subgraph
from gcnnstab.core.stability import StabilityReport, Verdict
from gcnnstab.util.storage import ResultStorage

__all__ = [
    # High-level API (recommended for library usage)
    "StabilityStudy",
    "BoundValue",
    "RunConfig",
    "load_config",
    "StabilityReport",
    "Verdict",
    # Low-level components (for advanced usage)
    "Graph",
    "ShiftOperator",
    "sbm_generate",
    "shift_from_graph",
    "GraphFilter",
    "filter_apply",
    "filter_apply_chain",
    "RESModel",
    "sample_subgraph",
    "sample_chain",
    "GCNN",
    "gcnn_forward",
    "gcnn_forward_stochastic",
    "gcnn_backward",
    "ResultStorage",
]
