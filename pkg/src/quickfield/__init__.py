"""Correlated discrete random fields simulated in a single pass.

Each site gets a prescribed marginal and neighboring sites get prescribed
covariances. Small fields can be checked exactly by enumeration.
"""

from .dist import Moments, Pmf, moments, tilde_rho, tilde_z
from .graph import GridSpec, SiteGraph, ValidSetup, build_valid_setup, connected_components, grid_graph, is_connected, neighborhood_of_set
from .kernel import ConditionalRow, FieldSpec, conditional_row, make_variant_spec
from .sampler import SampleRun, inpaint, sample_markov, sample_one_pass, to_values

__version__ = "0.1.0"

__all__ = [
    "ConditionalRow",
    "FieldSpec",
    "GridSpec",
    "Moments",
    "Pmf",
    "SampleRun",
    "SiteGraph",
    "ValidSetup",
    "build_valid_setup",
    "conditional_row",
    "connected_components",
    "grid_graph",
    "inpaint",
    "is_connected",
    "make_variant_spec",
    "moments",
    "neighborhood_of_set",
    "sample_markov",
    "sample_one_pass",
    "tilde_rho",
    "tilde_z",
    "to_values",
]
