"""Shared fixtures: bundled graphs, spectral data, kernel tables.

Kernel tables come in two qualities. The cheap per-module tables (radius
no more than a few dozen) serve probability and sampler tests. Amplitude
work needs entries trusted much deeper, which requires pairing the radius
with a base grid about eight times larger; those tables are expensive
(roughly ten seconds each) and session-scoped so they build once.
"""

import pytest

from dimerlab.kernels import build_kernel_table
from dimerlab.lattice import Pattern, bundled_graph_path, load_graph_spec
from dimerlab.spectral import build_spectral


def _load(name):
    return load_graph_spec(bundled_graph_path(name))


def edge_pattern(graph, edge_id, offset=(0, 0)):
    """Single-edge pattern marked at its white endpoint."""
    edge = graph.edge_by_id(edge_id)
    return Pattern(((edge_id, offset),), edge.white_ref(offset))


@pytest.fixture(scope="session")
def pattern_of():
    return edge_pattern


# ---------------------------------------------------------------------------
# z2 uniform (liquid)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def uniform_graph():
    return _load("z2_uniform")


@pytest.fixture(scope="session")
def uniform_sd(uniform_graph):
    return build_spectral(uniform_graph)


@pytest.fixture(scope="session")
def uniform_table(uniform_sd):
    return build_kernel_table(uniform_sd, radius=64)


@pytest.fixture(scope="session")
def uniform_far_table(uniform_sd):
    # trusted out to offset 260: covers the asymptotic ray to x = 256 and
    # scaled supports down to eps = 1/128
    return build_kernel_table(uniform_sd, radius=260, base_grid=2080)


# ---------------------------------------------------------------------------
# z2 abcd weights (liquid, anisotropic)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def abcd_graph():
    return _load("z2_abcd")


@pytest.fixture(scope="session")
def abcd_sd(abcd_graph):
    return build_spectral(abcd_graph)


@pytest.fixture(scope="session")
def abcd_table(abcd_sd):
    return build_kernel_table(abcd_sd, radius=16)


# ---------------------------------------------------------------------------
# honeycomb (liquid, degenerate edge removed)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def honeycomb_graph():
    return _load("honeycomb")


@pytest.fixture(scope="session")
def honeycomb_sd(honeycomb_graph):
    return build_spectral(honeycomb_graph)


@pytest.fixture(scope="session")
def honeycomb_amp_table(honeycomb_sd):
    return build_kernel_table(honeycomb_sd, radius=256, base_grid=2048)


# ---------------------------------------------------------------------------
# square-octagon (gaseous)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def sqoct_graph():
    return _load("square_octagon")


@pytest.fixture(scope="session")
def sqoct_sd(sqoct_graph):
    return build_spectral(sqoct_graph)


@pytest.fixture(scope="session")
def sqoct_table(sqoct_sd):
    return build_kernel_table(sqoct_sd, radius=24)


# ---------------------------------------------------------------------------
# z2 with 3,1,1,1 weights (liquid at the resonant boundary)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def resonant_graph():
    return _load("z2_3111")


@pytest.fixture(scope="session")
def resonant_sd(resonant_graph):
    return build_spectral(resonant_graph)


@pytest.fixture(scope="session")
def resonant_table(resonant_sd):
    return build_kernel_table(resonant_sd, radius=12)
