"""Numerical laboratory for bi-periodic bipartite planar dimer models.

The package is organized in layers: graph specifications and exact torus
enumeration (`lattice`), characteristic-polynomial analysis and phase
classification (`spectral`), inverse-Kasteleyn coefficient tables (`kernels`),
local statistics and window sampling (`correlations`), scaling-limit
predictions (`scaling`), and a command line front end (`cli`).
"""

__version__ = "0.1.0"

from . import lattice, spectral, kernels, correlations, scaling  # noqa: F401
