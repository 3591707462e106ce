"""Simulation of OAM-encoded high-dimensional QKD through turbulence, comparing
prepare-and-measure transmission with turbulence correction by stimulated
parametric down-conversion."""

__version__ = "0.1.0"
