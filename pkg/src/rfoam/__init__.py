"""Voronoi-foam radiance fields.

A scene is a 3D Voronoi tessellation whose cells carry constant density and
view-dependent color. Rendering walks rays cell-to-cell (no acceleration
hierarchy) and composites the resulting piecewise-constant segments exactly.
Reconstruction runs gradient descent on site positions, densities, and
spherical-harmonic colors, with densification, pruning, and a quantile
regularizer.
"""

from rfoam.foam import FoamScene, GradientBuffer
from rfoam.geometry import AdjacencyGraph, Triangulation, build, verify_delaunay

__all__ = [
    "FoamScene",
    "GradientBuffer",
    "AdjacencyGraph",
    "Triangulation",
    "build",
    "verify_delaunay",
]

__version__ = "0.1.0"
