from rfoam.geometry.adjacency import AdjacencyGraph, cell_radius, nearest_site
from rfoam.geometry.delaunay import (
    Triangulation,
    build,
    triangulation_to_off,
    verify_delaunay,
)
from rfoam.geometry.predicates import insphere, orient3d

__all__ = [
    "AdjacencyGraph",
    "Triangulation",
    "build",
    "cell_radius",
    "insphere",
    "nearest_site",
    "orient3d",
    "triangulation_to_off",
    "verify_delaunay",
]
