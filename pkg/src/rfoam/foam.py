"""The learnable scene: Voronoi sites with density and SH color.

Density is parameterized through a softplus with beta=10, so the stored
``raw_density`` is unconstrained while the activated value stays positive
with smooth gradients. Adjacency is the cached Voronoi neighbor structure;
mutations that move or add sites leave it stale until ``rebuild``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from rfoam import sh
from rfoam.errors import DuplicatePoints, ShapeMismatch
from rfoam.geometry import AdjacencyGraph, build
from rfoam.geometry.delaunay import duplicate_tolerance

SOFTPLUS_BETA = 10.0


def softplus(x, beta=SOFTPLUS_BETA):
    """(1/beta) * ln(1 + exp(beta*x)), stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(beta * x))) / beta


def softplus_grad(x, beta=SOFTPLUS_BETA):
    """d softplus / dx = logistic(beta * x)."""
    x = np.asarray(x, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-beta * x))


@dataclass
class FoamScene:
    positions: np.ndarray                  # (n, 3)
    raw_density: np.ndarray                # (n,)
    sh_coeffs: np.ndarray                  # (n, 16, 3)
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))
    adjacency: Optional[AdjacencyGraph] = None

    def __post_init__(self):
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64)
        self.raw_density = np.ascontiguousarray(self.raw_density, dtype=np.float64)
        self.sh_coeffs = np.ascontiguousarray(self.sh_coeffs, dtype=np.float64)
        self.background = np.asarray(self.background, dtype=np.float64)
        n = len(self.positions)
        if self.positions.shape != (n, 3):
            raise ShapeMismatch("positions must be (n, 3)")
        if self.raw_density.shape != (n,):
            raise ShapeMismatch("raw_density must be (n,)")
        if self.sh_coeffs.shape != (n, sh.N_SH, 3):
            raise ShapeMismatch("sh_coeffs must be (n, 16, 3)")
        if self.background.shape != (3,):
            raise ShapeMismatch("background must be (3,)")

    @property
    def n_sites(self):
        return len(self.positions)

    def density(self, i):
        return float(softplus(self.raw_density[i]))

    def densities(self):
        return softplus(self.raw_density)

    def color(self, i, direction):
        return sh.sh_eval(self.sh_coeffs[i], direction)

    def rebuild(self):
        """Rebuild the Delaunay triangulation and Voronoi adjacency.

        The adjacency aliases this scene's position array afterwards: between
        rebuilds the connectivity (and the nearest-site grid) may go stale,
        but bisector geometry always sees the current positions.
        """
        tri = build(self.positions)
        self.adjacency = AdjacencyGraph.from_triangulation(tri)
        self.adjacency.positions = self.positions
        return tri

    def require_adjacency(self):
        if self.adjacency is None:
            self.rebuild()
        return self.adjacency

    def clone_site(self, i, offset):
        """Append a copy of site i displaced by ``offset``; adjacency goes stale."""
        offset = np.asarray(offset, dtype=np.float64)
        tol = duplicate_tolerance(self.positions)
        if float(np.linalg.norm(offset)) < tol:
            raise DuplicatePoints(
                f"clone offset {np.linalg.norm(offset):g} below tolerance {tol:g}"
            )
        self.positions = np.vstack([self.positions, self.positions[i] + offset])
        self.raw_density = np.append(self.raw_density, self.raw_density[i])
        self.sh_coeffs = np.vstack([self.sh_coeffs, self.sh_coeffs[i : i + 1]])
        self.adjacency = None
        return self.n_sites - 1

    def copy(self):
        return FoamScene(
            self.positions.copy(),
            self.raw_density.copy(),
            self.sh_coeffs.copy(),
            self.background.copy(),
            self.adjacency,
        )

    @classmethod
    def from_points(cls, positions, raw_density=0.0, base_color=None,
                    background=(0.0, 0.0, 0.0)):
        positions = np.asarray(positions, dtype=np.float64)
        n = len(positions)
        coeffs = np.zeros((n, sh.N_SH, 3))
        if base_color is not None:
            coeffs[:, 0, :] = sh.color_to_dc(np.asarray(base_color))
        raw = np.broadcast_to(np.asarray(raw_density, dtype=np.float64), (n,))
        return cls(
            positions,
            raw.copy(),
            coeffs,
            np.asarray(background, dtype=np.float64),
        )


class GradientBuffer:
    """Accumulators for d(loss)/d(position, raw_density, sh), scene-aligned."""

    def __init__(self, n_sites):
        self.d_position = np.zeros((n_sites, 3))
        self.d_raw_density = np.zeros(n_sites)
        self.d_sh = np.zeros((n_sites, sh.N_SH, 3))

    def zero(self):
        self.d_position[:] = 0.0
        self.d_raw_density[:] = 0.0
        self.d_sh[:] = 0.0

    def all_finite(self):
        return (
            np.isfinite(self.d_position).all()
            and np.isfinite(self.d_raw_density).all()
            and np.isfinite(self.d_sh).all()
        )

    def add(self, other):
        self.d_position += other.d_position
        self.d_raw_density += other.d_raw_density
        self.d_sh += other.d_sh
