"""Rays, traced segments, and ray-level operations."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from rfoam import foam as foam_mod
from rfoam.errors import CycleDetected, ShapeMismatch, StepLimit
from rfoam.tracer import kernels

DEFAULT_EPSILON = 1e-3
DEFAULT_STEP_LIMIT = 4096
WIDTH_FLOOR_SCALE = 1e-12


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = np.inf

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        if self.origin.shape != (3,) or self.direction.shape != (3,):
            raise ShapeMismatch("ray origin/direction must be 3-vectors")
        norm = float(np.linalg.norm(self.direction))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"ray direction not unit length (|d| = {norm:g})")
        if not (0.0 <= self.t_min < self.t_max):
            raise ValueError("require 0 <= t_min < t_max")

    def at(self, t):
        return self.origin + t * self.direction


@dataclass
class RaySegments:
    """Depth-ordered (cell, t_entry, t_exit) runs plus what survived them."""

    cells: np.ndarray
    t_entry: np.ndarray
    t_exit: np.ndarray
    residual_transmittance: float
    status: int = kernels.STATUS_OK

    def __len__(self):
        return len(self.cells)

    def widths(self):
        return self.t_exit - self.t_entry

    def midpoints(self, ray):
        mid = 0.5 * (self.t_entry + self.t_exit)
        return ray.origin[None, :] + mid[:, None] * ray.direction[None, :]


def intersect_face(ray, x, x_prime):
    """Depth of the bisector-plane crossing between sites x and x'.

    Returns (t, front): t solves (o + t d - (x+x')/2) . (x'-x) = 0 and may be
    negative or +inf (parallel); front is True when the ray direction points
    from x's side toward x' (the face is a candidate exit of x's cell).
    """
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(x_prime, dtype=np.float64)
    if np.array_equal(x, xp):
        raise ValueError("sites coincide; no bisector plane")
    n = xp - x
    denom = float(ray.direction @ n)
    front = denom > 0.0
    if denom == 0.0:
        return np.inf, front
    m = 0.5 * (x + xp)
    t = float((m - ray.origin) @ n) / denom
    return t, front


def trace(scene, ray, epsilon=DEFAULT_EPSILON, step_limit=DEFAULT_STEP_LIMIT,
          start_site=None, counters=None):
    """Walk the ray through the scene's Voronoi cells.

    The entry cell is the site nearest the ray at t_min (grid query) unless
    ``start_site`` pins it (per-frame caching for shared-origin cameras).
    Raises StepLimit / CycleDetected on the corresponding walk failures.
    """
    adj = scene.require_adjacency()
    if start_site is None:
        start_site = adj.nearest_site(ray.at(ray.t_min))
    sigma = foam_mod.softplus(scene.raw_density)
    cells = np.empty(step_limit, dtype=np.int64)
    t0 = np.empty(step_limit)
    t1 = np.empty(step_limit)
    if counters is None:
        counters = np.zeros((1, 2), dtype=np.int64)
    t_max = ray.t_max
    if not np.isfinite(t_max):
        t_max = _default_t_max(adj, ray)
    nseg, status, residual = kernels.walk_ray(
        adj.positions, adj.offsets, adj.neighbors, sigma,
        ray.origin[0], ray.origin[1], ray.origin[2],
        ray.direction[0], ray.direction[1], ray.direction[2],
        ray.t_min, t_max, start_site,
        epsilon, step_limit, WIDTH_FLOOR_SCALE * adj.diagonal,
        cells, t0, t1, counters, 0,
    )
    if status == kernels.STATUS_STEP_LIMIT:
        raise StepLimit(f"ray exceeded {step_limit} cells")
    if status == kernels.STATUS_CYCLE:
        raise CycleDetected("walk stalled; same cell revisited without advancing")
    return RaySegments(
        cells[:nseg].copy(), t0[:nseg].copy(), t1[:nseg].copy(), residual, status
    )


def _default_t_max(adj, ray):
    to_center = 0.5 * (adj.bbox_lo + adj.bbox_hi) - ray.origin
    return float(np.linalg.norm(to_center) + 2.0 * adj.diagonal + 1.0)


@dataclass
class EffectPlane:
    """User-tagged interface for demonstration-scope ray effects."""

    point: np.ndarray
    normal: np.ndarray
    kind: str = "mirror"          # mirror | refract
    eta: float = 1.5              # relative index of the entered medium

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=np.float64)
        self.normal = np.asarray(self.normal, dtype=np.float64)
        self.normal = self.normal / np.linalg.norm(self.normal)
        if self.kind not in ("mirror", "refract"):
            raise ValueError(f"unknown effect kind {self.kind!r}")


def reflect(direction, normal):
    d = np.asarray(direction, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    return d - 2.0 * float(d @ n) * n


def refract(direction, normal, eta):
    """Snell refraction entering a medium with relative index ``eta``.

    Total internal reflection falls back to the mirror direction.
    """
    d = np.asarray(direction, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    cos_i = float(-d @ n)
    if cos_i < 0.0:
        # Hitting the back side: flip the normal and invert the ratio.
        return refract(d, -n, 1.0 / eta)
    ratio = 1.0 / eta
    sin2_t = ratio * ratio * (1.0 - cos_i * cos_i)
    if sin2_t > 1.0:
        return reflect(d, n)
    cos_t = np.sqrt(1.0 - sin2_t)
    out = ratio * d + (ratio * cos_i - cos_t) * n
    return out / np.linalg.norm(out)


def apply_effect(ray, normal, effect, eta=1.5, at_t=0.0):
    """Continue the ray across an effect interface at depth ``at_t``."""
    normal = np.asarray(normal, dtype=np.float64)
    if effect == "reflect" or effect == "mirror":
        d = reflect(ray.direction, normal)
    elif effect == "refract":
        d = refract(ray.direction, normal, eta)
    else:
        raise ValueError(f"unknown effect {effect!r}")
    d = d / np.linalg.norm(d)
    return Ray(ray.at(at_t), d, 0.0, ray.t_max)
