"""Frame rendering on top of the walk/composite kernels.

Forward frames fan rays out across a worker pool in fixed contiguous chunks
(pixel-indexed writes, so assembly is deterministic for any worker count).
Backward accumulation merges per-worker buffers in worker order, which keeps
training bitwise-reproducible for a fixed seed and worker count.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from rfoam import foam as foam_mod
from rfoam._accel import default_workers, set_worker_threads
from rfoam.foam import GradientBuffer
from rfoam.tracer import kernels
from rfoam.tracer.rays import (
    DEFAULT_EPSILON,
    DEFAULT_STEP_LIMIT,
    WIDTH_FLOOR_SCALE,
    Ray,
    _default_t_max,
)


@dataclass
class RenderStats:
    rays: int = 0
    cells_stepped: int = 0
    neighbor_visits: int = 0
    grid_queries: int = 0
    failed_rays: int = 0
    seconds: float = 0.0

    @property
    def rays_per_sec(self):
        return self.rays / self.seconds if self.seconds > 0 else 0.0

    def merge(self, other):
        self.rays += other.rays
        self.cells_stepped += other.cells_stepped
        self.neighbor_visits += other.neighbor_visits
        self.grid_queries += other.grid_queries
        self.failed_rays += other.failed_rays
        self.seconds += other.seconds


def scene_arrays(scene):
    """Contiguous kernel views: adjacency, activated sigma, flat SH."""
    adj = scene.require_adjacency()
    sigma = foam_mod.softplus(scene.raw_density)
    sh_flat = np.ascontiguousarray(scene.sh_coeffs.reshape(len(scene.positions), 48))
    return adj, sigma, sh_flat


def render_ray_batch(scene, origins, directions, t_min=None, t_max=None,
                     start_sites=None, epsilon=DEFAULT_EPSILON,
                     step_limit=DEFAULT_STEP_LIMIT, workers=None, stats=None,
                     return_wsum=False):
    """Forward-render arbitrary rays; returns (rgb, residual, status)."""
    adj, sigma, sh_flat = scene_arrays(scene)
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    directions = np.ascontiguousarray(directions, dtype=np.float64)
    m = len(origins)
    if t_min is None:
        t_min = np.zeros(m)
    if t_max is None:
        t_max = np.full(m, np.nan)
    t_min = np.ascontiguousarray(t_min, dtype=np.float64)
    t_max = np.ascontiguousarray(t_max, dtype=np.float64)
    center = 0.5 * (adj.bbox_lo + adj.bbox_hi)
    fallback = float(
        np.linalg.norm(origins - center, axis=1).max() + 2.0 * adj.diagonal + 1.0
    )
    t_max = np.where(np.isfinite(t_max), t_max, fallback)

    if start_sites is None:
        if np.ptp(origins, axis=0).max() == 0.0:
            start = adj.nearest_site(origins[0])
            start_sites = np.full(m, start, dtype=np.int64)
            grid_queries = 1
        else:
            start_sites = np.array(
                [adj.nearest_site(o) for o in origins], dtype=np.int64
            )
            grid_queries = m
    else:
        start_sites = np.ascontiguousarray(start_sites, dtype=np.int64)
        grid_queries = 0

    n_workers = set_worker_threads(workers or default_workers())
    out_rgb = np.empty((m, 3))
    out_residual = np.empty(m)
    out_status = np.empty(m, dtype=np.int8)
    out_wsum = np.empty(m)
    counters = np.zeros((n_workers, 2), dtype=np.int64)
    scratch_cells = np.empty((n_workers, step_limit), dtype=np.int64)
    scratch_t0 = np.empty((n_workers, step_limit))
    scratch_t1 = np.empty((n_workers, step_limit))

    t0 = time.perf_counter()
    kernels.render_rays(
        adj.positions, adj.offsets, adj.neighbors, sigma, sh_flat,
        scene.background,
        origins, directions, t_min, t_max, start_sites,
        epsilon, step_limit, WIDTH_FLOOR_SCALE * adj.diagonal,
        n_workers,
        out_rgb, out_residual, out_status, out_wsum,
        counters,
        scratch_cells, scratch_t0, scratch_t1,
    )
    dt = time.perf_counter() - t0
    if stats is not None:
        stats.merge(RenderStats(
            rays=m,
            cells_stepped=int(counters[:, 0].sum()),
            neighbor_visits=int(counters[:, 1].sum()),
            grid_queries=grid_queries,
            failed_rays=int((out_status != kernels.STATUS_OK).sum()),
            seconds=dt,
        ))
    if return_wsum:
        return out_rgb, out_residual, out_status, out_wsum
    return out_rgb, out_residual, out_status


def render_image(scene, camera, epsilon=DEFAULT_EPSILON,
                 step_limit=DEFAULT_STEP_LIMIT, workers=None, stats=None,
                 weight_check=False):
    """Render a full frame; returns (H, W, 3) linear float image.

    Tracer failures on individual pixels are recorded in ``stats`` and render
    as background. With ``weight_check`` two extra (H, W) arrays return the
    independently summed segment weights and the residual transmittance per
    pixel (conservation diagnostics).
    """
    dirs = camera.ray_directions()
    m = len(dirs)
    origins = np.broadcast_to(camera.position, (m, 3)).copy()
    out = render_ray_batch(
        scene, origins, dirs, epsilon=epsilon, step_limit=step_limit,
        workers=workers, stats=stats, return_wsum=weight_check,
    )
    img = out[0].reshape(camera.height, camera.width, 3)
    if weight_check:
        return img, out[3].reshape(camera.height, camera.width), \
            out[1].reshape(camera.height, camera.width)
    return img


def render_rays_with_gradients(scene, origins, directions, adjoints,
                               t_min=None, t_max=None, start_sites=None,
                               epsilon=DEFAULT_EPSILON,
                               step_limit=DEFAULT_STEP_LIMIT,
                               grad=None):
    """Sequential forward+backward for arbitrary per-ray color adjoints.

    Returns (rgb, GradientBuffer). Deterministic regardless of thread
    configuration (single ordered pass); the training loop uses the fused
    parallel kernel instead.
    """
    adj, sigma, sh_flat = scene_arrays(scene)
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    directions = np.ascontiguousarray(directions, dtype=np.float64)
    adjoints = np.ascontiguousarray(adjoints, dtype=np.float64)
    m = len(origins)
    if t_min is None:
        t_min = np.zeros(m)
    if t_max is None:
        t_max = np.array([
            _default_t_max(adj, Ray(origins[k], directions[k])) for k in range(m)
        ])
    if start_sites is None:
        start_sites = np.array([
            adj.nearest_site(origins[k] + t_min[k] * directions[k])
            for k in range(m)
        ], dtype=np.int64)

    n = scene.n_sites
    if grad is None:
        grad = GradientBuffer(n)
    d_sigma = np.zeros(n)
    d_sh = grad.d_sh.reshape(n, 48)
    d_pos = grad.d_position
    counters = np.zeros((1, 2), dtype=np.int64)
    cells = np.empty(step_limit, dtype=np.int64)
    s0 = np.empty(step_limit)
    s1 = np.empty(step_limit)
    basis = np.empty(16)
    col = np.empty(3)
    out_rgb = np.empty((m, 3))
    width_floor = WIDTH_FLOOR_SCALE * adj.diagonal
    for q in range(m):
        ox, oy, oz = origins[q]
        dx, dy, dz = directions[q]
        nseg, status, _ = kernels.walk_ray(
            adj.positions, adj.offsets, adj.neighbors, sigma,
            ox, oy, oz, dx, dy, dz, float(t_min[q]), float(t_max[q]),
            int(start_sites[q]), epsilon, step_limit, width_floor,
            cells, s0, s1, counters, 0,
        )
        if status != kernels.STATUS_OK:
            out_rgb[q] = scene.background
            continue
        kernels.sh_basis_into(dx, dy, dz, basis)
        kernels.composite_segments(
            cells, s0, s1, nseg, sigma, sh_flat, basis,
            scene.background[0], scene.background[1], scene.background[2], col,
        )
        out_rgb[q] = col
        kernels.backward_ray(
            adj.positions, adj.offsets, adj.neighbors, sigma, sh_flat,
            scene.background,
            ox, oy, oz, dx, dy, dz,
            adjoints[q, 0], adjoints[q, 1], adjoints[q, 2],
            cells, s0, s1, nseg, float(t_min[q]), basis,
            d_sigma, d_sh, d_pos,
        )
    grad.d_raw_density += d_sigma * foam_mod.softplus_grad(scene.raw_density)
    return out_rgb, grad
