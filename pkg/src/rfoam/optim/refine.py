"""Adaptive site refinement: gradient-driven densification and pruning."""

import numpy as np

from rfoam.errors import DuplicatePoints
from rfoam.geometry.adjacency import cell_radii


def densify(scene, grad_norms, rng, count, max_points=None):
    """Clone ``count`` sites sampled by gradient mass.

    Sampling is multinomial with replacement, mass proportional to
    ||position gradient|| times the approximate cell radius (degenerate
    all-zero mass falls back to uniform); draws are deduplicated. Each
    selected site is cloned at 0.1 cell radii in a uniform random direction.
    Returns the number of sites actually added; adjacency is left stale.
    """
    n = scene.n_sites
    if max_points is not None:
        count = min(count, max_points - n)
    if count <= 0:
        return 0
    radii = cell_radii(scene.require_adjacency())
    mass = np.asarray(grad_norms, dtype=np.float64) * radii
    total = mass.sum()
    if not np.isfinite(total) or total <= 0.0:
        mass = np.ones(n)
        total = float(n)
    draws = rng.choice(n, size=count, replace=True, p=mass / total)
    added = 0
    for site in np.unique(draws):
        radius = radii[int(site)]
        for _ in range(8):
            direction = rng.normal(size=3)
            norm = np.linalg.norm(direction)
            if norm == 0.0:
                continue
            try:
                scene.clone_site(int(site), 0.1 * radius * direction / norm)
                added += 1
                break
            except DuplicatePoints:
                continue
    return added


def prune(scene, density_floor, neighbor_floor):
    """Drop sites whose own and all neighbors' densities are near zero.

    A low-density site next to any dense site defines a boundary and is
    always kept. Returns (number removed, keep mask); arrays are compacted
    and the adjacency left stale for the caller to rebuild.
    """
    adj = scene.require_adjacency()
    sigma = scene.densities()
    n = scene.n_sites
    keep_all = np.ones(n, dtype=bool)
    src = np.repeat(np.arange(n), np.diff(adj.offsets))
    neighbor_max = np.zeros(n)
    np.maximum.at(neighbor_max, src, sigma[adj.neighbors])
    removable = (sigma < density_floor) & (neighbor_max < neighbor_floor)
    removed = int(removable.sum())
    if removed == 0 or n - removed < 5:
        return 0, keep_all
    keep = ~removable
    scene.positions = scene.positions[keep].copy()
    scene.raw_density = scene.raw_density[keep].copy()
    scene.sh_coeffs = scene.sh_coeffs[keep].copy()
    scene.adjacency = None
    return removed, keep
