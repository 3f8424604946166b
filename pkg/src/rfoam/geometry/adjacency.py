"""Voronoi neighbor structure dual to the Delaunay triangulation.

Neighbor lists are stored contiguously (CSR offsets + flat index array) in
ascending order per site, ready for the tracing kernels. Sites on the convex
hull (unbounded Voronoi cells) are flagged in ``hull``. A uniform grid over
the sites backs ``nearest_site``; the traversal itself never consults it
beyond the single entry query per ray.
"""

import numpy as np

from rfoam._accel import maybe_njit


class AdjacencyGraph:
    """Symmetric site-adjacency with a bucket grid for nearest queries."""

    def __init__(self, positions, offsets, neighbors, hull):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        self.neighbors = np.ascontiguousarray(neighbors, dtype=np.int64)
        self.hull = np.ascontiguousarray(hull, dtype=bool)
        lo = self.positions.min(axis=0)
        hi = self.positions.max(axis=0)
        self.bbox_lo = lo
        self.bbox_hi = hi
        self.diagonal = float(np.linalg.norm(hi - lo))
        (
            self._grid_res,
            self._grid_lo,
            self._grid_cell,
            self._grid_starts,
            self._grid_items,
        ) = _build_grid(self.positions)

    @property
    def n_sites(self):
        return len(self.positions)

    def neighbor_list(self, i):
        return self.neighbors[self.offsets[i] : self.offsets[i + 1]]

    def degree(self, i):
        return int(self.offsets[i + 1] - self.offsets[i])

    @classmethod
    def from_triangulation(cls, tri):
        """Adjacency in stable-id order (ids must be contiguous 0..n-1)."""
        n = tri.n_vertices
        ids = np.asarray(tri.vertex_ids(), dtype=np.int64)
        if ids.min() != 0 or ids.max() != n - 1:
            raise ValueError("adjacency extraction needs contiguous site ids")
        edges = ids[tri.delaunay_edges()]
        both = np.concatenate([edges, edges[:, ::-1]], axis=0)
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.add.at(offsets, both[:, 0] + 1, 1)
        offsets = np.cumsum(offsets)
        hull = np.zeros(n, dtype=bool)
        hull[ids[list(tri.hull_vertices())]] = True
        positions = np.empty((n, 3))
        positions[ids] = tri.positions()
        return cls(positions, offsets, both[:, 1].copy(), hull)

    @classmethod
    def from_lists(cls, positions, neighbor_lists, hull=None):
        """Hand-built graph (tests, tiny scenes); symmetrized and sorted."""
        positions = np.asarray(positions, dtype=np.float64)
        n = len(positions)
        pairs = set()
        for i, lst in enumerate(neighbor_lists):
            for j in lst:
                if i != j:
                    pairs.add((i, j))
                    pairs.add((j, i))
        arr = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.add.at(offsets, arr[:, 0] + 1, 1)
        offsets = np.cumsum(offsets)
        if hull is None:
            hull = np.ones(n, dtype=bool)
        return cls(positions, offsets, arr[:, 1], hull)

    def nearest_site(self, query):
        """Site index minimizing Euclidean distance; ties go to the lower id."""
        q = np.asarray(query, dtype=np.float64)
        return int(
            _grid_nearest(
                self.positions,
                self._grid_res,
                self._grid_lo,
                self._grid_cell,
                self._grid_starts,
                self._grid_items,
                q[0],
                q[1],
                q[2],
            )
        )


def nearest_site(adj, query):
    return adj.nearest_site(query)


def cell_radius(adj, i):
    """Half the distance to the nearest Voronoi neighbor (approximate
    inscribed radius; equals half the true nearest-neighbor distance)."""
    nbrs = adj.neighbor_list(i)
    d = np.linalg.norm(adj.positions[nbrs] - adj.positions[i], axis=1)
    return 0.5 * float(d.min())


def cell_radii(adj):
    """Vectorized ``cell_radius`` over all sites."""
    src = np.repeat(np.arange(adj.n_sites), np.diff(adj.offsets))
    d = np.linalg.norm(adj.positions[adj.neighbors] - adj.positions[src], axis=1)
    out = np.full(adj.n_sites, np.inf)
    np.minimum.at(out, src, d)
    return 0.5 * out


def _build_grid(positions):
    n = len(positions)
    lo = positions.min(axis=0)
    hi = positions.max(axis=0)
    span = np.maximum(hi - lo, 1e-300)
    # Aim for O(1) sites per bucket.
    res = max(1, int(np.ceil(n ** (1.0 / 3.0))))
    cell = span / res
    cell[cell == 0] = 1.0
    idx = np.clip(((positions - lo) / cell).astype(np.int64), 0, res - 1)
    flat = (idx[:, 0] * res + idx[:, 1]) * res + idx[:, 2]
    order = np.argsort(flat, kind="stable")
    starts = np.searchsorted(flat[order], np.arange(res * res * res + 1))
    return res, lo.copy(), cell.copy(), starts.astype(np.int64), order.astype(np.int64)


@maybe_njit
def _grid_nearest(positions, res, lo, cell, starts, items, qx, qy, qz):
    cx = int((qx - lo[0]) / cell[0])
    cy = int((qy - lo[1]) / cell[1])
    cz = int((qz - lo[2]) / cell[2])
    if cx < 0:
        cx = 0
    if cy < 0:
        cy = 0
    if cz < 0:
        cz = 0
    if cx >= res:
        cx = res - 1
    if cy >= res:
        cy = res - 1
    if cz >= res:
        cz = res - 1

    best = -1
    best_d = np.inf
    for ring in range(res + 1):
        # Expanding shells; stop once the best hit beats the nearest possible
        # point of the next unexplored shell.
        if best >= 0:
            ring_gap = ring - 1
            if ring_gap >= 0:
                min_cell = min(cell[0], min(cell[1], cell[2]))
                reach = ring_gap * min_cell
                # Strict: equal-distance sites in farther rings must still be
                # scanned so the lowest-id tie rule sees them.
                if reach * reach > best_d:
                    break
        x0 = max(0, cx - ring)
        x1 = min(res - 1, cx + ring)
        y0 = max(0, cy - ring)
        y1 = min(res - 1, cy + ring)
        z0 = max(0, cz - ring)
        z1 = min(res - 1, cz + ring)
        for gx in range(x0, x1 + 1):
            for gy in range(y0, y1 + 1):
                for gz in range(z0, z1 + 1):
                    on_shell = (
                        gx == cx - ring
                        or gx == cx + ring
                        or gy == cy - ring
                        or gy == cy + ring
                        or gz == cz - ring
                        or gz == cz + ring
                    )
                    if not on_shell:
                        continue
                    b = (gx * res + gy) * res + gz
                    for k in range(starts[b], starts[b + 1]):
                        i = items[k]
                        dx = positions[i, 0] - qx
                        dy = positions[i, 1] - qy
                        dz = positions[i, 2] - qz
                        d = dx * dx + dy * dy + dz * dz
                        if d < best_d or (d == best_d and i < best):
                            best_d = d
                            best = i
        if best >= 0 and ring >= res:
            break
    return best
