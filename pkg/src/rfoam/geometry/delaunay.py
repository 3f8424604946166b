"""Incremental 3D Delaunay triangulation.

Bowyer-Watson insertion with ghost cells: every convex-hull facet is covered
by a pseudo-tetrahedron whose fourth vertex is the symbolic point at infinity
(``INF``), so the mesh has no boundary and cavity carving treats hull growth
like any other insertion. Point location walks from the last touched
tetrahedron; conflict tests use the exact, symbolically perturbed predicates,
which makes the construction deterministic for a fixed insertion order (batch
builds insert in Morton order).

Vertices are addressed by local index; the symbolic perturbation is keyed on
caller-supplied stable ids so that incremental and batch construction agree
on degenerate inputs.
"""

import numpy as np

from rfoam.errors import DegenerateInput, DuplicatePoints
from rfoam.geometry.predicates import _orient3d_exact, insphere, orient3d

INF = -1

# Face opposite local vertex k, ordered so the opposite vertex lies on the
# positive side (orient3d(face, verts[k]) > 0 for a positively oriented tet).
_FACE_ORDER = ((1, 3, 2), (0, 2, 3), (1, 0, 3), (0, 1, 2))


class Triangulation:
    """Tetrahedral mesh over a point set, mutable by insertion."""

    def __init__(self, dup_tol):
        self.dup_tol = float(dup_tol)
        self._pts = []          # vertex coordinates, tuples
        self._ids = []          # stable ids, drive the perturbation rule
        self._id_set = set()
        self._verts = []        # per tet: 4 local vertex indices (INF allowed)
        self._nbrs = []         # per tet: neighbor tet index opposite vertex k
        self._alive = []
        self._free = []
        self._v2t = []          # some alive tet incident to each vertex
        self._last = 0          # walk hint
        self._steps = 0         # pseudo-random walk counter

    # -- basic accessors ---------------------------------------------------

    @property
    def n_vertices(self):
        return len(self._pts)

    def point(self, v):
        return self._pts[v]

    def vertex_ids(self):
        return list(self._ids)

    def positions(self):
        return np.array(self._pts, dtype=np.float64)

    def alive_tets(self):
        """Indices of alive finite tetrahedra."""
        return [
            t
            for t in range(len(self._verts))
            if self._alive[t] and self._verts[t][3] != INF
        ]

    def tet_vertices(self, t):
        return self._verts[t]

    def tetrahedra(self):
        """Canonical (sorted, deduplicated) array of finite tets as stable ids."""
        rows = []
        for t in self.alive_tets():
            rows.append(sorted(self._ids[v] for v in self._verts[t]))
        out = np.array(sorted(rows), dtype=np.int64)
        return out.reshape(-1, 4)

    def tetrahedra_local(self):
        """Finite tets as sorted rows of local vertex indices."""
        return sorted(sorted(self._verts[t]) for t in self.alive_tets())

    def _is_ghost(self, t):
        return self._verts[t][3] == INF

    # -- predicates on tets --------------------------------------------------

    def _orient_face(self, f, p):
        pa, pb, pc = self._pts[f[0]], self._pts[f[1]], self._pts[f[2]]
        return orient3d(pa, pb, pc, p)

    def _conflict(self, t, p, pid):
        """True if inserting p must remove tet t (circumsphere conflict)."""
        v = self._verts[t]
        pts = self._pts
        if v[3] == INF:
            # Ghost: conflicts if p is beyond the hull facet; exactly coplanar
            # falls back to the facet's circumdisk via the finite neighbor
            # (the neighbor's circumsphere meets the facet plane in that disk).
            s = orient3d(pts[v[0]], pts[v[1]], pts[v[2]], p)
            if s > 0:
                return True
            if s < 0:
                return False
            return self._conflict(self._nbrs[t][3], p, pid)
        ids = self._ids
        return (
            insphere(
                pts[v[0]],
                pts[v[1]],
                pts[v[2]],
                pts[v[3]],
                p,
                ids[v[0]],
                ids[v[1]],
                ids[v[2]],
                ids[v[3]],
                pid,
            )
            > 0
        )

    # -- point location ------------------------------------------------------

    def locate(self, p, hint=None):
        """Walk to a tetrahedron containing p (a ghost if p is outside the hull)."""
        t = self._last if hint is None else hint
        if not self._alive[t]:
            t = next(i for i in range(len(self._verts)) if self._alive[i])
        pts = self._pts
        verts_arr = self._verts
        cap = 4 * len(verts_arr) + 64
        for _ in range(cap):
            v = verts_arr[t]
            if v[3] == INF:
                return t
            self._steps = (self._steps * 1103515245 + 12345) & 0x7FFFFFFF
            r = self._steps >> 13
            moved = False
            for kk in range(4):
                k = (kk + r) & 3
                f = _FACE_ORDER[k]
                if orient3d(pts[v[f[0]]], pts[v[f[1]]], pts[v[f[2]]], p) < 0:
                    t = self._nbrs[t][k]
                    moved = True
                    break
            if not moved:
                return t
        # Degenerate walk; any conflicting tet serves as a seed.
        for t in range(len(self._verts)):
            if self._alive[t] and self._conflict(t, p, len(self._pts)):
                return t
        raise DegenerateInput("point location failed; input may be degenerate")

    def incident_tets(self, v):
        """Alive tets incident to vertex v (local index)."""
        seed = self._v2t[v]
        out = [seed]
        seen = {seed}
        stack = [seed]
        while stack:
            t = stack.pop()
            verts = self._verts[t]
            for k in range(4):
                if verts[k] == v:
                    continue
                nb = self._nbrs[t][k]
                if nb not in seen and v in self._verts[nb]:
                    seen.add(nb)
                    out.append(nb)
                    stack.append(nb)
        return out

    def vertex_neighbors(self, v):
        """Local indices of vertices sharing a Delaunay edge with v."""
        nbrs = set()
        for t in self.incident_tets(v):
            for u in self._verts[t]:
                if u != v and u != INF:
                    nbrs.add(u)
        return nbrs

    def nearest_vertex(self, p, hint=None):
        """Greedy descent on the Delaunay graph; exact for any query point."""
        t = self.locate(p, hint)
        verts = [u for u in self._verts[t] if u != INF]
        best = min(
            verts,
            key=lambda u: (_sqdist(self._pts[u], p), self._ids[u]),
        )
        best_d = _sqdist(self._pts[best], p)
        while True:
            improved = False
            for u in sorted(self.vertex_neighbors(best)):
                d = _sqdist(self._pts[u], p)
                if d < best_d or (d == best_d and self._ids[u] < self._ids[best]):
                    best, best_d = u, d
                    improved = True
            if not improved:
                return best

    # -- construction --------------------------------------------------------

    def _alloc(self, verts, nbrs):
        if self._free:
            t = self._free.pop()
            self._verts[t] = verts
            self._nbrs[t] = nbrs
            self._alive[t] = True
        else:
            t = len(self._verts)
            self._verts.append(verts)
            self._nbrs.append(nbrs)
            self._alive.append(True)
        for v in verts:
            if v != INF:
                self._v2t[v] = t
        return t

    def _bootstrap(self, quad):
        """Create the first tetrahedron plus its four ghosts."""
        l0, l1, l2, l3 = quad
        if (
            orient3d(self._pts[l0], self._pts[l1], self._pts[l2], self._pts[l3])
            < 0
        ):
            l1, l2 = l2, l1
        t0 = self._alloc([l0, l1, l2, l3], [0, 0, 0, 0])
        edge_map = {}
        for k in range(4):
            f = _FACE_ORDER[k]
            tv = self._verts[t0]
            # Reverse the inward-oriented face so the ghost facet points out.
            face = (tv[f[0]], tv[f[2]], tv[f[1]])
            g = self._alloc([face[0], face[1], face[2], INF], [0, 0, 0, t0])
            self._nbrs[t0][k] = g
            for s in range(3):
                gf = _FACE_ORDER[s]
                edge = tuple(
                    sorted(
                        u
                        for u in (
                            self._verts[g][gf[0]],
                            self._verts[g][gf[1]],
                            self._verts[g][gf[2]],
                        )
                        if u != INF
                    )
                )
                if edge in edge_map:
                    og, os_ = edge_map.pop(edge)
                    self._nbrs[g][s] = og
                    self._nbrs[og][os_] = g
                else:
                    edge_map[edge] = (g, s)
        self._last = t0

    def _find_seed(self, t, p, pid):
        if self._conflict(t, p, pid):
            return t
        seen = {t}
        queue = [t]
        while queue:
            cur = queue.pop(0)
            for nb in self._nbrs[cur]:
                if nb in seen or not self._alive[nb]:
                    continue
                if self._conflict(nb, p, pid):
                    return nb
                seen.add(nb)
                queue.append(nb)
        raise DuplicatePoints("no conflict region; point duplicates an existing site")

    def insert(self, p, gid):
        """Insert one point; raises DuplicatePoints within the tolerance."""
        p = (float(p[0]), float(p[1]), float(p[2]))
        if not all(np.isfinite(p)):
            raise DegenerateInput("non-finite coordinate")
        nv = self.nearest_vertex(p)
        if _sqdist(self._pts[nv], p) < self.dup_tol * self.dup_tol:
            raise DuplicatePoints(
                f"point within duplicate tolerance of site id {self._ids[nv]}"
            )
        return self._insert_unchecked(p, gid)

    def _insert_unchecked(self, p, gid):
        if gid in self._id_set:
            raise ValueError(f"duplicate site id {gid}")
        seed = self._find_seed(self.locate(p), p, gid)

        verts_arr = self._verts
        nbrs_arr = self._nbrs
        pts = self._pts

        # Carve the conflict cavity (breadth-first over face neighbors).
        cavity = {seed}
        stack = [seed]
        boundary = []  # (face triple, outside tet, slot of face in outside)
        while stack:
            t = stack.pop()
            tv = verts_arr[t]
            tn = nbrs_arr[t]
            for k in range(4):
                nb = tn[k]
                if nb in cavity:
                    continue
                if self._conflict(nb, p, gid):
                    cavity.add(nb)
                    stack.append(nb)
                else:
                    f = _FACE_ORDER[k]
                    boundary.append(
                        ((tv[f[0]], tv[f[1]], tv[f[2]]), nb, nbrs_arr[nb].index(t))
                    )

        vi = len(pts)
        pts.append(p)
        self._ids.append(gid)
        self._id_set.add(gid)
        self._v2t.append(0)

        for t in cavity:
            self._alive[t] = False
            self._free.append(t)

        edge_map = {}
        new_ghosts = []
        for face, outside, out_slot in boundary:
            f0, f1, f2 = face
            if f0 == INF or f1 == INF or f2 == INF:
                if f0 == INF:
                    u, v = f1, f2
                elif f1 == INF:
                    u, v = f0, f2
                else:
                    u, v = f0, f1
                verts = [u, v, vi, INF]
                outside_slot = 2
                edge_slots = ((0, v, INF), (1, u, INF), (3, u if u < v else v, v if u < v else u))
            else:
                verts = [f0, f1, f2, vi]
                outside_slot = 3
                edge_slots = (
                    (0, f1 if f1 < f2 else f2, f2 if f1 < f2 else f1),
                    (1, f0 if f0 < f2 else f2, f2 if f0 < f2 else f0),
                    (2, f0 if f0 < f1 else f1, f1 if f0 < f1 else f0),
                )
                if orient3d(pts[f0], pts[f1], pts[f2], p) <= 0:
                    raise DegenerateInput(
                        "degenerate cavity facet (five or more coplanar sites?)"
                    )
            nt = self._alloc(verts, [0, 0, 0, 0])
            if verts[3] == INF:
                new_ghosts.append(nt)
            my_nbrs = nbrs_arr[nt]
            my_nbrs[outside_slot] = outside
            nbrs_arr[outside][out_slot] = nt
            for slot, e0, e1 in edge_slots:
                key = (e0, e1)
                other = edge_map.pop(key, None)
                if other is not None:
                    ot, oslot = other
                    my_nbrs[slot] = ot
                    nbrs_arr[ot][oslot] = nt
                else:
                    edge_map[key] = (nt, slot)
        if edge_map:
            raise DegenerateInput("open cavity boundary; inconsistent mesh")

        # Re-orient new hull facets to point away from the interior.
        for g in new_ghosts:
            gv = self._verts[g]
            fin_nb = self._nbrs[g][3]
            apex = next(
                u for u in self._verts[fin_nb] if u not in (gv[0], gv[1], gv[2])
            )
            if (
                self._orient_face((gv[0], gv[1], gv[2]), self._pts[apex]) > 0
            ):
                gv[0], gv[1] = gv[1], gv[0]
                nb = self._nbrs[g]
                nb[0], nb[1] = nb[1], nb[0]

        self._last = self._v2t[vi]
        return vi

    # -- adjacency extraction -------------------------------------------------

    def delaunay_edges(self):
        """Unique undirected edges as an (m, 2) local-index array."""
        tets = self.alive_tets()
        if not tets:
            return np.zeros((0, 2), dtype=np.int64)
        tv = np.array([self._verts[t] for t in tets], dtype=np.int64)
        pairs = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
        edges = np.concatenate([tv[:, list(p)] for p in pairs], axis=0)
        edges.sort(axis=1)
        return np.unique(edges, axis=0)

    def hull_vertices(self):
        """Local indices of vertices on the convex hull."""
        out = set()
        for t in range(len(self._verts)):
            if self._alive[t] and self._verts[t][3] == INF:
                out.update(self._verts[t][:3])
        return out


def _sqdist(a, b):
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    dz = a[2] - b[2]
    return dx * dx + dy * dy + dz * dz


def _morton_order(pts):
    """Insertion order with spatial locality (21-bit Morton code per axis)."""
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    span[span == 0] = 1.0
    q = ((pts - lo) / span * ((1 << 21) - 1)).astype(np.uint64)

    def spread(x):
        x &= np.uint64(0x1FFFFF)
        x = (x | (x << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
        x = (x | (x << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
        x = (x | (x << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
        x = (x | (x << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
        x = (x | (x << np.uint64(2))) & np.uint64(0x1249249249249249)
        return x

    code = spread(q[:, 0]) | (spread(q[:, 1]) << np.uint64(1)) | (
        spread(q[:, 2]) << np.uint64(2)
    )
    return np.argsort(code, kind="stable")


def duplicate_tolerance(pts):
    """1e-7 of the bounding-box diagonal (0 for a single point)."""
    if len(pts) < 2:
        return 0.0
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    return 1e-7 * diag


def build(points, ids=None, dup_tol=None):
    """Delaunay triangulation of a full point set.

    ``ids`` are the stable site identifiers (default 0..n-1); they key the
    symbolic perturbation, so batch and incremental construction of the same
    id'd points produce the same mesh.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise DegenerateInput("expected an (n, 3) point array")
    if not np.isfinite(pts).all():
        raise DegenerateInput("non-finite coordinates")
    n = len(pts)
    if ids is None:
        ids = np.arange(n, dtype=np.int64)
    else:
        ids = np.asarray(ids, dtype=np.int64)
        if len(ids) != n or len(np.unique(ids)) != n:
            raise ValueError("ids must be unique and match the point count")
    if n < 4:
        raise DegenerateInput("need at least 4 points")

    tol = duplicate_tolerance(pts) if dup_tol is None else float(dup_tol)
    if tol > 0:
        from scipy.spatial import cKDTree

        pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
        if len(pairs):
            i, j = pairs[0]
            raise DuplicatePoints(
                f"sites {ids[i]} and {ids[j]} within duplicate tolerance {tol:g}"
            )

    order = _morton_order(pts)

    # Bootstrap from the first four points in general position.
    quad = [int(order[0])]
    for cand in order[1:]:
        cand = int(cand)
        if len(quad) == 1:
            if not np.array_equal(pts[cand], pts[quad[0]]):
                quad.append(cand)
        elif len(quad) == 2:
            if not _collinear(pts[quad[0]], pts[quad[1]], pts[cand]):
                quad.append(cand)
        elif (
            _orient3d_exact(
                tuple(pts[quad[0]]),
                tuple(pts[quad[1]]),
                tuple(pts[quad[2]]),
                tuple(pts[cand]),
            )
            != 0
        ):
            quad.append(cand)
            break
    if len(quad) < 4:
        raise DegenerateInput("all points collinear or coplanar")

    tri = Triangulation(tol)
    local_of = {}
    for g in quad:
        local_of[g] = len(tri._pts)
        tri._pts.append(tuple(pts[g]))
        tri._ids.append(int(ids[g]))
        tri._id_set.add(int(ids[g]))
        tri._v2t.append(0)
    tri._bootstrap([local_of[g] for g in quad])

    taken = set(quad)
    for g in order:
        g = int(g)
        if g in taken:
            continue
        tri._insert_unchecked(tuple(pts[g]), int(ids[g]))
    return tri


def _collinear(a, b, c):
    u = b - a
    v = c - a
    cr = np.cross(u, v)
    m = float(np.abs(cr).max())
    scale = float(np.abs(np.concatenate([u, v])).max()) or 1.0
    if m > 1e-12 * scale * scale:
        return False
    # Near-zero cross product: settle it exactly.
    from fractions import Fraction

    ax, ay, az = (Fraction(float(x)) for x in a)
    bx, by, bz = (Fraction(float(x)) for x in b)
    cx, cy, cz = (Fraction(float(x)) for x in c)
    ux, uy, uz = bx - ax, by - ay, bz - az
    vx, vy, vz = cx - ax, cy - ay, cz - az
    return (
        uy * vz == uz * vy and uz * vx == ux * vz and ux * vy == uy * vx
    )


def verify_delaunay(tri, points=None, report=False):
    """True iff every finite tet is positively oriented and every circumsphere
    excludes all other sites under the perturbation rule.

    Candidate filtering: circumspheres are solved in floats and only sites
    within the (slack-inflated) radius are handed to the exact predicate, so
    a valid mesh costs little more than one KD-tree pass. ``points`` defaults
    to the triangulation's own vertices; pass the original array to
    cross-check that the stored coordinates match.
    """
    from scipy.spatial import cKDTree

    tets = tri.alive_tets()
    if not tets:
        return (False, ["no tetrahedra"]) if report else False
    pts = tri.positions()
    if points is not None:
        a = np.asarray(points, dtype=np.float64)
        if len(a) != len(pts) or sorted(map(tuple, a)) != sorted(map(tuple, pts)):
            msg = ["stored vertex coordinates do not match the input points"]
            return (False, msg) if report else False
    ids = np.asarray(tri.vertex_ids(), dtype=np.int64)
    tv = np.array([tri.tet_vertices(t) for t in tets], dtype=np.int64)
    problems = []

    tp = pts[tv]  # (m, 4, 3)
    b = tp[:, 1] - tp[:, 0]
    c = tp[:, 2] - tp[:, 0]
    d = tp[:, 3] - tp[:, 0]
    det = np.einsum("ij,ij->i", b, np.cross(c, d))
    scale = np.abs(tp - tp[:, :1]).max(axis=(1, 2)) ** 3 + 1e-300
    for t in np.nonzero(det < 1e-10 * scale)[0]:
        verts = tv[t]
        s = _orient3d_exact(*(tuple(pts[v]) for v in verts))
        if s <= 0:
            problems.append(f"tet {verts.tolist()} not positively oriented")

    # Float circumcenters: solve 2(p_k - p_0) . x = |p_k|^2 - |p_0|^2.
    mat = 2.0 * (tp[:, 1:, :] - tp[:, :1, :])
    rhs = np.einsum("mkj,mkj->mk", tp[:, 1:, :], tp[:, 1:, :]) - np.einsum(
        "mj,mj->m", tp[:, 0], tp[:, 0]
    )[:, None]
    matdet = np.abs(np.linalg.det(mat))
    good = matdet > 1e-250
    centers = pts[tv[:, 0]].copy()
    centers[good] = np.linalg.solve(mat[good], rhs[good][..., None])[..., 0]
    dist = np.linalg.norm(tp - centers[:, None, :], axis=2)
    radius = dist.max(axis=1)
    # Widen the candidate radius by the observed center error (the vertex
    # distances of an exact center would coincide) plus a conditioning term,
    # so sliver circumcenters cannot hide borderline sites from the exact
    # check below.
    spread = radius - dist.min(axis=1)
    edge = np.abs(tp - tp[:, :1]).max(axis=(1, 2)) + 1e-300
    cond_err = 1e-12 * radius * (edge ** 3) / np.maximum(matdet / 8.0, 1e-300)
    slack = radius + 4.0 * spread + 1e-9 * radius + cond_err
    slack[~good] = np.inf

    tree = cKDTree(pts)
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    slack = np.minimum(slack, 2.0 * diag + radius.min() + 1e-300)
    for m, cand in enumerate(tree.query_ball_point(centers, slack)):
        verts = tv[m]
        tet_pts = (
            tuple(pts[verts[0]]),
            tuple(pts[verts[1]]),
            tuple(pts[verts[2]]),
            tuple(pts[verts[3]]),
        )
        tet_ids = (int(ids[verts[0]]), int(ids[verts[1]]), int(ids[verts[2]]), int(ids[verts[3]]))
        for pi in cand:
            if pi == verts[0] or pi == verts[1] or pi == verts[2] or pi == verts[3]:
                continue
            s = insphere(
                *tet_pts,
                tuple(pts[pi]),
                *tet_ids,
                int(ids[pi]),
            )
            if s > 0:
                problems.append(
                    f"site {ids[pi]} inside circumsphere of tet "
                    f"{[int(i) for i in tet_ids]}"
                )
    ok = not problems
    return (ok, problems) if report else ok


def triangulation_to_off(tri):
    """OFF-style debug dump: vertex list, then one ``4 i j k l`` row per tet.

    The cell rows reuse the OFF face syntax for tetrahedra, which is enough
    for eyeballing in a text editor or a quick parser; it is not strict OFF.
    """
    pts = tri.positions()
    tets = tri.tetrahedra_local()
    lines = ["OFF", f"{len(pts)} {len(tets)} 0"]
    for p in pts:
        lines.append(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}")
    for t in tets:
        lines.append("4 " + " ".join(str(v) for v in t))
    return "\n".join(lines) + "\n"
