"""Hot ray kernels: cell walking, exact compositing, reverse-mode gradients.

Everything here operates on flat arrays (positions, CSR adjacency, activated
densities, flattened SH coefficients) so numba can compile it; the pure
interpreted path runs the identical code when RFOAM_NO_NUMBA=1.

Per-step cost is one pass over the current cell's neighbor list: no spatial
hierarchy is consulted anywhere in the walk. ``counters`` accumulates
(cells stepped, neighbor iterations) so tests can assert exactly that.

Status codes: 0 completed (reached t_max, left the hull, or transmittance
dropped below epsilon), 2 step limit exceeded, 3 cycle detected.
"""

import numpy as np

from rfoam._accel import maybe_njit, prange

STATUS_OK = 0
STATUS_STEP_LIMIT = 2
STATUS_CYCLE = 3

_ZERO_ADVANCE_LIMIT = 32

# SH basis constants (see rfoam.sh; duplicated here as scalars for the jit).
_C0 = 0.28209479177387814
_C1 = 0.4886025119029199
_C2_0 = 1.0925484305920792
_C2_2 = 0.31539156525252005
_C2_4 = 0.5462742152960396
_C3_0 = 0.5900435899266435
_C3_1 = 2.890611442640554
_C3_2 = 0.4570457994644658
_C3_3 = 0.3731763325901154
_C3_5 = 1.445305721320277


@maybe_njit
def sh_basis_into(dx, dy, dz, out):
    xx = dx * dx
    yy = dy * dy
    zz = dz * dz
    out[0] = _C0
    out[1] = _C1 * dy
    out[2] = _C1 * dz
    out[3] = _C1 * dx
    out[4] = _C2_0 * dx * dy
    out[5] = _C2_0 * dy * dz
    out[6] = _C2_2 * (3.0 * zz - 1.0)
    out[7] = _C2_0 * dx * dz
    out[8] = _C2_4 * (xx - yy)
    out[9] = _C3_0 * dy * (3.0 * xx - yy)
    out[10] = _C3_1 * dx * dy * dz
    out[11] = _C3_2 * dy * (5.0 * zz - 1.0)
    out[12] = _C3_3 * dz * (5.0 * zz - 3.0)
    out[13] = _C3_2 * dx * (5.0 * zz - 1.0)
    out[14] = _C3_5 * dz * (xx - yy)
    out[15] = _C3_0 * dx * (xx - 3.0 * yy)


@maybe_njit
def cell_color(sh, i, basis, out):
    """Clamped color of cell i for a precomputed basis; returns clamp mask."""
    mask = 0
    for ch in range(3):
        acc = 0.5
        for k in range(16):
            acc += basis[k] * sh[i, k * 3 + ch]
        if acc < 0.0:
            acc = 0.0
            mask |= 1 << ch
        out[ch] = acc
    return mask


@maybe_njit
def walk_ray(
    positions,
    offsets,
    neighbors,
    sigma,
    ox, oy, oz,
    dx, dy, dz,
    t_min, t_max,
    start_site,
    epsilon,
    step_limit,
    width_floor,
    seg_cells,
    seg_t0,
    seg_t1,
    counters,
    worker,
):
    """Walk cells front-face to front-face, recording abutting segments.

    Returns (segment count, status, residual transmittance). Segments
    narrower than width_floor are absorbed into the next cell so midpoints
    stay numerically attributable; abutment is exact by construction.
    """
    i = start_site
    entry = t_min
    log_T = 0.0
    nseg = 0
    zero_advance = 0
    steps = 0
    while True:
        steps += 1
        if steps > step_limit:
            return nseg, STATUS_STEP_LIMIT, np.exp(log_T)
        counters[worker, 0] += 1

        xi_x = positions[i, 0]
        xi_y = positions[i, 1]
        xi_z = positions[i, 2]
        best_t = np.inf
        best_j = -1
        for k in range(offsets[i], offsets[i + 1]):
            counters[worker, 1] += 1
            j = neighbors[k]
            nx = positions[j, 0] - xi_x
            ny = positions[j, 1] - xi_y
            nz = positions[j, 2] - xi_z
            denom = dx * nx + dy * ny + dz * nz
            if denom <= 0.0:
                continue
            mx = 0.5 * (positions[j, 0] + xi_x)
            my = 0.5 * (positions[j, 1] + xi_y)
            mz = 0.5 * (positions[j, 2] + xi_z)
            t = ((mx - ox) * nx + (my - oy) * ny + (mz - oz) * nz) / denom
            if t < best_t:
                best_t = t
                best_j = j

        if best_j < 0 or best_t >= t_max:
            if t_max > entry:
                seg_cells[nseg] = i
                seg_t0[nseg] = entry
                seg_t1[nseg] = t_max
                log_T -= sigma[i] * (t_max - entry)
                nseg += 1
            return nseg, STATUS_OK, np.exp(log_T)

        if best_t < entry:
            best_t = entry
        if best_t - entry > width_floor:
            seg_cells[nseg] = i
            seg_t0[nseg] = entry
            seg_t1[nseg] = best_t
            log_T -= sigma[i] * (best_t - entry)
            nseg += 1
            entry = best_t
            zero_advance = 0
            if epsilon > 0.0 and np.exp(log_T) < epsilon:
                return nseg, STATUS_OK, np.exp(log_T)
            if nseg >= step_limit:
                return nseg, STATUS_STEP_LIMIT, np.exp(log_T)
        else:
            zero_advance += 1
            if zero_advance > _ZERO_ADVANCE_LIMIT:
                return nseg, STATUS_CYCLE, np.exp(log_T)
        i = best_j


@maybe_njit
def composite_segments(seg_cells, seg_t0, seg_t1, nseg, sigma, sh, basis,
                       bg_r, bg_g, bg_b, out_rgb):
    """Exact piecewise-constant compositing over recorded segments.

    Returns (residual transmittance, sum of segment weights); the two must
    add to one up to roundoff. out_rgb receives the composited color.
    """
    T = 1.0
    wsum = 0.0
    r = 0.0
    g = 0.0
    b = 0.0
    col = np.empty(3)
    for s in range(nseg):
        i = seg_cells[s]
        delta = seg_t1[s] - seg_t0[s]
        alpha = 1.0 - np.exp(-sigma[i] * delta)
        cell_color(sh, i, basis, col)
        w = T * alpha
        wsum += w
        r += w * col[0]
        g += w * col[1]
        b += w * col[2]
        T *= 1.0 - alpha
    r += T * bg_r
    g += T * bg_g
    b += T * bg_b
    out_rgb[0] = r
    out_rgb[1] = g
    out_rgb[2] = b
    return T, wsum


@maybe_njit
def render_rays(
    positions, offsets, neighbors, sigma, sh,
    background,
    origins, directions, t_min, t_max, start_sites,
    epsilon, step_limit, width_floor,
    n_workers,
    out_rgb, out_residual, out_status, out_wsum,
    counters,
    scratch_cells, scratch_t0, scratch_t1,
):
    """Forward-render a batch of rays (chunked across workers, deterministic)."""
    n = origins.shape[0]
    chunk = (n + n_workers - 1) // n_workers
    for w in prange(n_workers):
        lo = w * chunk
        hi = min(n, lo + chunk)
        basis = np.empty(16)
        col = np.empty(3)
        for q in range(lo, hi):
            ox, oy, oz = origins[q, 0], origins[q, 1], origins[q, 2]
            dx, dy, dz = directions[q, 0], directions[q, 1], directions[q, 2]
            nseg, status, _ = walk_ray(
                positions, offsets, neighbors, sigma,
                ox, oy, oz, dx, dy, dz,
                t_min[q], t_max[q], start_sites[q],
                epsilon, step_limit, width_floor,
                scratch_cells[w], scratch_t0[w], scratch_t1[w],
                counters, w,
            )
            out_status[q] = status
            if status != STATUS_OK:
                out_rgb[q, 0] = background[0]
                out_rgb[q, 1] = background[1]
                out_rgb[q, 2] = background[2]
                out_residual[q] = 1.0
                out_wsum[q] = 0.0
                continue
            sh_basis_into(dx, dy, dz, basis)
            T, wsum = composite_segments(
                scratch_cells[w], scratch_t0[w], scratch_t1[w], nseg,
                sigma, sh, basis,
                background[0], background[1], background[2], col,
            )
            out_rgb[q, 0] = col[0]
            out_rgb[q, 1] = col[1]
            out_rgb[q, 2] = col[2]
            out_residual[q] = T
            out_wsum[q] = wsum


@maybe_njit
def backward_ray(
    positions, offsets, neighbors, sigma, sh, background,
    ox, oy, oz, dx, dy, dz,
    adj_r, adj_g, adj_b,
    seg_cells, seg_t0, seg_t1, nseg,
    t_min_q,
    basis,
    d_sigma, d_sh, d_pos,
):
    """Reverse-mode pass for one ray given its recorded segments.

    Accumulates dL/d(sigma_i), dL/d(sh_i), dL/d(position) into the supplied
    per-worker buffers. Boundary-depth gradients flow to the two sites whose
    bisector forms each interior boundary; the first entry (t_min) and the
    final exit carry no geometry gradient.
    """
    if nseg == 0:
        return
    # Forward transmittances: T_k before segment k, stored k = 0..nseg.
    T_before = np.empty(nseg + 1)
    T_before[0] = 1.0
    for s in range(nseg):
        i = seg_cells[s]
        delta = seg_t1[s] - seg_t0[s]
        T_before[s + 1] = T_before[s] * np.exp(-sigma[i] * delta)

    # Suffix S_k = sum_{m>k} w_m c_m + T_N * background  (k = 0..nseg-1).
    # Built backward together with the per-segment gradient work.
    S_r = T_before[nseg] * background[0]
    S_g = T_before[nseg] * background[1]
    S_b = T_before[nseg] * background[2]

    col = np.empty(3)
    colors = np.empty((nseg, 3))
    masks = np.empty(nseg, dtype=np.int64)
    for s in range(nseg):
        masks[s] = cell_color(sh, seg_cells[s], basis, col)
        colors[s, 0] = col[0]
        colors[s, 1] = col[1]
        colors[s, 2] = col[2]

    # d(loss)/d(boundary depth) for the boundary *entering* segment s
    # (s = 1..nseg-1); computed from per-delta partials below.
    # dC/d(delta_k) = sigma_k * (T_{k+1} c_k - S_k)
    # dC/d(sigma_k) = delta_k * (T_{k+1} c_k - S_k)
    d_delta = np.empty(nseg)
    for s in range(nseg - 1, -1, -1):
        i = seg_cells[s]
        delta = seg_t1[s] - seg_t0[s]
        alpha = 1.0 - np.exp(-sigma[i] * delta)
        w = T_before[s] * alpha
        gr = adj_r * (T_before[s + 1] * colors[s, 0] - S_r)
        gg = adj_g * (T_before[s + 1] * colors[s, 1] - S_g)
        gb = adj_b * (T_before[s + 1] * colors[s, 2] - S_b)
        common = gr + gg + gb
        d_sigma[i] += delta * common
        d_delta[s] = sigma[i] * common
        # SH gradient: dC/dc = w per channel, masked where clamped at zero.
        m = masks[s]
        if w != 0.0:
            if m & 1 == 0 and adj_r != 0.0:
                f = w * adj_r
                for k in range(16):
                    d_sh[i, k * 3 + 0] += f * basis[k]
            if m & 2 == 0 and adj_g != 0.0:
                f = w * adj_g
                for k in range(16):
                    d_sh[i, k * 3 + 1] += f * basis[k]
            if m & 4 == 0 and adj_b != 0.0:
                f = w * adj_b
                for k in range(16):
                    d_sh[i, k * 3 + 2] += f * basis[k]
        S_r = S_r + w * colors[s, 0]
        S_g = S_g + w * colors[s, 1]
        S_b = S_b + w * colors[s, 2]

    # Interior boundaries: t_s moves delta_{s-1} up and delta_s down.
    for s in range(1, nseg):
        dt = d_delta[s - 1] - d_delta[s]
        if dt == 0.0:
            continue
        i = seg_cells[s - 1]
        j = seg_cells[s]
        t = seg_t0[s]
        face_t_gradient(
            positions, i, j, ox, oy, oz, dx, dy, dz, t, dt, d_pos
        )


@maybe_njit
def face_t_gradient(positions, i, j, ox, oy, oz, dx, dy, dz, t, dt, d_pos):
    """Accumulate dt * d(t)/d(x_i, x_j) for the bisector crossing at depth t.

    t = ((m - o) . n) / (d . n) with m the midpoint and n = x_j - x_i gives
    dt/dx_i = (n/2 - (m - p)) / (d . n), dt/dx_j = (n/2 + (m - p)) / (d . n)
    where p = o + t d is the crossing point.
    """
    nx = positions[j, 0] - positions[i, 0]
    ny = positions[j, 1] - positions[i, 1]
    nz = positions[j, 2] - positions[i, 2]
    denom = dx * nx + dy * ny + dz * nz
    if denom == 0.0:
        return
    mx = 0.5 * (positions[i, 0] + positions[j, 0])
    my = 0.5 * (positions[i, 1] + positions[j, 1])
    mz = 0.5 * (positions[i, 2] + positions[j, 2])
    px = ox + t * dx
    py = oy + t * dy
    pz = oz + t * dz
    qx = mx - px
    qy = my - py
    qz = mz - pz
    inv = dt / denom
    d_pos[i, 0] += (0.5 * nx - qx) * inv
    d_pos[i, 1] += (0.5 * ny - qy) * inv
    d_pos[i, 2] += (0.5 * nz - qz) * inv
    d_pos[j, 0] += (0.5 * nx + qx) * inv
    d_pos[j, 1] += (0.5 * ny + qy) * inv
    d_pos[j, 2] += (0.5 * nz + qz) * inv


@maybe_njit
def train_batch(
    positions, offsets, neighbors, sigma, sh, background,
    origins, directions, t_min, t_max, start_sites, targets,
    epsilon, step_limit, width_floor,
    rgb_scale,
    quantile_scale, u_pairs, weight_floor,
    n_workers,
    out_rgb, out_status,
    d_sigma_w, d_sh_w, d_pos_w,
    loss_w,
    counters,
    scratch_cells, scratch_t0, scratch_t1,
):
    """Fused training pass: walk, composite, L2 adjoint, reverse gradients,
    and the depth-spread regularizer, for a batch of rays.

    Gradients land in per-worker buffers (d_*_w, first axis = worker) that
    the caller reduces in worker order, so results are reproducible for a
    fixed worker count. loss_w accumulates (sum of squared error, sum of
    quantile terms) per worker. rgb_scale converts the summed squared error
    adjoint to the caller's loss normalization; quantile_scale likewise
    multiplies each Monte Carlo pair term.
    """
    n = origins.shape[0]
    n_pairs = u_pairs.shape[1]
    chunk = (n + n_workers - 1) // n_workers
    for w in prange(n_workers):
        lo = w * chunk
        hi = min(n, lo + chunk)
        basis = np.empty(16)
        col = np.empty(3)
        for q in range(lo, hi):
            ox, oy, oz = origins[q, 0], origins[q, 1], origins[q, 2]
            dx, dy, dz = directions[q, 0], directions[q, 1], directions[q, 2]
            nseg, status, _ = walk_ray(
                positions, offsets, neighbors, sigma,
                ox, oy, oz, dx, dy, dz,
                t_min[q], t_max[q], start_sites[q],
                epsilon, step_limit, width_floor,
                scratch_cells[w], scratch_t0[w], scratch_t1[w],
                counters, w,
            )
            out_status[q] = status
            if status != STATUS_OK:
                out_rgb[q, 0] = background[0]
                out_rgb[q, 1] = background[1]
                out_rgb[q, 2] = background[2]
                continue
            sh_basis_into(dx, dy, dz, basis)
            composite_segments(
                scratch_cells[w], scratch_t0[w], scratch_t1[w], nseg,
                sigma, sh, basis,
                background[0], background[1], background[2], col,
            )
            out_rgb[q, 0] = col[0]
            out_rgb[q, 1] = col[1]
            out_rgb[q, 2] = col[2]
            er = col[0] - targets[q, 0]
            eg = col[1] - targets[q, 1]
            eb = col[2] - targets[q, 2]
            loss_w[w, 0] += er * er + eg * eg + eb * eb
            backward_ray(
                positions, offsets, neighbors, sigma, sh, background,
                ox, oy, oz, dx, dy, dz,
                2.0 * rgb_scale * er, 2.0 * rgb_scale * eg, 2.0 * rgb_scale * eb,
                scratch_cells[w], scratch_t0[w], scratch_t1[w], nseg,
                t_min[q],
                basis,
                d_sigma_w[w], d_sh_w[w], d_pos_w[w],
            )
            if quantile_scale > 0.0:
                for pidx in range(n_pairs):
                    loss_w[w, 1] += quantile_backward_ray(
                        scratch_cells[w], scratch_t0[w], scratch_t1[w], nseg,
                        sigma,
                        u_pairs[q, pidx],
                        weight_floor,
                        positions, ox, oy, oz, dx, dy, dz,
                        quantile_scale,
                        d_sigma_w[w], d_pos_w[w],
                    )


@maybe_njit
def quantile_backward_ray(
    seg_cells, seg_t0, seg_t1, nseg, sigma,
    u_pair,
    weight_floor,
    positions, ox, oy, oz, dx, dy, dz,
    scale,
    d_sigma, d_pos,
):
    """One-pair Monte Carlo term of the depth-spread regularizer.

    Computes |t(u1) - t(u2)| for the normalized weight CDF along the ray and
    accumulates its gradients (through densities and interior boundaries).
    Returns the loss term, or 0 with no gradient when the total weight is
    under the floor.
    """
    if nseg == 0:
        return 0.0
    total = 0.0
    T_before = np.empty(nseg + 1)
    W_before = np.empty(nseg + 1)
    T_before[0] = 1.0
    W_before[0] = 0.0
    for s in range(nseg):
        i = seg_cells[s]
        delta = seg_t1[s] - seg_t0[s]
        T_before[s + 1] = T_before[s] * np.exp(-sigma[i] * delta)
        W_before[s + 1] = 1.0 - T_before[s + 1]
    total = W_before[nseg]
    if total < weight_floor:
        return 0.0

    t_hit = np.empty(2)
    seg_hit = np.empty(2, dtype=np.int64)
    for a in range(2):
        u = u_pair[a]
        target = u * total
        # Containing segment: first with cumulative weight >= target.
        s = 0
        while s < nseg - 1 and W_before[s + 1] < target:
            s += 1
        i = seg_cells[s]
        si = sigma[i]
        if si <= 0.0:
            t_hit[a] = seg_t0[s]
            seg_hit[a] = s
            continue
        frac = (target - W_before[s]) / T_before[s]
        if frac > 1.0 - 1e-15:
            frac = 1.0 - 1e-15
        t_hit[a] = seg_t0[s] - np.log(1.0 - frac) / si
        if t_hit[a] > seg_t1[s]:
            t_hit[a] = seg_t1[s]
        seg_hit[a] = s

    diff = t_hit[0] - t_hit[1]
    loss = abs(diff)
    if diff == 0.0:
        return 0.0
    sign = 1.0 if diff > 0.0 else -1.0

    # dt_u/dtheta = (u * dA/dtheta - dW(t_u)/dtheta) / w(t_u),
    # w(t) = T(t) sigma_seg;  W(t) = 1 - T(t), A = total.
    for a in range(2):
        u = u_pair[a]
        s = seg_hit[a]
        i = seg_cells[s]
        si = sigma[i]
        t_u = t_hit[a]
        T_at = T_before[s] * np.exp(-si * (t_u - seg_t0[s]))
        wd = T_at * si
        if wd <= 1e-300:
            continue
        g = (sign if a == 0 else -sign) * scale / wd

        # Density partials: dW(t)/dsigma_k = T(t) * overlap_k(t),
        # dA/dsigma_k = T_end * delta_k.
        T_end = T_before[nseg]
        for k in range(nseg):
            ck = seg_cells[k]
            if seg_t0[k] >= t_u:
                break
            overlap = min(seg_t1[k], t_u) - seg_t0[k]
            dW = T_at * overlap
            dA = T_end * (seg_t1[k] - seg_t0[k])
            d_sigma[ck] += g * (u * dA - dW)
        # Remaining segments beyond t_u contribute only through A.
        for k in range(nseg):
            if seg_t0[k] < t_u:
                continue
            ck = seg_cells[k]
            dA = T_end * (seg_t1[k] - seg_t0[k])
            d_sigma[ck] += g * (u * dA)

        # Boundary partials: boundary m (entering segment m) with densities
        # sigma_{m-1}, sigma_m shifts the optical depth beyond it.
        for m in range(1, nseg):
            im = seg_cells[m - 1]
            jm = seg_cells[m]
            dsig = sigma[im] - sigma[jm]
            if dsig == 0.0:
                continue
            tb = seg_t0[m]
            dW = T_at * dsig if tb < t_u else 0.0
            dA = T_end * dsig
            dt_term = g * (u * dA - dW)
            if dt_term != 0.0:
                face_t_gradient(
                    positions, im, jm, ox, oy, oz, dx, dy, dz, tb,
                    dt_term, d_pos,
                )
    return loss
