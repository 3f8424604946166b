"""Exact compositing of traced segments and its reverse-mode derivatives.

These are the segment-level reference operations: clear numpy, one ray at a
time. The fused per-frame kernels in rfoam.tracer.kernels implement the same
math; tests hold the two paths together.

With per-segment density sigma_n, width delta_n, color c_n:

    C = sum_n T_n (1 - exp(-sigma_n delta_n)) c_n + T_N * background
    T_n = prod_{j<n} exp(-sigma_j delta_j)

so sum of weights plus residual transmittance is exactly one. Geometry
receives gradients only through the segment widths: each interior boundary
depth perturbs the two adjacent widths with opposite signs, and the boundary
depth itself is an analytic function of the two generating sites.
"""

from dataclasses import dataclass

import numpy as np

from rfoam import sh as sh_mod
from rfoam.foam import softplus, softplus_grad


@dataclass
class CompositeResult:
    color: np.ndarray            # (3,)
    weights: np.ndarray          # (nseg,) w_n = T_n * alpha_n
    residual_transmittance: float

    def conservation_defect(self):
        return abs(float(self.weights.sum()) + self.residual_transmittance - 1.0)


@dataclass
class RayGradient:
    d_sigma: np.ndarray          # (nseg,) dL/d(activated density per segment)
    d_color: np.ndarray          # (nseg, 3) dL/d(cell color per segment)
    d_boundary: np.ndarray       # (nseg-1,) dL/d(interior boundary depth)
    d_sh: np.ndarray             # (nseg, 16, 3) chained through the basis
    d_raw_density: np.ndarray    # (nseg,) chained through softplus


def _segment_colors(segments, scene, direction):
    basis = sh_mod.sh_basis(direction)
    raw = 0.5 + basis @ scene.sh_coeffs[segments.cells]  # (nseg, 3)
    colors = np.maximum(raw, 0.0)
    return basis, raw, colors


def composite(segments, scene, direction):
    """Forward compositing of one ray's segments (exact, no quadrature)."""
    delta = segments.widths()
    sigma = softplus(scene.raw_density[segments.cells])
    _, _, colors = _segment_colors(segments, scene, direction)
    att = np.exp(-sigma * delta)
    T = np.concatenate([[1.0], np.cumprod(att)])
    weights = T[:-1] * (1.0 - att)
    color = weights @ colors + T[-1] * scene.background
    return CompositeResult(color, weights, float(T[-1]))


def composite_backward(segments, scene, direction, d_color):
    """Reverse-mode derivatives of the composited color for one ray.

    ``d_color`` is dL/dC. Returns per-segment partials for the activated
    densities, cell colors (and their SH/raw chains), and each interior
    boundary depth. The entry of the first segment and the exit of the last
    are not free boundaries and carry no derivative.
    """
    g = np.asarray(d_color, dtype=np.float64)
    nseg = len(segments)
    delta = segments.widths()
    sigma = softplus(scene.raw_density[segments.cells])
    basis, raw, colors = _segment_colors(segments, scene, direction)
    att = np.exp(-sigma * delta)
    T = np.concatenate([[1.0], np.cumprod(att)])
    weights = T[:-1] * (1.0 - att)

    # Suffix S_n = sum_{m>n} w_m c_m + T_N * background.
    wc = weights[:, None] * colors
    suffix = np.cumsum(wc[::-1], axis=0)[::-1]
    S = np.vstack([suffix[1:], np.zeros((1, 3))]) + T[-1] * scene.background

    inner = (T[1:, None] * colors - S) @ g
    d_sigma = delta * inner
    d_boundary = (sigma * inner)[:-1] - (sigma * inner)[1:]

    d_col = weights[:, None] * g[None, :]
    d_col_eff = np.where(raw > 0.0, d_col, 0.0)
    d_sh = basis[None, :, None] * d_col_eff[:, None, :]
    d_raw = d_sigma * softplus_grad(scene.raw_density[segments.cells])
    return RayGradient(d_sigma, d_col, d_boundary, d_sh, d_raw)


def position_backward(ray, x, x_prime, d_t):
    """Chain a boundary-depth adjoint to the two generating site positions.

    For t = ((m - o) . n)/(d . n), m = (x + x')/2, n = x' - x:
        dt/dx  = (n/2 - (m - p)) / (d . n)
        dt/dx' = (n/2 + (m - p)) / (d . n)
    with p the crossing point o + t d.
    """
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(x_prime, dtype=np.float64)
    n = xp - x
    denom = float(ray.direction @ n)
    if denom == 0.0:
        return np.zeros(3), np.zeros(3)
    m = 0.5 * (x + xp)
    t = float((m - ray.origin) @ n) / denom
    q = m - ray.at(t)
    d_x = d_t * (0.5 * n - q) / denom
    d_xp = d_t * (0.5 * n + q) / denom
    return d_x, d_xp
