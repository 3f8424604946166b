"""Real spherical harmonics through degree 3 (view-dependent color basis).

Convention: Condon-Shortley-free real basis with the usual graphics
normalization, all constants positive. Coefficients are laid out per site as
a (16, 3) array indexed by l*(l+1)+m, channels last. A color is

    clamp(0.5 + basis(direction) @ coeffs, 0, inf)

per channel; the 0.5 offset keeps zero coefficients mid-gray and the clamp
floors negative lobes at black.
"""

import numpy as np

N_SH = 16

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, 1.0925484305920792, 0.31539156525252005,
      1.0925484305920792, 0.5462742152960396)
C3 = (0.5900435899266435, 2.890611442640554, 0.4570457994644658,
      0.3731763325901154, 0.4570457994644658, 1.445305721320277,
      0.5900435899266435)


def sh_basis(direction):
    """Evaluate the 16 basis functions at a unit direction."""
    x, y, z = float(direction[0]), float(direction[1]), float(direction[2])
    xx, yy, zz = x * x, y * y, z * z
    out = np.empty(N_SH)
    out[0] = C0
    out[1] = C1 * y
    out[2] = C1 * z
    out[3] = C1 * x
    out[4] = C2[0] * x * y
    out[5] = C2[1] * y * z
    out[6] = C2[2] * (3.0 * zz - 1.0)
    out[7] = C2[3] * x * z
    out[8] = C2[4] * (xx - yy)
    out[9] = C3[0] * y * (3.0 * xx - yy)
    out[10] = C3[1] * x * y * z
    out[11] = C3[2] * y * (5.0 * zz - 1.0)
    out[12] = C3[3] * z * (5.0 * zz - 3.0)
    out[13] = C3[4] * x * (5.0 * zz - 1.0)
    out[14] = C3[5] * z * (xx - yy)
    out[15] = C3[6] * x * (xx - 3.0 * yy)
    return out


def sh_eval(coeffs, direction, clamp=True):
    """RGB color for one site's (16, 3) coefficients at a unit direction."""
    rgb = 0.5 + sh_basis(direction) @ np.asarray(coeffs, dtype=np.float64)
    if clamp:
        rgb = np.maximum(rgb, 0.0)
    return rgb


def color_to_dc(rgb):
    """DC coefficient reproducing a given base color at zero higher orders."""
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / C0


def dc_to_color(c0):
    return 0.5 + C0 * np.asarray(c0, dtype=np.float64)
