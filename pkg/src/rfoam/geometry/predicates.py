"""Exact geometric predicates with floating-point filters.

``orient3d`` and ``insphere`` return determinant signs. A jitted float
evaluation with a forward error bound settles the common case; anything
within the bound is recomputed in rational arithmetic (``fractions.Fraction``
over the exact binary values), so the slow path is exact rather than merely
more precise.

Exactly-zero ``insphere`` results (co-spherical inputs) are resolved by a
deterministic symbolic perturbation keyed on site ids: site ``i`` behaves as
if its lifted paraboloid height were lowered by an infinitesimal ``eps_i``,
with lower ids carrying asymptotically larger ``eps``. The lifted height
enters the determinant through a single column, so the perturbed determinant
expands exactly into the unperturbed value plus one cofactor term per point,
and the dominant nonzero term decides the sign. The rule flips under odd
permutations and survives even ones, like the determinant itself.
"""

import math
from fractions import Fraction

from rfoam._accel import maybe_njit

# Forward error bounds for the float filters, in units of the term-magnitude
# permanent. The orient3d constant is the standard tight bound for this
# evaluation order; the insphere constant is deliberately inflated because the
# cofactor expansion used here differs from the textbook scheme.
_EPS = 2.0 ** -53
_O3D_BOUND = (7.0 + 56.0 * _EPS) * _EPS
_ISP_BOUND = 1e-13


@maybe_njit
def _orient3d_filter(a, b, c, d):
    """Float det[b-a; c-a; d-a]; NaN when the sign is not certain."""
    ax, ay, az = a
    bax = b[0] - ax
    bay = b[1] - ay
    baz = b[2] - az
    cax = c[0] - ax
    cay = c[1] - ay
    caz = c[2] - az
    dax = d[0] - ax
    day = d[1] - ay
    daz = d[2] - az
    p0 = cay * daz
    p1 = caz * day
    p2 = caz * dax
    p3 = cax * daz
    p4 = cax * day
    p5 = cay * dax
    det = bax * (p0 - p1) + bay * (p2 - p3) + baz * (p4 - p5)
    permanent = (
        (abs(p0) + abs(p1)) * abs(bax)
        + (abs(p2) + abs(p3)) * abs(bay)
        + (abs(p4) + abs(p5)) * abs(baz)
    )
    err = _O3D_BOUND * permanent
    if det > err or det < -err:
        return det
    return math.nan


@maybe_njit
def _insphere_filter(a, b, c, d, e):
    """Float insphere determinant (negative-inside); NaN when uncertain."""
    ex, ey, ez = e
    aex = a[0] - ex
    aey = a[1] - ey
    aez = a[2] - ez
    bex = b[0] - ex
    bey = b[1] - ey
    bez = b[2] - ez
    cex = c[0] - ex
    cey = c[1] - ey
    cez = c[2] - ez
    dex = d[0] - ex
    dey = d[1] - ey
    dez = d[2] - ez

    wa = aex * aex + aey * aey + aez * aez
    wb = bex * bex + bey * bey + bez * bez
    wc = cex * cex + cey * cey + cez * cez
    wd = dex * dex + dey * dey + dez * dez

    # Shared (y,z) 2x2 minors across the four 3x3 cofactors.
    mab = aey * bez - aez * bey
    mac = aey * cez - aez * cey
    mad = aey * dez - aez * dey
    mbc = bey * cez - bez * cey
    mbd = bey * dez - bez * dey
    mcd = cey * dez - cez * dey

    d_bcd = bex * mcd - cex * mbd + dex * mbc
    d_acd = aex * mcd - cex * mad + dex * mac
    d_abd = aex * mbd - bex * mad + dex * mab
    d_abc = aex * mbc - bex * mac + cex * mab

    det = -wa * d_bcd + wb * d_acd - wc * d_abd + wd * d_abc

    pab = abs(aey * bez) + abs(aez * bey)
    pac = abs(aey * cez) + abs(aez * cey)
    pad = abs(aey * dez) + abs(aez * dey)
    pbc = abs(bey * cez) + abs(bez * cey)
    pbd = abs(bey * dez) + abs(bez * dey)
    pcd = abs(cey * dez) + abs(cez * dey)
    aax = abs(aex)
    abx = abs(bex)
    acx = abs(cex)
    adx = abs(dex)
    permanent = (
        wa * (abx * pcd + acx * pbd + adx * pbc)
        + wb * (aax * pcd + acx * pad + adx * pac)
        + wc * (aax * pbd + abx * pad + adx * pab)
        + wd * (aax * pbc + abx * pac + acx * pab)
    )
    err = _ISP_BOUND * permanent
    if det > err or det < -err:
        return det
    return math.nan


def orient3d(a, b, c, d):
    """Sign of det[b-a; c-a; d-a].

    +1 if d lies on the positive side of the plane through (a, b, c) (the side
    from which a, b, c appear counterclockwise), -1 on the other side, 0 if
    exactly coplanar.
    """
    det = _orient3d_filter(a, b, c, d)
    if det > 0:
        return 1
    if det < 0:
        return -1
    return _orient3d_exact(a, b, c, d)


def _orient3d_exact(a, b, c, d):
    ax, ay, az = Fraction(a[0]), Fraction(a[1]), Fraction(a[2])
    bax = Fraction(b[0]) - ax
    bay = Fraction(b[1]) - ay
    baz = Fraction(b[2]) - az
    cax = Fraction(c[0]) - ax
    cay = Fraction(c[1]) - ay
    caz = Fraction(c[2]) - az
    dax = Fraction(d[0]) - ax
    day = Fraction(d[1]) - ay
    daz = Fraction(d[2]) - az
    det = (
        bax * (cay * daz - caz * day)
        + bay * (caz * dax - cax * daz)
        + baz * (cax * day - cay * dax)
    )
    if det > 0:
        return 1
    if det < 0:
        return -1
    return 0


def insphere(a, b, c, d, e, ia, ib, ic, id_, ie):
    """+1 if e lies strictly inside the circumsphere of the positively
    oriented tetrahedron (a, b, c, d), -1 strictly outside.

    Exact co-sphericity is broken by the id-keyed perturbation; 0 is returned
    only if all five points are coplanar.
    """
    det = _insphere_filter(a, b, c, d, e)
    # e at the circumcenter makes the norm column constant, which reduces the
    # determinant to -R^2 * orient3d(a,b,c,d): negative-inside, hence the flip.
    if det > 0:
        return -1
    if det < 0:
        return 1
    return _insphere_exact(a, b, c, d, e, ia, ib, ic, id_, ie)


def _det3(px, py, pz, qx, qy, qz, rx, ry, rz):
    return (
        px * (qy * rz - qz * ry)
        + py * (qz * rx - qx * rz)
        + pz * (qx * ry - qy * rx)
    )


def _insphere_exact(a, b, c, d, e, ia, ib, ic, id_, ie):
    ex, ey, ez = Fraction(e[0]), Fraction(e[1]), Fraction(e[2])
    rows = []
    for p in (a, b, c, d):
        px = Fraction(p[0]) - ex
        py = Fraction(p[1]) - ey
        pz = Fraction(p[2]) - ez
        rows.append((px, py, pz, px * px + py * py + pz * pz))

    (axf, ayf, azf, wa) = rows[0]
    (bxf, byf, bzf, wb) = rows[1]
    (cxf, cyf, czf, wc) = rows[2]
    (dxf, dyf, dzf, wd) = rows[3]
    det = (
        -wa * _det3(bxf, byf, bzf, cxf, cyf, czf, dxf, dyf, dzf)
        + wb * _det3(axf, ayf, azf, cxf, cyf, czf, dxf, dyf, dzf)
        - wc * _det3(axf, ayf, azf, bxf, byf, bzf, dxf, dyf, dzf)
        + wd * _det3(axf, ayf, azf, bxf, byf, bzf, cxf, cyf, czf)
    )
    if det < 0:
        return 1
    if det > 0:
        return -1

    # Co-spherical: expand the lifted-height perturbation. Removing point i's
    # height entry leaves (up to the cofactor sign) the orientation of the
    # remaining four points; the lowest-id point with a nonzero cofactor
    # dominates, and the resolved sign is that cofactor's orientation sign.
    candidates = sorted(
        (
            (ia, 1, (b, c, d, e)),
            (ib, -1, (a, c, d, e)),
            (ic, 1, (a, b, d, e)),
            (id_, -1, (a, b, c, e)),
            (ie, 1, (a, b, c, d)),
        ),
        key=lambda t: t[0],
    )
    for _, sgn, quad in candidates:
        s = _orient3d_exact(*quad)
        if s != 0:
            return sgn * s
    return 0
