"""Weight distribution along a ray: CDF, quantile function, spread loss.

The volume-rendering weight density along a traced ray is w(t) = T(t) sigma(t)
with piecewise-constant sigma, so the cumulative weight has the closed form
W(t) = 1 - T(t) and inverts per segment without iteration. The spread loss is
the expected |t1 - t2| between two independent draws of the normalized weight
distribution; concentrating weight at a single depth drives it to zero, which
is what suppresses floaters.
"""

import numpy as np

from rfoam.errors import DegenerateRay
from rfoam.foam import softplus

DEFAULT_WEIGHT_FLOOR = 1e-4


class WeightCDF:
    """Cumulative ray weight with analytic within-segment inversion."""

    def __init__(self, t_entry, t_exit, sigma):
        self.t_entry = np.asarray(t_entry, dtype=np.float64)
        self.t_exit = np.asarray(t_exit, dtype=np.float64)
        self.sigma = np.asarray(sigma, dtype=np.float64)
        tau = np.concatenate([[0.0], np.cumsum(self.sigma * (self.t_exit - self.t_entry))])
        self.T_entry = np.exp(-tau[:-1])
        self.W_entry = 1.0 - self.T_entry
        self.W_exit = 1.0 - np.exp(-tau[1:])
        self.total = float(self.W_exit[-1]) if len(self.sigma) else 0.0

    @classmethod
    def from_segments(cls, segments, scene):
        sigma = softplus(scene.raw_density[segments.cells])
        return cls(segments.t_entry, segments.t_exit, sigma)

    def value(self, t):
        """Un-normalized W(t), clamped to the traced interval."""
        t = float(t)
        if t <= self.t_entry[0]:
            return 0.0
        if t >= self.t_exit[-1]:
            return self.total
        s = int(np.searchsorted(self.t_exit, t, side="left"))
        dt = min(t, self.t_exit[s]) - self.t_entry[s]
        return float(self.W_entry[s] + self.T_entry[s] * (1.0 - np.exp(-self.sigma[s] * dt)))

    def inverse(self, u, weight_floor=DEFAULT_WEIGHT_FLOOR):
        return inverse_cdf(self, u, weight_floor)


def inverse_cdf(cdf, u, weight_floor=DEFAULT_WEIGHT_FLOOR):
    """Depth t with normalized cumulative weight u.

    Uses the closed-form within-segment inversion
    t = t0 - ln(1 - (u total - W(t0)) / T(t0)) / sigma. Raises DegenerateRay
    when the ray's total weight is under the floor.
    """
    if not (0.0 <= u <= 1.0):
        raise ValueError("u must be in [0, 1]")
    if cdf.total < weight_floor:
        raise DegenerateRay(
            f"total ray weight {cdf.total:g} below floor {weight_floor:g}"
        )
    target = u * cdf.total
    # First segment whose exit weight reaches the target; zero-density
    # segments gain no weight and are skipped by the search automatically.
    s = min(int(np.searchsorted(cdf.W_exit, target, side="left")), len(cdf.sigma) - 1)
    sigma = cdf.sigma[s]
    if sigma <= 0.0:
        return float(cdf.t_entry[s])
    frac = (target - cdf.W_entry[s]) / cdf.T_entry[s]
    frac = min(max(frac, 0.0), 1.0 - 1e-15)
    t = cdf.t_entry[s] - np.log1p(-frac) / sigma
    return float(min(t, cdf.t_exit[s]))


def quantile_loss(cdf, rng, samples, weight_floor=DEFAULT_WEIGHT_FLOOR):
    """Monte Carlo estimate of E|W^-1(u1) - W^-1(u2)|, u ~ U[0,1].

    Deterministic for a given generator state; DegenerateRay below the
    weight floor, matching inverse_cdf.
    """
    u = rng.random((int(samples), 2))
    acc = 0.0
    for u1, u2 in u:
        acc += abs(
            inverse_cdf(cdf, float(u1), weight_floor)
            - inverse_cdf(cdf, float(u2), weight_floor)
        )
    return acc / len(u)
