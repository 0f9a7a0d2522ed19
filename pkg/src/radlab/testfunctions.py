"""Random smooth test inputs that fit a given grid.

Gaussian widths are chosen so that the spectrum is below ~1e-10 of its peak
beyond the finest admissible band, and centers so that the function is below
~1e-10 outside [-R/2, R/2]^n.
"""

from __future__ import annotations

import math

import numpy as np

from .lp import GridFunction, max_admissible_level
from .profile import RadialProfile

# Gaussian decay exponents in space and frequency
_SPACE = math.sqrt(2.0 * 24.0)
_FREQ = math.sqrt(2.0 * 22.0)


def _sigma_range(R, N):
    h = 2.0 * R / N
    band = 2.0 ** max_admissible_level(h)
    smin = _FREQ / band
    smax = (R / 2) / _SPACE
    if smin > smax:
        raise ValueError(f"grid (R={R}, N={N}) too coarse for band-limited test inputs")
    return smin, smax


def random_bandlimited(n: int, R: float, N: int, rng: np.random.Generator,
                       terms: int = 3, complex_valued: bool = False) -> GridFunction:
    """Sum of randomly placed Gaussians with random amplitudes."""
    smin, smax = _sigma_range(R, N)
    g = GridFunction(n, R, N, np.zeros((N,) * n))
    ax = g.axis()
    grids = np.meshgrid(*([ax] * n), indexing="ij")
    out = np.zeros((N,) * n, complex if complex_valued else float)
    for _ in range(terms):
        sig = rng.uniform(smin, min(smax, 1.5 * smin))
        room = (R / 2 - sig * _SPACE) / math.sqrt(n)
        c = rng.uniform(-room, room, n)
        r2 = sum((x - ci) ** 2 for x, ci in zip(grids, c))
        amp = rng.normal() + (1j * rng.normal() if complex_valued else 0.0)
        out = out + amp * np.exp(-r2 / (2 * sig * sig))
    return g.with_samples(out)


def random_radial_profile(n: int, R: float, N: int, rng: np.random.Generator,
                          terms: int = 3) -> RadialProfile:
    """Sum of Gaussian bumps and Gaussian rings exp(-(r - a)^2 / (2 sigma^2))."""
    smin, smax = _sigma_range(R, N)
    params = []
    for _ in range(terms):
        sig = rng.uniform(smin, min(smax, 1.5 * smin))
        a_max = max(0.0, R / 2 - sig * _SPACE)
        # a ring must vanish to 1e-10 at the origin, or |x| leaves a kink there
        a_min = sig * _SPACE
        a = 0.0 if (rng.random() < 0.3 or a_max <= a_min) else rng.uniform(a_min, a_max)
        params.append((rng.normal(), a, sig))

    def func(r, params=tuple(params)):
        r = np.asarray(r, float)
        return sum(c * np.exp(-(r - a) ** 2 / (2 * s * s)) for c, a, s in params)

    return RadialProfile.from_function(n, func, R * math.sqrt(n) * 1.01)
