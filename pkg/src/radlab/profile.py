"""Radial profiles: 1-D samples of a radial function of n variables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InsufficientRange


@dataclass(frozen=True)
class RadialProfile:
    """Radial function x -> g(|x|) on R^n.

    Parameters
    ----------
    n : int
        Dimension of the ambient space.
    r : ndarray
        Increasing radius samples, r[0] >= 0.
    values : ndarray
        Samples g(r).
    func : callable, optional
        Closed form of g.  When present, evaluation uses it instead of
        linear interpolation of the samples.
    """

    n: int
    r: np.ndarray
    values: np.ndarray
    func: Optional[Callable] = None

    def __post_init__(self):
        r = np.asarray(self.r, float)
        v = np.asarray(self.values)
        if r.ndim != 1 or r.shape != v.shape:
            raise ValueError("radius and value arrays must be 1-D of equal length")
        if r.size and (r[0] < 0 or np.any(np.diff(r) <= 0)):
            raise ValueError("radii must be nonnegative and increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("profile values must be finite")

    @classmethod
    def from_function(cls, n, func, r_max, samples=4097):
        r = np.linspace(0.0, r_max, samples)
        return cls(n, r, np.asarray(func(r)), func)

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def __call__(self, rho):
        rho = np.asarray(rho, float)
        if rho.size and float(rho.max()) > self.r_max * (1 + 1e-12):
            raise InsufficientRange(
                f"profile covers radii up to {self.r_max}, requested {float(rho.max())}")
        if self.func is not None:
            return self.func(rho)
        v = np.asarray(self.values)
        if np.iscomplexobj(v):
            return np.interp(rho, self.r, v.real) + 1j * np.interp(rho, self.r, v.imag)
        return np.interp(rho, self.r, v)

    def map(self, g) -> "RadialProfile":
        """Pointwise transform of the values, keeping the closed form."""
        f = None if self.func is None else (lambda x, f0=self.func: g(f0(x)))
        return RadialProfile(self.n, self.r, g(np.asarray(self.values)), f)

    def scaled(self, c) -> "RadialProfile":
        return self.map(lambda v: c * v)
