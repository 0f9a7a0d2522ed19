"""Radial decay laboratory: dyadic partitions, envelopes, witnesses, slope fits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ._smooth import plateau, smooth_step
from .errors import ClassifierRejection, RegimeError
from .lp import LPPair, sample_radial
from .norms import CubeFamily, besov_type_norm, radial_besov_norm
from .profile import RadialProfile
from .regions import INF, ParameterPoint, classify, recip

# theta = 1 on [0, 1.1], 0 on [1.9, inf); rho(u) = theta(u) - theta(2u)
_THETA_FLAT, _THETA_ZERO = 1.1, 1.9
DECAY_WINDOW = 2.0 ** 0.25


# ---------------------------------------------------------------------------
# dyadic partition of unity

@dataclass(frozen=True)
class DyadicPartition:
    """Smooth radial cutoff rho with sum_j rho(2^-j u) = 1 for u > 0.

    rho is supported in [0.55, 1.9], equals 1 on [0.95, 1.1], and its two
    transition pieces are mirror images of each other, so the overlapping
    terms of the dyadic sum are evaluated as t and 1 - t of one smooth step.
    """

    flat: float = _THETA_FLAT
    zero: float = _THETA_ZERO

    def theta(self, u):
        return plateau(np.abs(u), self.flat, self.zero)

    def __call__(self, u):
        u = np.abs(np.asarray(u, float))
        w = self.zero - self.flat
        rising = smooth_step((2.0 * u - self.flat) / w)
        falling = smooth_step((self.zero - u) / w)
        return np.where(u <= 0.5 * self.zero, rising, falling)

    def term(self, j: int, u):
        """rho(2^-j u)."""
        return self(np.ldexp(np.asarray(u, float), -j))

    def active_levels(self, u: float) -> list:
        """Levels j with rho(2^-j u) != 0."""
        if u <= 0:
            return []
        lo = math.floor(math.log2(u / self.zero))
        return [j for j in range(lo, lo + 4) if float(self.term(j, u)) > 0.0]

    def sum(self, u, j_lo: int = -64, j_hi: int = 64):
        """sum_{j_lo <= j <= j_hi} rho(2^-j u)."""
        u = np.asarray(u, float)
        return sum(self.term(j, u) for j in range(j_lo, j_hi + 1))


def make_dyadic_partition() -> DyadicPartition:
    return DyadicPartition()


def localize(f: RadialProfile, k: int, partition: DyadicPartition | None = None) -> RadialProfile:
    """f times sum_{j=k-1}^{k+1} rho(2^-j |x|); equals f on 2^k <= |x| < 2^(k+1)."""
    part = partition or make_dyadic_partition()

    def weight(r):
        return sum(part.term(j, r) for j in (k - 1, k, k + 1))

    func = None
    if f.func is not None:
        def func(r, f0=f.func):
            r = np.asarray(r, float)
            return f0(r) * weight(r)
    return RadialProfile(f.n, f.r, np.asarray(f.values) * weight(f.r), func)


# ---------------------------------------------------------------------------
# envelopes

REGIMES = ("bounded", "power-decay", "log-origin", "no-bound")


@dataclass(frozen=True)
class Envelope:
    """Predicted pointwise bound for radial elements, up to a constant.

    ``exponent`` is exact; for "power-decay" the bound is |x|^exponent,
    "log-origin" means 1 - log2|x|, "bounded" a constant and "no-bound"
    that witnesses defeat every bound in the region.
    """

    regime: str
    exponent: Fraction | None
    region: str  # "far" (|x| >= 1) or "near" (|x| < 1)
    cite: str

    def __call__(self, r):
        r = np.asarray(r, float)
        if self.regime == "power-decay":
            return r ** float(self.exponent)
        if self.regime == "log-origin":
            return 1.0 - np.log2(r)
        if self.regime == "bounded":
            return np.ones_like(r)
        return np.full_like(r, np.inf)

    def to_dict(self) -> dict:
        e = None if self.exponent is None else str(self.exponent)
        return {"regime": self.regime, "exponent": e, "region": self.region, "cite": self.cite}


_KIND_TO_REGIME = {"bounded": "bounded", "decay": "power-decay", "power": "power-decay",
                   "log": "log-origin", "unbounded": "no-bound"}


def predicted_envelope(pp: ParameterPoint, region: str) -> Envelope:
    """Envelope for the far (|x| >= 1) or near (|x| < 1) region.

    Raises
    ------
    ClassifierRejection
        When no stated result covers the point in that region.
    """
    if region not in ("far", "near"):
        raise ValueError("region must be 'far' or 'near'")
    rep = classify(pp)
    d = rep.far if region == "far" else rep.near
    if d["kind"] == "unknown":
        if pp.space == "W":
            hyp = ("m = 1, or 1 < p and u <= n p" if region == "far"
                   else "n/u < m, or 1 < p, u <= n p and 1/p <= n/u")
        elif region == "far":
            hyp = "tau <= (n-1)/(np) with s > 1/p (or s = 1/p, q <= 1), or s + n(tau - 1/p) > 0"
        else:
            hyp = "s + n(tau - 1/p) > 0, or tau <= (n-1)/(np) with s > 1/p (or s = 1/p, q <= 1)"
        raise ClassifierRejection(hyp, d["cite"])
    regime = _KIND_TO_REGIME[d["kind"]]
    if regime == "power-decay":
        e = Fraction(d["exponent"])
    elif regime == "bounded":
        e = Fraction(0)
    else:
        e = None
    return Envelope(regime, e, region, d["cite"])


# ---------------------------------------------------------------------------
# witnesses

def default_psi0(t):
    """1 on [0, 1], 0 on [2, inf), with the exponential-transition step between."""
    return plateau(t, 1.0, 2.0)


def _check_psi0(psi0):
    t = np.linspace(0.0, 6.0, 1201)
    v = np.asarray(psi0(t), float)
    ok = (v.shape == t.shape and np.all(np.isfinite(v)) and v.min() >= -1e-14
          and v.max() <= 1 + 1e-14 and np.allclose(v[t <= 1.0], 1.0, atol=1e-14)
          and np.allclose(v[t >= 2.0], 0.0, atol=1e-14))
    if not ok:
        raise ValueError("invalid psi0: need 0 <= psi0 <= 1, psi0 = 1 on [0,1], 0 on [2,inf)")


def _witness_func(j, r, psi0):
    scale, peak = 2.0 ** j, 2.0 ** r

    def f(x):
        return psi0(np.abs(scale * np.asarray(x, float) - peak))
    return f


def witness_support(j: int, r: int) -> tuple:
    """Radii outside of which phi_{j,r} vanishes."""
    return max(0.0, 2.0 ** -j * (2.0 ** r - 2.0)), 2.0 ** -j * (2.0 ** r + 2.0)


def witness_phi_jr(j: int, r: int, psi0=None, n: int = 2, samples: int = 4097,
                   r_max: float | None = None) -> RadialProfile:
    """x -> psi0(|2^j |x| - 2^r|): value 1 at |x| = 2^(r-j).

    ``r_max`` extends the sampled range (the closed form is exact beyond it).
    """
    psi0 = psi0 or default_psi0
    _check_psi0(psi0)
    f = _witness_func(j, r, psi0)
    r_max = max(r_max or 0.0, 2.0 ** -j * (2.0 ** r + 4.0))
    return RadialProfile.from_function(n, f, r_max, samples)


def witness_phi_Nr(N: int, r: int, alpha, psi0=None, n: int = 2,
                   samples: int = 4097) -> RadialProfile:
    """sum_{j=1}^N alpha_j phi_{j, j+4+r}; all terms peak at |x| = 2^(r+4).

    ``alpha`` is a sequence (alpha[0] is alpha_1) or a callable j -> alpha_j.
    """
    psi0 = psi0 or default_psi0
    _check_psi0(psi0)
    coef = [float(alpha(j)) if callable(alpha) else float(alpha[j - 1]) for j in range(1, N + 1)]
    if any(c <= 0 for c in coef):
        raise ValueError("alpha must be positive")
    terms = [(c, _witness_func(j, j + 4 + r, psi0)) for j, c in zip(range(1, N + 1), coef)]

    def f(x):
        x = np.asarray(x, float)
        return sum(c * g(x) for c, g in terms)
    r_max = 2.0 ** (r + 4) + 4.0
    return RadialProfile.from_function(n, f, r_max, samples)


def witness_small_x(j: int, s, p, tau, n: int = 2, psi0=None,
                    samples: int = 4097) -> RadialProfile:
    """2^(-j n tau) 2^(-j(s - n/p)) phi_{j,0}, equal to |x|^(s - n/p + n tau) at |x| = 2^-j."""
    if s >= 1.0 / float(p):
        raise RegimeError(f"small-|x| witnesses need s < 1/p (got s={s}, p={p})")
    psi0 = psi0 or default_psi0
    _check_psi0(psi0)
    c = 2.0 ** (-j * (n * float(tau) + float(s) - n / float(p)))
    g = _witness_func(j, 0, psi0)

    def f(x):
        return c * g(x)
    return RadialProfile.from_function(n, f, 2.0 ** -j * 5.0, samples)


# ---------------------------------------------------------------------------
# empirical decay

@dataclass
class DecayFit:
    radii: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float
    residual: float  # rms of the log2 fit

    def to_dict(self) -> dict:
        return {"radii": [float(x) for x in self.radii], "values": [float(x) for x in self.values],
                "slope": self.slope, "intercept": self.intercept, "residual": self.residual}


def fit_slope(radii, values) -> DecayFit:
    """Least-squares slope of log2(values) against log2(radii)."""
    radii = np.asarray(radii, float)
    values = np.asarray(values, float)
    if radii.size < 2 or np.any(radii <= 0) or np.any(values <= 0):
        raise ValueError("slope fit needs >= 2 positive radii and positive values")
    x, y = np.log2(radii), np.log2(values)
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ np.array([slope, icpt]) - y) ** 2)))
    return DecayFit(radii, values, float(slope), float(icpt), res)


def window_sup(f: RadialProfile, rho: float, window: float = DECAY_WINDOW,
               samples: int = 257) -> float:
    """sup |f| over rho/window <= |x| <= rho*window, clipped to the profile range."""
    lo, hi = rho / window, min(rho * window, f.r_max)
    if lo > hi:
        raise ValueError(f"empty window around radius {rho}")
    t = np.linspace(lo, hi, samples)
    return float(np.max(np.abs(f(t))))


def measure_decay(f: RadialProfile, radii, window: float = DECAY_WINDOW) -> DecayFit:
    """Window sups of |f| at each radius and their log-log slope."""
    radii = np.asarray(radii, float)
    if radii.size < 4:
        raise ValueError("measure_decay needs at least 4 radii")
    vals = np.array([window_sup(f, r, window) for r in radii])
    return fit_slope(radii, vals)


# ---------------------------------------------------------------------------
# experiments

@dataclass
class DecayExperiment:
    """Normalized witness peaks 1/||phi_{0,r}|| at |x| = 2^r for each tau."""

    n: int
    s: float
    p: float
    q: float
    exponents: list
    rows: list = field(default_factory=list)  # dicts per tau

    def to_dict(self) -> dict:
        return {"n": self.n, "s": self.s, "p": self.p, "q": self.q,
                "radius_exponents": list(self.exponents), "curves": self.rows}


def decay_experiment(n: int = 2, s: float = 1.0, p: float = 2.0, q: float = 2.0,
                     taus=None, exponents=range(2, 7), R: float = 256.0, N: int = 1024,
                     pair: LPPair | None = None, j_max: int | None = None) -> DecayExperiment:
    """Fit the decay of normalized ring witnesses against the predicted exponent.

    The witness phi_{0,r} is a ring of unit width at radius 2^r, so its value
    at that radius over its Besov-type norm is a sample of the best constant
    in the pointwise bound.  The grid must hold the largest ring in the
    inner half of the domain.
    """
    if n != 2:
        raise ValueError("grid decay experiments run in two dimensions")
    p_r = Fraction(p).limit_denominator(1000)
    if taus is None:
        taus = [Fraction(0), Fraction(1, 8), Fraction(n - 1, n) / p_r]
    exponents = list(exponents)
    if 2.0 ** max(exponents) + 2.0 > R / 2:
        raise ValueError("largest witness does not fit in the inner half of the grid")
    sampled = []
    for r in exponents:
        prof = witness_phi_jr(0, r, n=n, r_max=R * math.sqrt(n) * 1.01)
        sampled.append(sample_radial(prof, R, N))
    exp = DecayExperiment(n, s, p, q, exponents)
    cubes = CubeFamily.for_grid(sampled[0])
    q_r = INF if math.isinf(q) else Fraction(q).limit_denominator(1000)
    for tau in taus:
        tau = Fraction(tau)
        pp = ParameterPoint(n, Fraction(s).limit_denominator(1000), tau, p_r, q_r)
        env = predicted_envelope(pp, "far")
        norms = [besov_type_norm(g, s, float(tau), p, q, pair, cubes, j_max).value for g in sampled]
        radii = [2.0 ** r for r in exponents]
        vals = [1.0 / v for v in norms]
        fit = fit_slope(radii, vals)
        exp.rows.append({
            "tau": str(tau), "predicted": None if env.exponent is None else str(env.exponent),
            "regime": env.regime, "slope": fit.slope, "residual": fit.residual,
            "radii": radii, "values": vals, "norms": norms,
        })
    return exp


@dataclass
class BlowupExperiment:
    s: float
    p: float
    q: float
    levels: list
    values: list
    norms: list
    slope: float
    predicted: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def blowup_experiment(s: float = 0.4, q: float = 2.0, n: int = 2, levels=range(4, 13),
                      pair: LPPair | None = None) -> BlowupExperiment:
    """Normalized value of phi_{j,j} at |x| = 1 as the ring narrows (p = 2).

    For s < 1/2 the norm of the witness shrinks like 2^(-j(1/2 - s)), so
    the normalized peak grows at that rate.
    """
    if s >= 0.5:
        raise RegimeError("blow-up witnesses need s < 1/p = 1/2")
    levels = list(levels)
    norms = []
    for j in levels:
        prof = witness_phi_jr(j, j, n=n)
        lo, hi = witness_support(j, j)
        norms.append(radial_besov_norm(prof, s, q, (lo, hi), 2.0 ** -j, pair).value)
    vals = [1.0 / v for v in norms]
    slope = float(np.polyfit(levels, np.log2(vals), 1)[0])
    return BlowupExperiment(s, 2.0, q, levels, vals, norms, slope, 0.5 - s)


def write_decay_csv(path, radii, values, predicted) -> None:
    """Rows (radius, value, predicted) with repr-exact floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["radius", "value", "predicted"])
        for r, v, e in zip(radii, values, predicted):
            w.writerow([repr(float(r)), repr(float(v)), repr(float(e))])


def read_decay_csv(path) -> tuple:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    a = np.array([[float(x) for x in row] for row in rows])
    return a[:, 0], a[:, 1], a[:, 2]
