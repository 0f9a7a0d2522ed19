"""Morrey, Sobolev-Morrey, Besov-type, Besov-Morrey and Besov norms on grids.

Sups over all balls or all dyadic cubes are replaced by finite families:

* balls centered at grid points (every ``stride``-th point per axis) with
  radii 2^m h, m = 0..m_max, the largest ball containing the whole grid;
* dyadic cubes anchored at the grid corner -R (R a power of two), from the
  cube that is the whole domain down to cubes of side 2^-j_fine >= h.

Integrals are midpoint sums h^n sum_{x in B} |f(x)|^p.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import ParameterOrderError
from .geometry import unit_ball_volume
from .lp import (GridFunction, LPPair, _Spectrum, check_support, default_j_max,
                 lp_blocks, max_admissible_level, _DEFAULT_PAIR)

TAIL_WARNING = 0.01
INF = math.inf


def _inv(x):
    return 0.0 if math.isinf(x) else 1.0 / x


@dataclass
class NormResult:
    """Computed norm with the family member attaining it.

    ``truncation`` holds ``{"j_max", "tail_fraction"}`` for norms built from
    frequency blocks; ``warning`` is set when the j_max term carries more
    than 1% of the value.
    """

    value: float
    witness: dict
    truncation: dict | None = None
    warning: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"value": self.value, "witness": self.witness}
        if self.truncation is not None:
            d["truncation"] = self.truncation
            d["warning"] = self.warning
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NormResult":
        d = json.loads(text)
        return cls(d["value"], d["witness"], d.get("truncation"), d.get("warning", False))


# ---------------------------------------------------------------------------
# families

@dataclass(frozen=True)
class BallFamily:
    """Balls B(x_c, 2^m h) with x_c on a strided sub-grid."""

    stride: int
    m_max: int
    m_min: int = 0

    @classmethod
    def default(cls, f: GridFunction, stride: int = 1) -> "BallFamily":
        # 2^m h >= sqrt(n) 2R makes the ball contain the grid from any center
        m = math.ceil(math.log2(math.sqrt(f.n) * f.N))
        return cls(stride, m)

    def radii(self, h: float) -> list:
        return [(m, h * 2.0 ** m) for m in range(self.m_min, self.m_max + 1)]


@dataclass(frozen=True)
class CubeFamily:
    """Dyadic cubes -R + 2^-jP ([0,1)^n + k) with j_coarse <= jP <= j_fine."""

    R: float
    j_coarse: int
    j_fine: int

    @classmethod
    def for_grid(cls, f: GridFunction, j_fine: int | None = None) -> "CubeFamily":
        a = math.log2(2 * f.R)
        if a != round(a):
            raise ValueError("cube families need R to be a power of two")
        top = int(round(math.log2(1.0 / f.h)))
        j_fine = top if j_fine is None else min(j_fine, top)
        return cls(f.R, -int(round(a)), j_fine)

    def levels(self):
        return range(self.j_coarse, self.j_fine + 1)

    def per_axis(self, jP: int) -> int:
        return max(1, int(round(2 * self.R * 2.0 ** jP)))

    def cube_lower(self, jP, index) -> np.ndarray:
        return -self.R + 2.0 ** (-jP) * np.asarray(index, float)


def _check_order(p, u):
    if not (p > 0 and u > 0):
        raise ParameterOrderError("exponents must be positive")
    if p > u:
        raise ParameterOrderError(f"need p <= u, got p={p}, u={u}")


def _footprint(n, r, h, N):
    K = min(int(math.floor(r / h + 1e-9)), N - 1)
    ax = np.arange(-K, K + 1) * h
    d2 = np.zeros((2 * K + 1,) * n)
    for d in range(n):
        shape = [1] * n
        shape[d] = 2 * K + 1
        d2 = d2 + (ax ** 2).reshape(shape)
    return (d2 <= r * r * (1 + 1e-12)).astype(float), K


def ball_sums(a: np.ndarray, r: float, h: float, stride: int = 1) -> np.ndarray:
    """sum of a over the closed ball of radius r about every (strided) grid point."""
    n, N = a.ndim, a.shape[0]
    fp, K = _footprint(n, r, h, N)
    sl = (slice(None, None, stride),) * n
    if K >= N - 1 and fp.all():
        return np.full(a[sl].shape, a.sum())
    s = fftconvolve(a, fp, mode="same")
    return np.maximum(s, 0.0)[sl]


def morrey_ball_values(f: GridFunction, p: float, u: float, fam: BallFamily):
    """Per-radius arrays of |B|^(1/u - 1/p) (int_B |f|^p)^(1/p) and ball point counts."""
    _check_order(p, u)
    a = np.abs(f.samples) ** p
    ones = np.ones(a.shape)
    out = []
    for m, r in fam.radii(f.h):
        vol = unit_ball_volume(f.n) * r ** f.n
        S = ball_sums(a, r, f.h, fam.stride)
        cnt = np.rint(ball_sums(ones, r, f.h, fam.stride))
        val = vol ** (_inv(u) - 1.0 / p) * (f.h ** f.n * S) ** (1.0 / p)
        out.append((m, r, val, cnt))
    return out


def _center(f, idx, stride):
    return [float(-f.R + f.h * stride * i) for i in idx]


def morrey_norm(f: GridFunction, p: float, u: float,
                fam: BallFamily | None = None) -> NormResult:
    """sup over the ball family of |B|^(1/u-1/p) (int_B |f|^p)^(1/p).

    For p = u = inf this is the largest |f| at a grid point covered by a
    family ball; the witness is the smallest such ball.
    """
    _check_order(p, u)
    fam = fam or BallFamily.default(f)
    if math.isinf(p):
        a = np.abs(f.samples)
        i = np.unravel_index(int(np.argmax(a)), a.shape)
        top = (f.N - 1) // fam.stride
        ci = [min(int(round(k / fam.stride)), top) for k in i]
        dist = math.sqrt(sum((k - c * fam.stride) ** 2 for k, c in zip(i, ci))) * f.h
        m, r = next((m, r) for m, r in fam.radii(f.h) if r >= dist)
        return NormResult(float(a[i]), {"kind": "ball", "center": _center(f, ci, fam.stride),
                                        "radius": r, "m": m})
    best, wit = -1.0, None
    for m, r, val, _ in morrey_ball_values(f, p, u, fam):
        i = int(np.argmax(val))
        if val.flat[i] > best:
            best = float(val.flat[i])
            idx = np.unravel_index(i, val.shape)
            wit = {"kind": "ball", "center": _center(f, idx, fam.stride), "radius": r, "m": m}
    return NormResult(best, wit)


def central_difference(f: GridFunction, alpha) -> GridFunction:
    """D^alpha f by repeated second-order central differences."""
    a = f.samples
    for axis, order in enumerate(alpha):
        for _ in range(order):
            a = (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2 * f.h)
    return f.with_samples(a)


def multi_indices(n: int, m: int):
    return [a for a in itertools.product(range(m + 1), repeat=n) if sum(a) <= m]


def sobolev_morrey_norm(f: GridFunction, m: int, p: float, u: float,
                        fam: BallFamily | None = None) -> NormResult:
    """sum_{|alpha| <= m} Morrey norm of D^alpha f."""
    _check_order(p, u)
    if p < 1:
        raise ParameterOrderError("Sobolev-Morrey norms need p >= 1")
    fam = fam or BallFamily.default(f)
    total, parts = 0.0, {}
    for alpha in sorted(multi_indices(f.n, m), key=lambda a: (sum(a), a)):
        r = morrey_norm(central_difference(f, alpha), p, u, fam)
        parts["".join(map(str, alpha))] = r.value
        total += r.value
    return NormResult(total, {"kind": "multi-index-sum", "terms": parts})


# ---------------------------------------------------------------------------
# block-based norms

def _block_levels(f, j_max):
    if j_max is None:
        j_max = default_j_max(f.h)
    return j_max


def _tail(terms, q):
    """Share of the last term in an l^q combination (terms are 2^js ||.|| values)."""
    terms = np.asarray(terms, float)
    if terms.size == 0 or terms.max() == 0:
        return 0.0
    if math.isinf(q):
        return float(terms[-1] / terms.max())
    w = terms ** q
    return float(w[-1] / w.sum())


def _combine(terms, q):
    terms = np.asarray(terms, float)
    if math.isinf(q):
        return float(terms.max()) if terms.size else 0.0
    return float(np.sum(terms ** q) ** (1.0 / q))


def besov_norm(f: GridFunction, s: float, p: float, q: float,
               pair: LPPair | None = None, j_max: int | None = None) -> NormResult:
    """Classical Besov norm (sum_j 2^(jsq) ||phi_j * f||_p^q)^(1/q) on the whole grid."""
    j_max = _block_levels(f, j_max)
    blocks = lp_blocks(f, range(j_max + 1), pair)
    terms = [2.0 ** (j * s) * b.lp_norm(p) for j, b in enumerate(blocks)]
    tail = _tail(terms, q)
    return NormResult(_combine(terms, q), {"kind": "domain"},
                      {"j_max": j_max, "tail_fraction": tail}, tail > TAIL_WARNING)


def _cube_reduce(a: np.ndarray, b: int, op) -> np.ndarray:
    """Reduce a over consecutive blocks of b points per axis."""
    n, N = a.ndim, a.shape[0]
    nc = N // b
    shape = []
    for _ in range(n):
        shape += [nc, b]
    return op(a.reshape(shape), axis=tuple(range(1, 2 * n, 2)))


def besov_type_norm(f: GridFunction, s: float, tau: float, p: float, q: float,
                    pair: LPPair | None = None, cubes: CubeFamily | None = None,
                    j_max: int | None = None) -> NormResult:
    """sup_P |P|^-tau (sum_{j >= max(jP, 0)} 2^(jsq) (int_P |phi_j * f|^p)^(q/p))^(1/q).

    Cubes coarser than the whole domain are omitted: f vanishes outside the
    domain, so they carry the same integrals with a smaller weight when
    tau >= 0.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    j_max = _block_levels(f, j_max)
    cubes = cubes or CubeFamily.for_grid(f)
    blocks = lp_blocks(f, range(j_max + 1), pair)
    if math.isinf(p):
        mags = [np.abs(b.samples) for b in blocks]
    else:
        mags = [np.abs(b.samples) ** p for b in blocks]
    hn = f.h ** f.n
    best, wit, tail_at = -1.0, None, 0.0
    for jP in cubes.levels():
        nc = cubes.per_axis(jP)
        b = f.N // nc
        if b < 1 or nc * b != f.N:
            raise ValueError(f"cube level {jP} does not align with the grid")
        terms = []
        for j in range(max(jP, 0), j_max + 1):
            if math.isinf(p):
                I = _cube_reduce(mags[j], b, np.max)
            else:
                I = (hn * _cube_reduce(mags[j], b, np.sum)) ** (1.0 / p)
            terms.append(2.0 ** (j * s) * I)
        if not terms:
            continue
        T = np.stack(terms)
        if math.isinf(q):
            acc = T.max(axis=0)
        else:
            acc = np.sum(T ** q, axis=0) ** (1.0 / q)
        vals = 2.0 ** (jP * f.n * tau) * acc
        i = int(np.argmax(vals))
        if vals.flat[i] > best:
            best = float(vals.flat[i])
            idx = np.unravel_index(i, vals.shape)
            wit = {"kind": "cube", "level": jP, "index": [int(k) for k in idx],
                   "lower": [float(x) for x in cubes.cube_lower(jP, idx)]}
            tail_at = _tail(T[(slice(None),) + idx], q) if max(jP, 0) <= j_max else 0.0
    return NormResult(max(best, 0.0), wit, {"j_max": j_max, "tail_fraction": tail_at},
                      tail_at > TAIL_WARNING)


def besov_morrey_norm(f: GridFunction, s: float, u: float, p: float, q: float,
                      pair: LPPair | None = None, fam: BallFamily | None = None,
                      j_max: int | None = None) -> NormResult:
    """(sum_j 2^(jsq) ||phi_j * f||_{M^u_p}^q)^(1/q)."""
    _check_order(p, u)
    j_max = _block_levels(f, j_max)
    fam = fam or BallFamily.default(f)
    blocks = lp_blocks(f, range(j_max + 1), pair)
    terms, wits = [], []
    for j, b in enumerate(blocks):
        r = morrey_norm(b, p, u, fam)
        terms.append(2.0 ** (j * s) * r.value)
        wits.append(r.witness)
    jbest = int(np.argmax(terms))
    tail = _tail(terms, q)
    return NormResult(_combine(terms, q), {"kind": "block-sum", "level": jbest, "ball": wits[jbest]},
                      {"j_max": j_max, "tail_fraction": tail}, tail > TAIL_WARNING)


# ---------------------------------------------------------------------------
# radial inputs, p = 2

def _sphere_area(n: int) -> float:
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def radial_projection(profile, x: np.ndarray, r_lo: float, r_hi: float,
                      nodes: int) -> np.ndarray:
    """Integral of x' -> g(|x'|) over the hyperplane {x'_1 = x}.

    With r = |x| + v^2 the integral becomes
    |S^{n-2}| int 2 g(r) r v^{n-2} (2|x| + v^2)^{(n-3)/2} dv,
    whose integrand is smooth, and is evaluated by Gauss-Legendre.
    """
    n = profile.n
    ax = np.abs(np.asarray(x, float))
    t, w = np.polynomial.legendre.leggauss(nodes)
    out = np.zeros(ax.shape)
    inside = ax < r_hi
    ai = ax[inside]
    v0 = np.sqrt(np.maximum(r_lo - ai, 0.0))
    v1 = np.sqrt(r_hi - ai)
    half = 0.5 * (v1 - v0)
    v = (v0 + half)[:, None] + half[:, None] * t[None, :]
    r = ai[:, None] + v * v
    integrand = 2.0 * profile(r) * r * v ** (n - 2) * (2 * ai[:, None] + v * v) ** ((n - 3) / 2)
    out[inside] = (integrand @ w) * half
    area = 2.0 if n == 2 else _sphere_area(n - 1)
    return area * out


def radial_besov_norm(profile, s: float, q: float, support: tuple, feature: float,
                      pair: LPPair | None = None, j_max: int | None = None,
                      chunk: int = 1 << 15) -> NormResult:
    """B^s_{2,q} norm of a compactly supported radial function.

    Uses the projection-slice identity: the Fourier transform of a radial
    function along a ray equals the 1-D transform of its hyperplane
    projection.  Each block norm is then a 1-D radial integral of
    |phi_hat(2^-j rho)|^2 |f_hat(rho)|^2 rho^(n-1).

    Parameters
    ----------
    support : (r_lo, r_hi)
        The profile vanishes outside r_lo <= r <= r_hi.
    feature : float
        Smallest length scale of the profile; sets the sample spacing and
        the default number of blocks (6 octaves beyond 1/feature).
    """
    pair = pair or _DEFAULT_PAIR
    n = profile.n
    r_lo, r_hi = support
    if j_max is None:
        j_max = max(0, int(math.ceil(math.log2(1.0 / feature))) + 6)
    # Nyquist pi/delta at twice the top band edge 2^(j_max+1)
    delta = min(feature / 8.0, math.pi / 2.0 ** (j_max + 2))
    half = int(math.ceil(r_hi / delta)) + 1
    x = np.arange(-half, half + 1) * delta
    nodes = int(16 * math.ceil((r_hi - r_lo) / feature) + 48)
    P = np.empty(x.shape)
    for a in range(0, x.size, chunk):
        P[a:a + chunk] = radial_projection(profile, x[a:a + chunk], r_lo, r_hi, nodes)
    M = 1 << int(math.ceil(math.log2(8 * x.size)))
    F = np.fft.rfft(P, n=M) * delta
    rho = 2 * math.pi * np.arange(F.size) / (M * delta)
    dr = rho[1]
    dens = np.abs(F) ** 2 * rho ** (n - 1) * _sphere_area(n) / (2 * math.pi) ** n
    terms = []
    for j in range(j_max + 1):
        m = pair.block_multiplier(rho, j)
        terms.append(2.0 ** (j * s) * math.sqrt(max(float(np.sum(m * m * dens) * dr), 0.0)))
    tail = _tail(terms, q)
    return NormResult(_combine(terms, q), {"kind": "domain"},
                      {"j_max": j_max, "tail_fraction": tail}, tail > TAIL_WARNING,
                      extra={"block_terms": terms})
