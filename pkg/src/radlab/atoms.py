"""Atoms on the radial covering: validity checks, coefficients, atoms, sequence norms.

Coefficients follow the sup-over-cell formula

    t_{0,l} = D sup_{y in cell} |Phi~ * f(y)|,
    t_{j,l} = E 2^{j(s - n/p)} sup_{y in cell} |phi~_j * f(y)|,

and atoms are a_{j,l} = t_{j,l}^{-1} psi_j * (phi~_j * f restricted to the
disjointified cell).  Summing t_{j,l} a_{j,l} over l gives psi_j * phi~_j * f,
so reconstruction reduces to the Calderon identity.

Cells are stored level by level in a flat array ordered by (ring k, index
within ring); the public index l within a ring is 1-based, l = 1 being the
ball whose center lies on the positive x1 axis.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy import special

from .errors import IndexMismatch, InsufficientRange, SymmetryViolation
from .geometry import RadialCovering, ball_meets_box, covering_constants, unit_ball_volume
from .lp import (GridFunction, LPPair, _DEFAULT_PAIR, _Spectrum, _freq_radius,
                 check_support, max_admissible_level)
from .norms import CubeFamily, NormResult, central_difference, multi_indices

COEFF_FORMAT_VERSION = 1
SYMMETRY_TOL = 1e-6
SUPPORT_TOL = 1e-10
DUALITY_RANDOM_TESTS = 20
# dense radius samples per 2^-j in the radial coefficient path
RADIAL_SAMPLES = 64


# ---------------------------------------------------------------------------
# parameters

@dataclass(frozen=True)
class AtomParams:
    """Smoothness s, integrability p, derivative order L, moment order M.

    ``r`` is the diameter of the cell an atom is attached to; it is filled
    in per level by :meth:`with_diameter`.
    """

    s: float
    p: float
    L: int
    M: int
    r: float | None = None

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError("p must be positive")
        if int(self.L) != self.L or self.L < 0:
            raise ValueError("L must be an integer >= 0")
        if int(self.M) != self.M or self.M < -1:
            raise ValueError("M must be an integer >= -1")
        if self.r is not None and not self.r > 0:
            raise ValueError("cell diameter must be positive")

    @property
    def p_conj(self) -> float:
        if self.p <= 1:
            return math.inf
        if math.isinf(self.p):
            return 1.0
        return float(self.p) / (float(self.p) - 1.0)

    @staticmethod
    def sigma_p(n: int, p: float) -> float:
        return n * max(0.0, 1.0 / float(p) - 1.0)

    @staticmethod
    def minimal_orders(n: int, s, p, tau=0) -> tuple:
        """Smallest (L, M) allowed for decomposing a Besov-type space."""
        L = max(math.floor(s + n * tau) + 1, 0)
        sig = n * max(0, 1 / p - 1) if not math.isinf(p) else 0
        M = max(math.floor(sig - s), -1)
        return int(L), int(M)

    @classmethod
    def for_decomposition(cls, n: int, s, p, tau=0) -> "AtomParams":
        L, M = cls.minimal_orders(n, s, p, tau)
        return cls(s, p, L, M)

    def admissible(self, n: int, tau=0) -> bool:
        L, M = self.minimal_orders(n, self.s, self.p, tau)
        return self.L >= L and self.M >= M

    def with_diameter(self, r: float) -> "AtomParams":
        return AtomParams(self.s, self.p, self.L, self.M, r)

    def n_over_p(self, n: int) -> float:
        return 0.0 if math.isinf(self.p) else n / float(self.p)


# ---------------------------------------------------------------------------
# atom checks

@dataclass
class AtomReport:
    """Outcome of an atom check.

    Every condition holds ``measured``, ``bound`` and ``ratio`` =
    measured / bound.  ``margin`` is 1 - the largest ratio among the
    derivative and duality conditions (1 for the zero function), and
    ``constant`` is that largest ratio: ``a / constant`` passes them.
    ``support_leak`` is max |a| outside the allowed support relative to
    max |a|.
    """

    passed: bool
    conditions: dict
    margin: float
    constant: float
    support_leak: float

    def to_dict(self) -> dict:
        return {"pass": self.passed, "margin": self.margin, "constant": self.constant,
                "support_leak": self.support_leak, "conditions": self.conditions}


def _dist_from(a: GridFunction, center) -> np.ndarray:
    ax = a.axis()
    d2 = np.zeros((a.N,) * a.n)
    for d in range(a.n):
        shape = [1] * a.n
        shape[d] = a.N
        d2 = d2 + ((ax - center[d]) ** 2).reshape(shape)
    return np.sqrt(d2)


def _support_condition(a: GridFunction, Q, tol):
    # (r/2)Q = {x : dist(x, Q) < r/2} with r = diam Q
    reach = 2.0 * Q.radius
    mag = np.abs(a.samples)
    top = float(mag.max()) if mag.size else 0.0
    outside = _dist_from(a, Q.center) >= reach
    leak = float(mag[outside].max()) / top if top > 0 and outside.any() else 0.0
    return {"measured": leak, "bound": tol, "ratio": leak / tol, "pass": leak <= tol,
            "radius": reach}, leak


def _derivative_conditions(a: GridFunction, L: int, bound_fn) -> dict:
    out = {}
    for alpha in sorted(multi_indices(a.n, L), key=lambda al: (sum(al), al)):
        sup = float(np.abs(central_difference(a, alpha).samples).max())
        b = bound_fn(sum(alpha))
        out["d" + "".join(map(str, alpha))] = {
            "measured": sup, "bound": b, "ratio": sup / b, "pass": sup <= b}
    return out


def _finish(conds: dict, leak: float) -> AtomReport:
    scal = [c["ratio"] for name, c in conds.items() if name != "support"]
    worst = max(scal) if scal else 0.0
    passed = all(c["pass"] for c in conds.values())
    return AtomReport(passed, conds, 1.0 - worst, worst, leak)


def check_1L_atom(a: GridFunction, Q, L: int, support_tol: float = SUPPORT_TOL) -> AtomReport:
    """Check a 1_L-atom attached to the ball Q.

    Conditions: a vanishes off {dist(x, Q) < diam Q / 2} (relative leak at
    most ``support_tol``) and sup |D^alpha a| <= 1 for |alpha| <= L, with
    derivatives by central differences.
    """
    conds = {}
    conds["support"], leak = _support_condition(a, Q, support_tol)
    conds.update(_derivative_conditions(a, L, lambda m: 1.0))
    return _finish(conds, leak)


class _TestFunction:
    """Polynomial (x - c)^gamma or a short random cosine sum, with exact derivatives."""

    def __init__(self, kind, center, gamma=None, waves=None):
        self.kind = kind
        self.center = np.asarray(center, float)
        self.gamma = gamma
        self.waves = waves

    def derivative(self, pts: np.ndarray, beta) -> np.ndarray:
        y = pts - self.center
        if self.kind == "monomial":
            out = np.ones(pts.shape[0])
            for d, (g, b) in enumerate(zip(self.gamma, beta)):
                if b > g:
                    return np.zeros(pts.shape[0])
                out = out * (math.factorial(g) / math.factorial(g - b)) * y[:, d] ** (g - b)
            return out
        out = np.zeros(pts.shape[0])
        order = sum(beta)
        for c, w, ph in self.waves:
            fac = float(np.prod(w ** np.asarray(beta)))
            out = out + c * fac * np.cos(y @ w + ph + order * math.pi / 2)
        return out

    def describe(self) -> str:
        if self.kind == "monomial":
            return "x^" + "".join(map(str, self.gamma))
        return "cos-sum"


def duality_test_family(n: int, center, r: float, M: int, seed: int = 0) -> list:
    """All monomials of degree <= M + 1 about the center, plus random cosine sums."""
    fam = [_TestFunction("monomial", center, gamma=g)
           for g in sorted(multi_indices(n, M + 1), key=lambda g: (sum(g), g))]
    rng = np.random.default_rng(seed)
    for _ in range(DUALITY_RANDOM_TESTS):
        waves = []
        for _ in range(3):
            u = rng.normal(size=n)
            u /= np.linalg.norm(u)
            waves.append((float(rng.normal()), u * rng.uniform(0.0, 2 * math.pi / r),
                          float(rng.uniform(0, 2 * math.pi))))
        fam.append(_TestFunction("cosine", center, waves=waves))
    return fam


def check_spLM_atom(a: GridFunction, Q, params: AtomParams,
                    support_tol: float = SUPPORT_TOL, seed: int = 0) -> AtomReport:
    """Check an (s, p)_{L,M}-atom attached to the ball Q.

    With r = diam Q: support in {dist(x, Q) < r/2}; sup |D^alpha a| <=
    r^(s - |alpha| - n/p) for |alpha| <= L; and for M >= 0,
    |int a phi| <= r^(s + M + 1 + n/p') ||phi||_{C^(M+1)} over the test
    family, the C^(M+1) norm taken on grid points within distance r of Q.
    """
    n = a.n
    r = 2.0 * Q.radius
    np_ = params.n_over_p(n)
    s = float(params.s)
    conds = {}
    conds["support"], leak = _support_condition(a, Q, support_tol)
    conds.update(_derivative_conditions(a, params.L, lambda m: r ** (s - m - np_)))
    if params.M >= 0:
        pc = params.p_conj
        npc = 0.0 if math.isinf(pc) else n / pc
        bound_scale = r ** (s + params.M + 1 + npc)
        dist = _dist_from(a, Q.center)
        near = dist <= Q.radius + r
        grids = np.meshgrid(*([a.axis()] * n), indexing="ij")
        pts_all = np.stack([g.ravel() for g in grids], axis=1)
        pts_near = pts_all[near.ravel()]
        hn = a.h ** n
        flat = a.samples.ravel()
        betas = multi_indices(n, params.M + 1)
        worst, rows = 0.0, []
        for phi in duality_test_family(n, Q.center, r, params.M, seed):
            integral = abs(hn * np.sum(flat * phi.derivative(pts_all, (0,) * n)))
            cnorm = max(float(np.abs(phi.derivative(pts_near, b)).max()) for b in betas)
            b = bound_scale * cnorm
            ratio = integral / b if b > 0 else (0.0 if integral == 0 else math.inf)
            rows.append({"test": phi.describe(), "measured": integral, "bound": b,
                         "ratio": ratio})
            worst = max(worst, ratio)
        conds["duality"] = {"measured": max(x["measured"] for x in rows),
                            "bound": min(x["bound"] for x in rows),
                            "ratio": worst, "pass": worst <= 1.0, "tests": rows}
    return _finish(conds, leak)


# ---------------------------------------------------------------------------
# constants

def _kernel_grid(n: int) -> tuple:
    if n == 2:
        return 16.0, 512
    if n == 3:
        return 8.0, 128
    return 8.0, max(16, 1 << int(math.floor(math.log2(2 ** (21 / n)))))


@lru_cache(maxsize=None)
def kernel_sup_norms(n: int, L: int) -> dict:
    """max_{|alpha| <= L} sup |D^alpha Psi| and the same for psi, measured on a grid.

    The kernels are sampled by inverse FFT of their multipliers and
    differentiated by central differences.
    """
    R, N = _kernel_grid(n)
    h = 2 * R / N
    rho = _freq_radius(n, N, h, False)
    # grid starts at -R: shift by (-1)^(k_1 + ... + k_n)
    sign = np.ones((N,) * n)
    alt = (-1.0) ** np.arange(N)
    for d in range(n):
        shape = [1] * n
        shape[d] = N
        sign = sign * alt.reshape(shape)
    out = {}
    pair = _DEFAULT_PAIR
    for name, mult in (("Psi", pair.Psi_hat(rho)), ("psi", pair.psi_hat(rho))):
        vals = np.real(sfft.ifftn(mult * sign)) / h ** n
        g = GridFunction(n, R, N, vals)
        out[name] = max(float(np.abs(central_difference(g, al).samples).max())
                        for al in multi_indices(n, L))
    return out


def decomposition_constants(n: int, params: AtomParams, cov: RadialCovering | None = None) -> dict:
    """The constants D(n, M) and E(n, M) of the coefficient formula.

    A_n and B_n come from the covering's measured constants (A = 6, B = 12
    for the radial covering).
    """
    consts = covering_constants(cov) if cov is not None else {"A": 6.0, "B": 12.0}
    A, B = consts["A"], consts["B"]
    w = unit_ball_volume(n)
    k = kernel_sup_norms(n, params.L)
    D = B ** n * w * k["Psi"]
    e0 = -float(params.s) + params.n_over_p(n)
    scale = max(max(A ** (e0 + m), B ** (e0 + m)) for m in range(params.L + 1))
    m1 = params.M + 1
    # sum over |gamma| = m1 of 1/gamma! equals n^m1 / m1!
    moment = max(1.0, w * 1.5 ** (params.M + n + 1) * n ** m1 / math.factorial(m1))
    E = B ** n * w * k["psi"] * scale * moment
    return {"D": D, "E": E, "A": A, "B": B, "kernel_norms": k}


# ---------------------------------------------------------------------------
# coefficients

@dataclass(frozen=True, eq=False)
class AtomCoefficients:
    """Coefficients per level.

    ``form == "general"``: ``values[j]`` has one entry per cell in the flat
    (k, l) order of the covering.  ``form == "radial"``: ``values[j]`` has
    one entry per ring, shared by all cells of the ring.
    """

    n: int
    form: str
    ring_sizes: tuple
    values: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.form not in ("general", "radial"):
            raise ValueError(f"unknown coefficient form {self.form!r}")
        want = len(self.ring_sizes) if self.form == "radial" else int(sum(self.ring_sizes))
        vals = {}
        for j, v in self.values.items():
            v = np.asarray(v)
            if v.shape != (want,):
                raise IndexMismatch(f"level {j}: expected {want} coefficients, got {v.shape}")
            v.setflags(write=False)
            vals[int(j)] = v
        object.__setattr__(self, "values", dict(sorted(vals.items())))

    @property
    def levels(self) -> list:
        return list(self.values)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.ring_sizes)]).astype(np.int64)

    def ring_of_cell(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.ring_sizes)), self.ring_sizes)

    def general(self, j: int) -> np.ndarray:
        v = self.values[j]
        return v if self.form == "general" else v[self.ring_of_cell()]

    def expanded(self) -> "AtomCoefficients":
        """General form; a radial set is repeated over the cells of each ring."""
        if self.form == "general":
            return self
        return AtomCoefficients(self.n, "general", self.ring_sizes,
                                {j: self.general(j) for j in self.levels}, dict(self.meta))

    def get(self, j: int, k: int, l: int | None = None):
        """t_{j,k,l} with 1-based l (ignored for the radial form)."""
        if self.form == "radial":
            return self.values[j][k]
        if not 1 <= l <= self.ring_sizes[k]:
            raise IndexMismatch(f"ring {k} has {self.ring_sizes[k]} cells, got l={l}")
        return self.values[j][self.offsets[k] + l - 1]

    def scaled(self, c) -> "AtomCoefficients":
        return AtomCoefficients(self.n, self.form, self.ring_sizes,
                                {j: c * v for j, v in self.values.items()}, dict(self.meta))

    def max_abs(self) -> float:
        return max((float(np.abs(v).max()) for v in self.values.values() if v.size),
                   default=0.0)

    def check_against(self, cov: RadialCovering) -> None:
        sizes = tuple(int(x) for x in cov.ring_sizes())
        if self.n != cov.n or tuple(self.ring_sizes) != sizes:
            raise IndexMismatch("coefficients are not indexed by this covering")
        bad = [j for j in self.levels if j > cov.j_max]
        if bad:
            raise IndexMismatch(f"levels {bad} exceed the covering's j_max={cov.j_max}")

    # -- serialization -----------------------------------------------------

    def rows(self):
        """(j, k, l, re, im) for every nonzero coefficient; l = 0 marks a whole ring."""
        off = self.offsets
        ring = self.ring_of_cell() if self.form == "general" else None
        for j, v in self.values.items():
            for i in np.flatnonzero(v):
                z = complex(v[i])
                if self.form == "radial":
                    yield j, int(i), 0, z.real, z.imag
                else:
                    k = int(ring[i])
                    yield j, k, int(i - off[k]) + 1, z.real, z.imag

    def _header(self) -> dict:
        return {"format": "radlab-coefficients", "version": COEFF_FORMAT_VERSION,
                "n": self.n, "form": self.form, "ring_sizes": [int(x) for x in self.ring_sizes],
                "levels": self.levels}

    def to_json(self) -> str:
        doc = self._header()
        doc["meta"] = self.meta
        doc["rows"] = [[j, k, l, re, im] for j, k, l, re, im in self.rows()]
        return json.dumps(doc)

    def to_csv(self) -> str:
        h = self._header()
        buf = io.StringIO()
        buf.write("# " + json.dumps(h, separators=(",", ":")) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "k", "l", "re", "im"])
        for j, k, l, re, im in self.rows():
            w.writerow([j, k, l, repr(re), repr(im)])
        return buf.getvalue()

    @classmethod
    def _from_rows(cls, head: dict, rows, meta=None) -> "AtomCoefficients":
        if head.get("format") != "radlab-coefficients":
            raise ValueError("not a coefficient document")
        if head.get("version") != COEFF_FORMAT_VERSION:
            raise ValueError(f"unsupported coefficient version {head.get('version')}")
        sizes = tuple(int(x) for x in head["ring_sizes"])
        form = head["form"]
        width = len(sizes) if form == "radial" else sum(sizes)
        off = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        rows = list(rows)
        cplx = any(float(r[4]) != 0.0 for r in rows)
        vals = {int(j): np.zeros(width, complex if cplx else float) for j in head["levels"]}
        for j, k, l, re, im in rows:
            j, k, l = int(j), int(k), int(l)
            z = complex(float(re), float(im)) if cplx else float(re)
            if j not in vals:
                raise IndexMismatch(f"row at level {j} not declared in header")
            if form == "radial":
                vals[j][k] = z
            else:
                if not 1 <= l <= sizes[k]:
                    raise IndexMismatch(f"ring {k} has {sizes[k]} cells, got l={l}")
                vals[j][off[k] + l - 1] = z
        return cls(int(head["n"]), form, sizes, vals, meta or {})

    @classmethod
    def from_json(cls, text: str) -> "AtomCoefficients":
        doc = json.loads(text)
        return cls._from_rows(doc, doc["rows"], doc.get("meta", {}))

    @classmethod
    def from_csv(cls, text: str) -> "AtomCoefficients":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# "):
            raise ValueError("missing coefficient header line")
        head = json.loads(lines[0][2:])
        reader = csv.reader(lines[1:])
        if next(reader) != ["j", "k", "l", "re", "im"]:
            raise ValueError("unexpected CSV columns")
        return cls._from_rows(head, reader)


def ring_spread(t: AtomCoefficients) -> float:
    """max over (j, k, l) of |t_{j,k,l} - t_{j,k,1}| relative to max |t|."""
    if t.form == "radial":
        return 0.0
    top = t.max_abs()
    if top == 0.0:
        return 0.0
    off = t.offsets
    worst = 0.0
    for v in t.values.values():
        first = np.repeat(v[off[:-1]], t.ring_sizes)
        worst = max(worst, float(np.abs(v - first).max()))
    return worst / top


# ---------------------------------------------------------------------------
# cells on the grid

def _level_scale(j: int, params: AtomParams, n: int, consts: dict) -> float:
    if j == 0:
        return consts["D"]
    return consts["E"] * 2.0 ** (j * (float(params.s) - params.n_over_p(n)))


def _extraction_levels(f: GridFunction, cov: RadialCovering, levels) -> list:
    top = min(cov.j_max, max_admissible_level(f.h))
    if levels is None:
        return list(range(top + 1))
    levels = sorted(set(int(j) for j in levels))
    if levels and (levels[0] < 0 or levels[-1] > top):
        raise IndexMismatch(f"levels must lie in 0..{top}")
    return levels


def _check_reach(f: GridFunction, cov: RadialCovering, j: int) -> None:
    # ring k_max + 1 must already miss the grid's corner radius
    corner = f.R * math.sqrt(f.n)
    if (cov.k_max + 1.5) * 2.0 ** (-j) - cov.radius(j) <= corner:
        raise InsufficientRange(
            f"covering rings up to k_max={cov.k_max} do not reach the grid corner at level {j}")


def _cell_scan(f: GridFunction, cov: RadialCovering, j: int, values: np.ndarray):
    """Per-cell sup of |values| over grid points in the closed ball, and the owner map.

    The owner of a grid point is the first cell in (k, l) order whose ball
    contains it, which realizes the greedy disjointification.
    """
    n, N, R, h = f.n, f.N, f.R, f.h
    ax = f.axis()
    rb = cov.radius(j)
    centers = cov.all_centers(j)
    mag = np.abs(values)
    sup = np.zeros(centers.shape[0])
    count = np.zeros(centers.shape[0], np.int64)
    owner = np.full((N,) * n, -1, np.int64)
    top = ax[-1]
    for cid, c in enumerate(centers):
        lo = np.maximum(np.ceil((c - rb + R) / h - 1e-9).astype(int), 0)
        hi = np.minimum(np.floor((c + rb + R) / h + 1e-9).astype(int), N - 1)
        if np.any(lo > hi):
            continue
        sl = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
        d2 = np.zeros(tuple(int(b - a + 1) for a, b in zip(lo, hi)))
        for d in range(n):
            shape = [1] * n
            shape[d] = -1
            d2 = d2 + ((ax[lo[d]:hi[d] + 1] - c[d]) ** 2).reshape(shape)
        m = d2 <= rb * rb * (1 + 1e-12)
        if not m.any():
            if np.all(c >= -R) and np.all(c <= top):
                raise InsufficientRange(f"cell {cid} at level {j} contains no grid point")
            continue
        sup[cid] = float(mag[sl][m].max())
        count[cid] = int(m.sum())
        own = owner[sl]
        free = m & (own < 0)
        own[free] = cid
    if np.any(owner < 0):
        raise InsufficientRange(f"level {j} cells do not cover every grid point")
    return sup, count, owner


# ---------------------------------------------------------------------------
# radial blocks in free space

def _line_coefficients(f: GridFunction) -> np.ndarray:
    """DFT of f along the positive x1 axis through the origin."""
    idx = (slice(None),) + (f.N // 2,) * (f.n - 1)
    return np.fft.fft(f.samples[idx])


def _line_eval(coef: np.ndarray, R: float, x: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Trigonometric interpolation of the axis line at arbitrary x in [-R, R]."""
    N = coef.size
    k = np.fft.fftfreq(N, d=1.0 / N)
    w = np.ones(N)
    w[N // 2] = 0.5  # split the Nyquist term symmetrically
    kk = np.concatenate([k, [N // 2]])
    cc = np.concatenate([coef * w, [coef[N // 2] * 0.5]])
    xi = np.pi * kk / R
    x = np.asarray(x, float)
    out = np.empty(x.shape, complex)
    flat = x.ravel()
    res = out.ravel()
    for a in range(0, flat.size, chunk):
        ph = np.exp(1j * np.outer(flat[a:a + chunk] + R, xi))
        res[a:a + chunk] = ph @ cc / N
    return res.reshape(x.shape)


def radial_deviation(f: GridFunction, samples: int = 4096) -> float:
    """Relative deviation of f from the radial function built on its x1-axis line."""
    top = float(np.abs(f.samples).max())
    if top == 0.0:
        return 0.0
    rad = f.radius().ravel()
    vals = f.samples.ravel()
    inside = np.flatnonzero(rad <= f.R)
    stride = max(1, inside.size // samples)
    pick = inside[::stride]
    line = _line_eval(_line_coefficients(f), f.R, rad[pick])
    if not f.is_complex:
        line = line.real
    return float(np.abs(vals[pick] - line).max()) / top


def _bessel_kernel(n: int, x: np.ndarray) -> np.ndarray:
    """x^-nu J_nu(x) with nu = n/2 - 1, continuous at 0."""
    nu = n / 2 - 1
    if n == 2:
        return special.j0(x)
    out = np.empty_like(x)
    small = x < 1e-8
    out[~small] = special.jv(nu, x[~small]) / x[~small] ** nu
    out[small] = 1.0 / (2.0 ** nu * special.gamma(nu + 1))
    return out


def _gauss_panels(a: float, b: float, width: float, order: int = 12):
    t, w = np.polynomial.legendre.leggauss(order)
    m = max(1, int(math.ceil((b - a) / width)))
    edges = np.linspace(a, b, m + 1)
    half = 0.5 * np.diff(edges)
    mid = edges[:-1] + half
    x = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    return x, wt


def radial_blocks(profile, n: int, r_support: float, levels, r_eval: dict,
                  pair: LPPair | None = None, dual: bool = False, chunk: int = 2048) -> dict:
    """Free-space blocks phi_j * f of a radial f at given radii, by Hankel transforms.

    With K(x) = x^-nu J_nu(x), nu = n/2 - 1,
    f_hat(rho) = (2 pi)^(n/2) int f(r) K(rho r) r^(n-1) dr and
    g(r) = (2 pi)^(-n/2) int m(rho) f_hat(rho) K(rho r) rho^(n-1) d rho.

    Parameters
    ----------
    profile : callable
        r -> f(r), vanishing beyond ``r_support``.
    r_eval : dict
        level -> radii at which the block is wanted.
    """
    pair = pair or _DEFAULT_PAIR
    levels = list(levels)
    if not levels:
        return {}
    band_top = 2.0 ** (max(levels) + 1)
    rn, rw = _gauss_panels(0.0, r_support, math.pi / (2 * band_top))
    fr = np.asarray(profile(rn)) * rw * rn ** (n - 1)
    out = {}
    for j in levels:
        lo, hi = (0.0, 2.0) if j == 0 else (2.0 ** (j - 1), 2.0 ** (j + 1))
        re = np.asarray(r_eval[j], float)
        r_top = float(re.max()) if re.size else 1.0
        width = min(2.0 ** j / 16, math.pi / (2 * max(r_top, r_support)))
        rho, w_rho = _gauss_panels(lo, hi, width)
        fh = np.empty(rho.size, complex if np.iscomplexobj(fr) else float)
        for a in range(0, rho.size, chunk):
            fh[a:a + chunk] = _bessel_kernel(n, np.outer(rho[a:a + chunk], rn)) @ fr
        fh *= (2 * math.pi) ** (n / 2)
        m = pair.block_multiplier(rho, j, dual)
        spec = np.conj(m) * fh * w_rho * rho ** (n - 1) * (2 * math.pi) ** (-n / 2)
        g = np.empty(re.shape, fh.dtype)
        for a in range(0, re.size, chunk):
            g[a:a + chunk] = _bessel_kernel(n, np.outer(re[a:a + chunk], rho)) @ spec
        out[j] = g
    return out


def _radial_source(f: GridFunction, tol: float):
    dev = radial_deviation(f)
    if dev > tol:
        raise SymmetryViolation(dev, tol)
    coef = _line_coefficients(f)
    real = not f.is_complex

    def prof(r):
        r = np.asarray(r, float)
        v = _line_eval(coef, f.R, np.minimum(r, f.R))
        v = np.where(r <= f.R, v, 0.0)
        return v.real if real else v

    return prof, dev


def _active_rings(f: GridFunction, cov: RadialCovering, j: int) -> np.ndarray:
    """Rings with at least one ball meeting the grid's bounding box."""
    lo = np.full(f.n, -f.R)
    hi = np.full(f.n, f.R - f.h)
    rb = cov.radius(j)
    keep = []
    for k in range(cov.k_max + 1):
        c = cov.centers(j, k)
        if c.shape[0] and np.any(ball_meets_box(c, rb, lo, hi)):
            keep.append(k)
    return np.array(keep, int)


def _radial_tables(f: GridFunction, cov: RadialCovering, levels, pair, tol):
    """Dense radius tables of |phi~_j * f| for a radial input."""
    prof, dev = _radial_source(f, tol)
    rings, r_eval = {}, {}
    for j in levels:
        _check_reach(f, cov, j)
        act = _active_rings(f, cov, j)
        rings[j] = act
        top = cov.ring_radius(j, int(act.max())) + cov.radius(j) if act.size else cov.radius(j)
        step = 2.0 ** (-j) / RADIAL_SAMPLES
        r_eval[j] = np.arange(int(math.ceil(top / step)) + 1) * step
    blocks = radial_blocks(prof, f.n, f.R, levels, r_eval, pair)
    return rings, r_eval, blocks, dev


def extract_coefficients(f: GridFunction, cov: RadialCovering, pair: LPPair | None,
                         params: AtomParams, levels=None, form: str = "auto",
                         symmetry_tol: float = SYMMETRY_TOL, check: bool = True) -> AtomCoefficients:
    """Coefficients t_{j,l} of f on the covering.

    ``form="general"`` takes the sup over grid points of each closed ball,
    using the periodic grid blocks.  ``form="radial"`` requires a radial f,
    computes the blocks in free space from the x1-axis line and takes the
    sup over each ring's radius window [r_k - rb, r_k + rb], one value per
    ring.  ``form="auto"`` picks radial when f passes the symmetry test.

    Raises
    ------
    SymmetryViolation
        Radial form requested for an input that is not radial.
    """
    pair = pair or _DEFAULT_PAIR
    if check:
        check_support(f)
    levels = _extraction_levels(f, cov, levels)
    consts = decomposition_constants(f.n, params, cov)
    sizes = tuple(int(x) for x in cov.ring_sizes())
    meta = {"s": float(params.s), "p": float(params.p), "L": params.L, "M": params.M,
            "D": consts["D"], "E": consts["E"]}
    if form == "auto":
        form = "radial" if radial_deviation(f) <= symmetry_tol else "general"
    if form == "radial":
        rings, r_eval, blocks, dev = _radial_tables(f, cov, levels, pair, symmetry_tol)
        vals = {}
        for j in levels:
            a = np.abs(blocks[j])
            step = r_eval[j][1]
            v = np.zeros(len(sizes))
            rb = cov.radius(j)
            for k in rings[j]:
                rk = cov.ring_radius(j, k)
                i0 = max(0, int(round((rk - rb) / step)))
                i1 = int(round((rk + rb) / step))
                v[k] = a[i0:i1 + 1].max()
            vals[j] = _level_scale(j, params, f.n, consts) * v
        meta["symmetry_deviation"] = dev
        return AtomCoefficients(f.n, "radial", sizes, vals, meta)
    if form != "general":
        raise ValueError(f"unknown form {form!r}")
    for j in levels:
        _check_reach(f, cov, j)
    blocks = _dual_blocks(f, levels, pair)
    vals = {}
    for j in levels:
        sup, _, _ = _cell_scan(f, cov, j, blocks[j])
        vals[j] = _level_scale(j, params, f.n, consts) * sup
    return AtomCoefficients(f.n, "general", sizes, vals, meta)


def _dual_blocks(f: GridFunction, levels, pair) -> dict:
    """phi~_j * f, with multiplier conj(phi_hat(2^-j xi))."""
    spec = _Spectrum(f)
    return {j: spec.apply(np.conj(pair.block_multiplier(spec.rho, j))) for j in levels}


def _isometry_to(c1: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Orthogonal matrix mapping c1 to c (both of the same length)."""
    n = c1.size
    r = np.linalg.norm(c1)
    if r == 0:
        return np.eye(n)
    if n == 2:
        a = math.atan2(c[1], c[0]) - math.atan2(c1[1], c1[0])
        return np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    u, v = c1 / r, c / np.linalg.norm(c)
    w = u - v
    if np.linalg.norm(w) < 1e-15:
        return np.eye(n)
    w /= np.linalg.norm(w)
    return np.eye(n) - 2.0 * np.outer(w, w)


def _unit_stencil(n: int, rings: int = 8, seed: int = 0) -> np.ndarray:
    if n == 2:
        a = 2 * np.pi * np.arange(32) / 32
        pts = [np.zeros((1, 2))]
        for i in range(1, rings + 1):
            pts.append((i / rings) * np.column_stack([np.cos(a), np.sin(a)]))
        return np.vstack(pts)
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(512, n))
    g /= np.linalg.norm(g, axis=1)[:, None]
    rad = rng.random(512) ** (1.0 / n)
    axes = np.vstack([np.eye(n), -np.eye(n), np.zeros((1, n))])
    return np.vstack([g * rad[:, None], g, axes])


def stencil_coefficients(f: GridFunction, cov: RadialCovering, pair: LPPair | None,
                         params: AtomParams, levels=None,
                         symmetry_tol: float = SYMMETRY_TOL) -> AtomCoefficients:
    """General-form coefficients of a radial f from per-cell point stencils.

    Each cell's sup is taken over the stencil of its ring's first cell,
    carried to the cell by an isometry fixing the origin, with the
    free-space block evaluated at every stencil point.  Comparing
    t_{j,k,l} across l then tests the rotation invariance of the pipeline.
    """
    pair = pair or _DEFAULT_PAIR
    check_support(f)
    levels = _extraction_levels(f, cov, levels)
    consts = decomposition_constants(f.n, params, cov)
    rings, r_eval, blocks, dev = _radial_tables(f, cov, levels, pair, symmetry_tol)
    unit = _unit_stencil(f.n)
    sizes = tuple(int(x) for x in cov.ring_sizes())
    off = np.concatenate([[0], np.cumsum(sizes)])
    vals = {}
    for j in levels:
        rb = cov.radius(j)
        table = np.abs(blocks[j])
        v = np.zeros(off[-1])
        for k in rings[j]:
            cs = cov.centers(j, k)
            base = cs[0] + rb * unit
            if f.n == 2:
                ang = np.arctan2(cs[:, 1], cs[:, 0]) - math.atan2(cs[0, 1], cs[0, 0])
                co, si = np.cos(ang)[:, None], np.sin(ang)[:, None]
                x = co * base[None, :, 0] - si * base[None, :, 1]
                y = si * base[None, :, 0] + co * base[None, :, 1]
                rad = np.hypot(x, y)
            else:
                rad = np.stack([np.linalg.norm(base @ _isometry_to(cs[0], c).T, axis=1)
                                for c in cs])
            v[off[k]:off[k + 1]] = np.interp(rad, r_eval[j], table).max(axis=1)
        vals[j] = _level_scale(j, params, f.n, consts) * v
    return AtomCoefficients(f.n, "general", sizes, vals,
                            {"symmetry_deviation": dev, "stencil_points": int(unit.shape[0])})


# ---------------------------------------------------------------------------
# atoms

class AtomFamily:
    """Atoms t^-1 psi_j * (phi~_j * f on the disjointified cell), built lazily.

    Iterating yields ``((j, k, l), GridFunction)`` for every cell with a
    nonzero coefficient; l is 1-based.
    """

    def __init__(self, f: GridFunction, cov: RadialCovering, pair: LPPair,
                 coeffs: AtomCoefficients, blocks: dict, owners: dict):
        self.f = f
        self.cov = cov
        self.pair = pair
        self.coeffs = coeffs.expanded()
        self.blocks = blocks
        self.owners = owners
        self.levels = sorted(blocks)
        self._off = cov.ring_offsets()
        self._ring = np.repeat(np.arange(cov.k_max + 1), cov.ring_sizes())
        self._rho = _freq_radius(f.n, f.N, f.h, False)

    def cell_id(self, k: int, l: int) -> int:
        return int(self._off[k] + l - 1)

    def cell_label(self, cid: int) -> tuple:
        k = int(self._ring[cid])
        return k, int(cid - self._off[k]) + 1

    def cells(self):
        for j in self.levels:
            for cid in np.flatnonzero(self.coeffs.general(j)):
                yield (j,) + self.cell_label(int(cid))

    def __len__(self) -> int:
        return sum(int(np.count_nonzero(self.coeffs.general(j))) for j in self.levels)

    def __iter__(self):
        for cell in self.cells():
            yield cell, self.atom(*cell)

    def kernel_apply(self, j: int, src: np.ndarray) -> np.ndarray:
        mult = self.pair.block_multiplier(self._rho, j, dual=True)
        out = sfft.ifftn(sfft.fftn(src) * mult)
        return out if np.iscomplexobj(src) else out.real

    def atom(self, j: int, k: int, l: int) -> GridFunction:
        cid = self.cell_id(k, l)
        t = self.coeffs.general(j)[cid]
        if t == 0:
            return self.f.with_samples(np.zeros(self.f.samples.shape,
                                                self.blocks[j].dtype))
        src = np.where(self.owners[j] == cid, self.blocks[j], 0.0)
        return self.f.with_samples(self.kernel_apply(j, src) / t)

    def ball(self, j: int, k: int, l: int):
        from .geometry import Ball
        return Ball(tuple(self.cov.centers(j, k)[l - 1]), self.cov.radius(j))

    def cell_volumes(self, j: int) -> np.ndarray:
        """Volume of each disjointified cell at grid resolution."""
        cnt = np.bincount(self.owners[j].ravel(), minlength=self.cov.cell_count(j))
        return cnt * self.f.h ** self.f.n

    def probed_volume(self) -> float:
        return (self.f.N * self.f.h) ** self.f.n


def extract_atoms(f: GridFunction, cov: RadialCovering, pair: LPPair | None,
                  params: AtomParams, coeffs: AtomCoefficients | None = None,
                  levels=None) -> AtomFamily:
    """Atoms for the coefficients of f (computed with ``extract_coefficients`` if absent)."""
    pair = pair or _DEFAULT_PAIR
    if coeffs is None:
        coeffs = extract_coefficients(f, cov, pair, params, levels)
    coeffs.check_against(cov)
    levels = _extraction_levels(f, cov, coeffs.levels if levels is None else levels)
    missing = [j for j in levels if j not in coeffs.values]
    if missing:
        raise IndexMismatch(f"no coefficients for levels {missing}")
    blocks = _dual_blocks(f, levels, pair)
    owners = {}
    for j in levels:
        _, _, owners[j] = _cell_scan(f, cov, j, blocks[j])
    return AtomFamily(f, cov, pair, coeffs, blocks, owners)


def reconstruct(t: AtomCoefficients, atoms: AtomFamily, J: int) -> GridFunction:
    """sum_{j <= J} sum_l t_{j,l} a_{j,l}.

    All cells of a level share one kernel, so the level sum is a single
    convolution of the block weighted cell by cell with t / t_atom.
    """
    t.check_against(atoms.cov)
    f = atoms.f
    out = None
    for j in atoms.levels:
        if j > J or j not in t.values:
            continue
        ta = atoms.coeffs.general(j)
        tt = t.general(j)
        ratio = np.zeros(ta.shape, np.result_type(tt, ta, float))
        nz = ta != 0
        ratio[nz] = tt[nz] / ta[nz]
        src = atoms.blocks[j] * ratio[atoms.owners[j]]
        term = atoms.kernel_apply(j, src)
        out = term if out is None else out + term
    if out is None:
        out = np.zeros(f.samples.shape)
    return f.with_samples(out)


# ---------------------------------------------------------------------------
# sequence norms

def cell_cube_pairs(centers: np.ndarray, radius: float, cubes: CubeFamily, jP: int):
    """(cell index, flat cube index) for every closed ball meeting a closed cube of level jP."""
    centers = np.asarray(centers, float)
    m, n = centers.shape if centers.size else (0, centers.shape[-1] if centers.ndim == 2 else 0)
    if m == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    nc = cubes.per_axis(jP)
    side = 2.0 ** (-jP)
    R = cubes.R
    lo = np.floor((centers - radius + R) / side).astype(np.int64) - 1
    hi = np.floor((centers + radius + R) / side).astype(np.int64)
    lo = np.clip(lo, 0, nc - 1)
    hi = np.clip(hi, 0, nc - 1)
    W = int((hi - lo).max()) + 1
    cells, cubes_out = [], []
    ids = np.arange(m)
    for off in itertools.product(range(W), repeat=n):
        idx = lo + np.asarray(off)
        ok = np.all(idx <= hi, axis=1)
        if not ok.any():
            continue
        ii = idx[ok]
        low = -R + side * ii
        hit = ball_meets_box(centers[ok], radius, low, low + side)
        cells.append(ids[ok][hit])
        cubes_out.append(np.ravel_multi_index(tuple(ii[hit].T), (nc,) * n))
    return np.concatenate(cells), np.concatenate(cubes_out)


def _combine_levels(T: np.ndarray, q: float) -> np.ndarray:
    if math.isinf(q):
        return T.max(axis=0)
    return np.sum(T ** q, axis=0) ** (1.0 / q)


def _sequence_sup(per_level, p, q, tau, cubes: CubeFamily, n: int, levels) -> NormResult:
    """sup_P |P|^-tau (sum_{j >= max(jP,0)} S_j(P)^q)^(1/q) with S_j(P) from per_level."""
    best, wit = 0.0, {"kind": "none"}
    jmax = max(levels) if levels else -1
    for jP in cubes.levels():
        use = [j for j in levels if j >= max(jP, 0)]
        if not use:
            continue
        ncube = cubes.per_axis(jP) ** n
        T = np.stack([per_level(j, jP, ncube) for j in use])
        if not math.isinf(p):
            T = T ** (1.0 / p)
        vals = 2.0 ** (jP * n * tau) * _combine_levels(T, q)
        i = int(np.argmax(vals))
        if vals[i] > best:
            best = float(vals[i])
            idx = np.unravel_index(i, (cubes.per_axis(jP),) * n)
            wit = {"kind": "cube", "level": jP, "index": [int(x) for x in idx],
                   "lower": [float(x) for x in cubes.cube_lower(jP, idx)]}
    return NormResult(best, wit, extra={"levels": list(levels), "top_level": jmax})


def _check_sequence_args(p, q, tau):
    if not (p > 0 and q > 0):
        raise ValueError("p and q must be positive")
    if tau < 0:
        raise ValueError("tau must be nonnegative")


def sequence_norm(t: AtomCoefficients, p: float, q: float, tau: float,
                  cov: RadialCovering, cubes: CubeFamily) -> NormResult:
    """Sequence-space norm over the cube family.

    sup_P |P|^-tau (sum_{j >= max(jP, 0)} (sum_{l: cell meets P} |t_{j,l}|^p)^(q/p))^(1/q)
    """
    _check_sequence_args(p, q, tau)
    t.check_against(cov)
    g = t.expanded()
    data = {}
    for j in g.levels:
        v = g.values[j]
        nz = np.flatnonzero(v)
        data[j] = (cov.all_centers(j)[nz], np.abs(v[nz]))

    def per_level(j, jP, ncube):
        c, a = data[j]
        ci, cu = cell_cube_pairs(c, cov.radius(j), cubes, jP)
        if math.isinf(p):
            S = np.zeros(ncube)
            np.maximum.at(S, cu, a[ci])
            return S
        return np.bincount(cu, weights=a[ci] ** p, minlength=ncube)

    return _sequence_sup(per_level, p, q, tau, cubes, cov.n, g.levels)


def omega_counts(cov: RadialCovering, j: int, jP: int, cubes: CubeFamily, rings=None):
    """Sparse table of omega(P, j, k): arrays (flat cube index, ring k, count)."""
    rings = range(cov.k_max + 1) if rings is None else rings
    rings = [k for k in rings if cov.ring_size(k)]
    if not rings:
        z = np.zeros(0, np.int64)
        return z, z, z
    centers = np.vstack([cov.centers(j, k) for k in rings])
    ring_of = np.repeat(np.array(rings), [cov.ring_size(k) for k in rings])
    ci, cu = cell_cube_pairs(centers, cov.radius(j), cubes, jP)
    K = cov.k_max + 1
    keys, cnt = np.unique(cu * K + ring_of[ci], return_counts=True)
    return keys // K, keys % K, cnt


def radial_sequence_norm(t: AtomCoefficients, p: float, q: float, tau: float,
                         cov: RadialCovering, cubes: CubeFamily) -> NormResult:
    """Ring-weighted sequence norm of a radial coefficient set.

    sup_P |P|^-tau (sum_j (sum_k omega(P, j, k) |t_{j,k}|^p)^(q/p))^(1/q),
    omega(P, j, k) being the number of balls of ring k at level j meeting P.
    """
    if t.form != "radial":
        raise IndexMismatch("radial_sequence_norm needs radial-form coefficients")
    _check_sequence_args(p, q, tau)
    t.check_against(cov)
    mags = {j: np.abs(v) for j, v in t.values.items()}

    def per_level(j, jP, ncube):
        a = mags[j]
        cube, ring, cnt = omega_counts(cov, j, jP, cubes, np.flatnonzero(a))
        if math.isinf(p):
            S = np.zeros(ncube)
            np.maximum.at(S, cube, a[ring])
            return S
        return np.bincount(cube, weights=cnt * a[ring] ** p, minlength=ncube)

    return _sequence_sup(per_level, p, q, tau, cubes, cov.n, t.levels)
