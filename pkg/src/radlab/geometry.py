"""Dyadic cubes, balls, shells and the radial covering of R^n.

Each level j of the covering consists of rings k = 0, 1, ... of closed balls
of radius 6 * 2^-j.  The centers of ring k lie on the sphere of radius
(k + 1/2) 2^-j (the origin for k = 0), with the first center of every ring on
the positive x1 axis.  Level j is the exact 2^-j dilation of level 0: centers
are stored once at level 0 and multiplied by a power of two, which is exact
in floating point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidDimension, OutOfRange, ResourceLimitExceeded

BALL_RADIUS = 6.0
# arc spacing between neighbouring centers on a level-0 sphere
ARC_SPACING = math.pi
DEFAULT_CELL_BUDGET = 10_000_000
COVERING_FORMAT_VERSION = 1

# Bounds on ring_count(n, k) / k^(n-1) over 1 <= k <= 1000, frozen from an
# exhaustive scan (the n = 3 ratio tends to 4/pi).
RING_COUNT_BOUNDS = {2: (2.0, 3.0), 3: (1.25, 5.0)}


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True)
class DyadicCube:
    """Cube origin + 2^-level ([0,1)^n + index).

    ``origin`` is the zero vector for the standard dyadic grid; a shifted
    origin gives the dyadic grid anchored at a domain corner.
    """

    level: int
    index: tuple
    origin: tuple | None = None

    @property
    def n(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def lower(self) -> np.ndarray:
        o = np.zeros(self.n) if self.origin is None else np.asarray(self.origin, float)
        return o + self.side * np.asarray(self.index, float)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + self.side

    @property
    def volume(self) -> float:
        return self.side ** self.n

    def contains(self, cube: "DyadicCube") -> bool:
        return bool(np.all(self.lower <= cube.lower) and np.all(cube.upper <= self.upper))

    def to_dict(self) -> dict:
        d = {"level": int(self.level), "index": [int(i) for i in self.index]}
        if self.origin is not None:
            d["origin"] = [float(o) for o in self.origin]
        return d


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    def contains(self, x) -> bool:
        x = np.asarray(x, float)
        return float(np.sum((x - np.asarray(self.center)) ** 2)) <= self.radius ** 2


@dataclass(frozen=True)
class Shell:
    """{x : k 2^-j <= |x| < (k+1) 2^-j}; a ball when k = 0."""

    j: int
    k: int

    @property
    def inner(self) -> float:
        return self.k * 2.0 ** (-self.j)

    @property
    def outer(self) -> float:
        return (self.k + 1) * 2.0 ** (-self.j)

    def contains(self, x) -> bool:
        r = float(np.linalg.norm(x))
        return self.inner <= r < self.outer


# ---------------------------------------------------------------------------
# ring placement

def _circle_count(radius: float) -> int:
    return max(1, math.ceil(2.0 * math.pi * radius / ARC_SPACING - 1e-9))


def _band_count(radius: float) -> int:
    return max(1, math.ceil(math.pi * radius / ARC_SPACING - 1e-9))


def _sphere_count(dim: int, radius: float) -> int:
    if radius < 1e-12:
        return 1
    if dim == 2:
        return _circle_count(radius)
    m = _band_count(radius)
    total = 0
    for i in range(m + 1):
        total += _sphere_count(dim - 1, radius * math.sin(math.pi * i / m))
    return total


def _sphere_points(dim: int, radius: float) -> np.ndarray:
    """Latitude-band points on the sphere of the given radius in R^dim.

    The first point is (radius, 0, ..., 0).  Bands are cut at equal polar
    angles from the x1 axis and each band is filled recursively.
    """
    if radius < 1e-12:
        return np.zeros((1, dim))
    if dim == 2:
        m = _circle_count(radius)
        a = 2.0 * np.pi * np.arange(m) / m
        return radius * np.column_stack([np.cos(a), np.sin(a)])
    m = _band_count(radius)
    parts = []
    for i in range(m + 1):
        th = math.pi * i / m
        sub = _sphere_points(dim - 1, radius * math.sin(th))
        col = np.full((sub.shape[0], 1), radius * math.cos(th))
        parts.append(np.hstack([col, sub]))
    return np.vstack(parts)


def _check_dim(n):
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidDimension(f"dimension must be an integer >= 2, got {n!r}")


@lru_cache(maxsize=None)
def ring_count(n: int, k: int) -> int:
    """Number of balls in ring k of the radial covering of R^n."""
    _check_dim(n)
    if k < 0:
        raise ValueError("ring index must be nonnegative")
    if k == 0:
        return 1
    if n == 2:
        return 2 * k + 1
    return _sphere_count(n, k + 0.5)


def ring_centers0(n: int, k: int) -> np.ndarray:
    """Level-0 centers of ring k, shape (ring_count(n, k), n)."""
    _check_dim(n)
    if k == 0:
        return np.zeros((1, n))
    if n == 2:
        m = 2 * k + 1
        a = 2.0 * np.pi * np.arange(m) / m
        return (k + 0.5) * np.column_stack([np.cos(a), np.sin(a)])
    pts = _sphere_points(n, k + 0.5)
    # re-project so that every center has norm exactly k + 1/2 up to rounding
    pts *= (k + 0.5) / np.linalg.norm(pts, axis=1)[:, None]
    return pts


# ---------------------------------------------------------------------------
# covering

@dataclass(frozen=True)
class RadialCovering:
    """Radial covering with levels 0..j_max and rings 0..k_max.

    ``removed`` lists rings omitted on purpose (used to exercise the
    regularity checker).
    """

    n: int
    j_max: int
    k_max: int
    rings0: tuple = field(repr=False)
    removed: frozenset = frozenset()

    def radius(self, j: int) -> float:
        return BALL_RADIUS * 2.0 ** (-j)

    def diameter(self, j: int) -> float:
        return 2.0 * self.radius(j)

    def ring_radius(self, j: int, k: int) -> float:
        return 0.0 if k == 0 else (k + 0.5) * 2.0 ** (-j)

    def _check(self, j, k=None):
        if not 0 <= j <= self.j_max:
            raise OutOfRange(f"level {j} not in covering (j_max={self.j_max})")
        if k is not None and not 0 <= k <= self.k_max:
            raise OutOfRange(f"ring {k} not in covering (k_max={self.k_max})")

    def centers(self, j: int, k: int) -> np.ndarray:
        self._check(j, k)
        return self.rings0[k] * 2.0 ** (-j)

    def ring_size(self, k: int) -> int:
        return self.rings0[k].shape[0]

    def ring_sizes(self) -> np.ndarray:
        return np.array([r.shape[0] for r in self.rings0], dtype=np.int64)

    def ring_offsets(self) -> np.ndarray:
        """Start of each ring in the flattened (k, l) cell ordering."""
        return np.concatenate([[0], np.cumsum(self.ring_sizes())])

    def all_centers(self, j: int) -> np.ndarray:
        self._check(j)
        return np.vstack(self.rings0) * 2.0 ** (-j)

    def cell_count(self, j: int | None = None) -> int:
        per = int(self.ring_sizes().sum())
        return per if j is not None else per * (self.j_max + 1)

    def balls(self, j: int, k: int):
        r = self.radius(j)
        return [Ball(tuple(c), r) for c in self.centers(j, k)]

    def rings_meeting(self, j: int, radius: float) -> range:
        """Rings whose balls can meet the ball of the given radius about 0."""
        self._check(j)
        kmax = math.floor(radius * 2.0 ** j + BALL_RADIUS)
        return range(0, min(self.k_max, kmax) + 1)

    def without_ring(self, k: int) -> "RadialCovering":
        self._check(0, k)
        rings = list(self.rings0)
        rings[k] = np.zeros((0, self.n))
        return RadialCovering(self.n, self.j_max, self.k_max, tuple(rings),
                              self.removed | {k})

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        rings = []
        for k, c in enumerate(self.rings0):
            rings.append({
                "k": k,
                "radius0": _exact(Fraction(2 * k + 1, 2) if k else Fraction(0)),
                "centers0": [[repr(float(x)) for x in row] for row in c],
            })
        doc = {
            "format": "radlab-covering",
            "version": COVERING_FORMAT_VERSION,
            "n": self.n,
            "j_max": self.j_max,
            "k_max": self.k_max,
            "ball_radius0": _exact(Fraction(6)),
            "level_scale": "2^-j",
            "removed": sorted(self.removed),
            "rings": rings,
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RadialCovering":
        doc = json.loads(text)
        if doc.get("format") != "radlab-covering":
            raise ValueError("not a covering document")
        if doc.get("version") != COVERING_FORMAT_VERSION:
            raise ValueError(f"unsupported covering version {doc.get('version')}")
        n = int(doc["n"])
        rings = tuple(
            np.array([[float(x) for x in row] for row in r["centers0"]], float).reshape(-1, n)
            for r in doc["rings"]
        )
        return cls(n, int(doc["j_max"]), int(doc["k_max"]), rings,
                   frozenset(doc.get("removed", [])))


def _exact(x: Fraction) -> str:
    """Exact decimal string of a dyadic rational."""
    x = Fraction(x)
    if x.denominator & (x.denominator - 1):
        raise ValueError("not dyadic")
    e = x.denominator.bit_length() - 1
    digits = x.numerator * 5 ** e
    sign = "-" if digits < 0 else ""
    s = str(abs(digits)).rjust(e + 1, "0")
    return sign + (s if e == 0 else s[:-e] + "." + s[-e:])


def build_radial_covering(n: int, j_max: int, k_max: int,
                          cell_budget: int = DEFAULT_CELL_BUDGET) -> RadialCovering:
    """Build the radial covering with levels 0..j_max and rings 0..k_max.

    Raises
    ------
    ResourceLimitExceeded
        If the total number of cells over all levels exceeds ``cell_budget``.
    """
    _check_dim(n)
    if j_max < 0 or k_max < 1:
        raise ValueError("need j_max >= 0 and k_max >= 1")
    per_level = sum(ring_count(n, k) for k in range(k_max + 1))
    if per_level * (j_max + 1) > cell_budget:
        raise ResourceLimitExceeded(
            f"{per_level * (j_max + 1)} cells exceed the budget of {cell_budget}")
    rings = tuple(ring_centers0(n, k) for k in range(k_max + 1))
    return RadialCovering(n, j_max, k_max, rings)


# ---------------------------------------------------------------------------
# intersections

def ball_meets_box(centers, radius, lower, upper) -> np.ndarray:
    """Closed balls vs closed boxes, by clamping the center to the box."""
    centers = np.asarray(centers, float)
    d = np.clip(centers, lower, upper) - centers
    return np.sum(d * d, axis=-1) <= radius * radius


def omega(P: DyadicCube, j: int, k: int, cov: RadialCovering) -> int:
    """Number of balls of ring (j, k) meeting the cube P."""
    c = cov.centers(j, k)
    if c.shape[0] == 0:
        return 0
    return int(np.count_nonzero(ball_meets_box(c, cov.radius(j), P.lower, P.upper)))


# ---------------------------------------------------------------------------
# multiplicity and coverage scans

def _polar_kernel():
    import numba

    @numba.njit(cache=True)
    def count_at(rho, theta, scale, rb, k_max, present):
        """Balls containing the point (rho cos theta, rho sin theta)."""
        two_pi = 2.0 * np.pi
        total = 0
        k_lo = int(math.floor((rho - rb) / scale - 0.5)) - 1
        if k_lo < 1:
            k_lo = 1
        k_hi = int(math.ceil((rho + rb) / scale - 0.5)) + 1
        if k_hi > k_max:
            k_hi = k_max
        if present[0] and rho <= rb:
            total += 1
        for k in range(k_lo, k_hi + 1):
            if not present[k]:
                continue
            rk = (k + 0.5) * scale
            if abs(rho - rk) > rb:
                continue
            m = 2 * k + 1
            if rho <= 0.0:
                total += m
                continue
            c = (rho * rho + rk * rk - rb * rb) / (2.0 * rho * rk)
            if c <= -1.0:
                total += m
                continue
            if c > 1.0:
                c = 1.0
            d = math.acos(c)
            lo = math.ceil((theta - d) * m / two_pi)
            hi = math.floor((theta + d) * m / two_pi)
            cnt = hi - lo + 1
            if cnt > m:
                cnt = m
            if cnt > 0:
                total += cnt
        return total

    @numba.njit(cache=True)
    def own_ring_hit(rho, theta, scale, rb, k, present):
        if not present[k]:
            return False
        if k == 0:
            return rho <= rb
        rk = (k + 0.5) * scale
        if abs(rho - rk) > rb:
            return False
        m = 2 * k + 1
        c = (rho * rho + rk * rk - rb * rb) / (2.0 * rho * rk)
        if c <= -1.0:
            return True
        if c > 1.0:
            c = 1.0
        d = math.acos(c)
        lo = math.ceil((theta - d) * m / (2.0 * np.pi))
        hi = math.floor((theta + d) * m / (2.0 * np.pi))
        return hi >= lo

    @numba.njit(cache=True)
    def scan(scale, rb, k_max, present, density, r_cover, r_probe):
        """Polar probe scan of the upper half plane.

        The angular half-widths depend only on the probe radius, so they
        are computed once per radius.  Returns (max count, min count inside
        r_cover, shell misses, union misses, argmax rho, argmax theta,
        probes).
        """
        two_pi = 2.0 * np.pi
        dr = scale / density
        nr = int(math.ceil(r_probe / dr))
        best = count_at(0.0, 0.0, scale, rb, k_max, present)
        arg_r = 0.0
        arg_t = 0.0
        worst = best
        shell_miss = 0
        union_miss = 0
        probes = 1
        if not own_ring_hit(0.0, 0.0, scale, rb, 0, present):
            shell_miss += 1
        ms = np.empty(k_max + 2, np.float64)
        ds = np.empty(k_max + 2, np.float64)
        for i in range(1, nr + 1):
            rho = i * dr
            na = int(math.ceil(two_pi * rho / dr))
            half = na // 2
            kshell = int(math.floor(rho / scale))
            base = 0
            if present[0] and rho <= rb:
                base = 1
            nk = 0
            own = -1
            k_lo = max(1, int(math.floor((rho - rb) / scale - 0.5)) - 1)
            k_hi = min(k_max, int(math.ceil((rho + rb) / scale - 0.5)) + 1)
            for k in range(k_lo, k_hi + 1):
                if not present[k]:
                    continue
                rk = (k + 0.5) * scale
                if abs(rho - rk) > rb:
                    continue
                m = 2 * k + 1
                c = (rho * rho + rk * rk - rb * rb) / (2.0 * rho * rk)
                if c <= -1.0:
                    base += m
                    if k == kshell:
                        own = -2
                    continue
                if c > 1.0:
                    c = 1.0
                if k == kshell:
                    own = nk
                ms[nk] = m / two_pi
                ds[nk] = math.acos(c)
                nk += 1
            check_shell = kshell <= k_max - 1 and rho < r_cover
            if kshell == 0:
                own = -2 if (present[0] and rho <= rb) else -1
            for a in range(half + 1):
                th = two_pi * a / na
                c = base
                own_hit = own == -2
                for q in range(nk):
                    cnt = math.floor((th + ds[q]) * ms[q]) - math.ceil((th - ds[q]) * ms[q]) + 1
                    if cnt > 0:
                        mm = int(round(ms[q] * two_pi))
                        if cnt > mm:
                            cnt = mm
                        c += cnt
                        if q == own:
                            own_hit = True
                probes += 1
                if c > best:
                    best = c
                    arg_r = rho
                    arg_t = th
                if rho < r_cover:
                    if c < worst:
                        worst = c
                    if c == 0:
                        union_miss += 1
                    if check_shell and not own_hit:
                        shell_miss += 1
        return best, worst, shell_miss, union_miss, arg_r, arg_t, probes

    @numba.njit(cache=True)
    def count_points(rho, theta, scale, rb, k_max, present):
        out = np.empty(rho.shape[0], np.int64)
        for i in range(rho.shape[0]):
            out[i] = count_at(rho[i], theta[i], scale, rb, k_max, present)
        return out

    return scan, count_points


_KERNELS = None


def _kernels():
    global _KERNELS
    if _KERNELS is None:
        _KERNELS = _polar_kernel()
    return _KERNELS


@dataclass(frozen=True)
class ScanResult:
    """Outcome of a probe scan at one level."""

    level: int
    multiplicity: int
    min_count: int
    shell_misses: int
    union_misses: int
    probes: int
    argmax: tuple


def scan_level(cov: RadialCovering, j: int, density: int = 8,
               eps: float = 0.0) -> ScanResult:
    """Count covering balls at every probe point of level j.

    Probe points are all ball centers plus a dense grid with spacing
    2^-j / density.  With ``eps > 0`` every ball is enlarged to radius
    (6 + eps) 2^-j.
    """
    cov._check(j)
    scale = 2.0 ** (-j)
    rb = (BALL_RADIUS + eps) * scale
    present = np.array([cov.rings0[k].shape[0] > 0 for k in range(cov.k_max + 1)])
    r_cover = (cov.k_max - 1) * scale
    r_probe = (cov.k_max + 1) * scale
    if cov.n == 2:
        scan, count_points = _kernels()
        best, worst, sm, um, ar, at, probes = scan(
            scale, rb, cov.k_max, present, float(density), r_cover, r_probe)
        c = cov.all_centers(j)
        rho = np.hypot(c[:, 0], c[:, 1])
        th = np.arctan2(c[:, 1], c[:, 0])
        cc = count_points(rho, th, scale, rb, cov.k_max, present)
        if cc.size and cc.max() > best:
            i = int(np.argmax(cc))
            best, ar, at = int(cc[i]), float(rho[i]), float(th[i])
        argmax = (ar * math.cos(at), ar * math.sin(at))
        return ScanResult(j, int(best), int(worst), int(sm), int(um),
                          int(probes + cc.size), argmax)
    return _scan_generic(cov, j, density, rb, r_cover, r_probe)


def _scan_generic(cov, j, density, rb, r_cover, r_probe):
    n = cov.n
    scale = 2.0 ** (-j)
    step = scale / density
    m = int(math.ceil(r_probe / step))
    ax = np.arange(-m, m + 1) * step
    grid = np.stack(np.meshgrid(*([ax] * n), indexing="ij"), -1).reshape(-1, n)
    grid = grid[np.linalg.norm(grid, axis=1) <= r_probe]
    centers = cov.all_centers(j)
    pts = np.vstack([grid, centers])
    tree = cKDTree(centers)
    counts = tree.query_ball_point(pts, rb * (1 + 1e-12), return_length=True)
    norms = np.linalg.norm(pts, axis=1)
    inside = norms < r_cover
    shell = np.floor(norms / scale).astype(int)
    shell_miss = 0
    for k in range(cov.k_max):
        sel = inside & (shell == k)
        if not np.any(sel):
            continue
        ck = cov.centers(j, k)
        if ck.shape[0] == 0:
            shell_miss += int(np.count_nonzero(sel))
            continue
        d, _ = cKDTree(ck).query(pts[sel])
        shell_miss += int(np.count_nonzero(d > rb * (1 + 1e-12)))
    i = int(np.argmax(counts))
    return ScanResult(j, int(counts[i]), int(counts[inside].min()), shell_miss,
                      int(np.count_nonzero(counts[inside] == 0)), int(len(pts)),
                      tuple(float(x) for x in pts[i]))


def multiplicity(cov: RadialCovering, j: int, density: int = 8) -> int:
    """Largest number of level-j balls containing a single probe point."""
    return scan_level(cov, j, density).multiplicity


def axis_covered(cov: RadialCovering, j: int, density: int = 8) -> bool:
    """Whether [0, (k_max-1) 2^-j] e1 lies in the union of the l = 1 balls."""
    scale = 2.0 ** (-j)
    t = np.arange(0, (cov.k_max - 1) * density + 1) * (scale / density)
    first = np.array([cov.centers(j, k)[0, 0] for k in range(cov.k_max + 1)
                      if cov.rings0[k].shape[0]])
    # all l = 1 centers lie on the nonnegative x1 axis
    d = np.abs(t[:, None] - first[None, :]).min(axis=1)
    return bool(np.all(d <= cov.radius(j)))


def covering_constants(cov: RadialCovering) -> dict:
    """Measured constants: cell diameter 2^j B, cell volume 2^jn C, A = (C/omega_n)^(1/n)."""
    diam = cov.diameter(0)
    vol = unit_ball_volume(cov.n) * cov.radius(0) ** cov.n
    return {"A": (vol / unit_ball_volume(cov.n)) ** (1.0 / cov.n), "B": diam, "C": vol}


def verify_regular(cov: RadialCovering, levels=None, density: int = 8,
                   eps_set=(0.5, 0.25, 0.125)) -> dict:
    """Check the regularity clauses of the covering sequence.

    Clause (i): every level covers its probed region, shell by shell.
    Clause (ii): multiplicity is finite and uniform in j, also after
    enlarging every ball by eps 2^-j.
    Clause (iii): diameters and volumes scale exactly like 2^-j and 2^-jn.
    """
    levels = list(range(cov.j_max + 1)) if levels is None else list(levels)
    scans = {j: scan_level(cov, j, density) for j in levels}
    clause1 = {
        "pass": all(s.shell_misses == 0 and s.union_misses == 0 for s in scans.values()),
        "shell_misses": {j: s.shell_misses for j, s in scans.items()},
        "union_misses": {j: s.union_misses for j, s in scans.items()},
        "axis_covered": all(axis_covered(cov, j, density) for j in levels),
    }
    mult = {j: s.multiplicity for j, s in scans.items()}
    eps_mult = {}
    for eps in eps_set:
        eps_mult[repr(eps)] = {j: scan_level(cov, j, density, eps).multiplicity for j in levels}
    uniform = len(set(mult.values())) == 1 and all(
        len(set(v.values())) == 1 for v in eps_mult.values())
    clause2 = {"pass": uniform and max(mult.values()) < np.inf,
               "multiplicity": mult, "enlarged_multiplicity": eps_mult}
    consts = covering_constants(cov)
    diam_ok = all(cov.diameter(j) * 2.0 ** j == consts["B"] for j in levels)
    vol_ok = all(
        unit_ball_volume(cov.n) * cov.radius(j) ** cov.n * 2.0 ** (j * cov.n)
        == consts["C"] for j in levels)
    scale_ok = all(np.array_equal(cov.all_centers(j) * 2.0 ** j, cov.all_centers(0))
                   for j in levels)
    clause3 = {"pass": diam_ok and vol_ok and scale_ok,
               "diameter_times_2^j": consts["B"], "volume_times_2^jn": consts["C"],
               "dilation_exact": scale_ok}
    return {
        "n": cov.n, "levels": levels, "density": density,
        "clauses": {"i": clause1, "ii": clause2, "iii": clause3},
        "constants": {"A_n": consts["A"], "B_n": consts["B"], "C_n": consts["C"]},
        "pass": clause1["pass"] and clause2["pass"] and clause3["pass"],
    }
