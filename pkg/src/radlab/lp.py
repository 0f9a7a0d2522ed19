"""Grid functions and Littlewood-Paley frequency blocks.

A GridFunction samples a function on the cube [-R, R]^n at the points
x_i = -R + i h, h = 2R/N.  Blocks phi_j * f are computed by multiplying the
discrete Fourier transform with phi_hat(2^-j xi), where xi runs over the
angular frequencies 2 pi k / (N h).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from ._smooth import smooth_step
from .errors import InsufficientRange, LevelTooFine, SupportError
from .profile import RadialProfile

GFN_MAGIC = b"GFN1"
_GFN_HEADER = struct.Struct("<4sIIdB11x")
SUPPORT_TOL = 1e-10
_WORKERS = 1


def set_workers(n: int) -> None:
    """Number of threads used by the FFTs."""
    global _WORKERS
    _WORKERS = max(1, int(n))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples on the uniform grid over [-R, R]^n with N points per axis."""

    n: int
    R: float
    N: int
    samples: np.ndarray

    def __post_init__(self):
        N = self.N
        if N < 8 or N & (N - 1):
            raise ValueError(f"N must be a power of two >= 8, got {N}")
        if not self.R > 0:
            raise ValueError("R must be positive")
        s = np.asarray(self.samples)
        if s.shape != (N,) * self.n:
            raise ValueError(f"samples must have shape {(N,) * self.n}, got {s.shape}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def h(self) -> float:
        return 2.0 * self.R / self.N

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.samples)

    def axis(self) -> np.ndarray:
        return -self.R + self.h * np.arange(self.N)

    def radius(self) -> np.ndarray:
        """|x| at every grid point."""
        ax2 = self.axis() ** 2
        r2 = np.zeros((self.N,) * self.n)
        for d in range(self.n):
            shape = [1] * self.n
            shape[d] = self.N
            r2 = r2 + ax2.reshape(shape)
        return np.sqrt(r2)

    def with_samples(self, samples) -> "GridFunction":
        return GridFunction(self.n, self.R, self.N, np.asarray(samples))

    def lp_norm(self, p: float) -> float:
        a = np.abs(self.samples)
        if math.isinf(p):
            return float(a.max())
        return float((self.h ** self.n * np.sum(a ** p)) ** (1.0 / p))

    def __add__(self, other):
        return self.with_samples(self.samples + other.samples)

    def __sub__(self, other):
        return self.with_samples(self.samples - other.samples)

    def __mul__(self, c):
        return self.with_samples(c * self.samples)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# frequency profiles

def _low_sq(rho):
    """|Phi_hat|^2: 1 on [0, 1], 0 on [2, inf)."""
    return smooth_step(2.0 - np.asarray(rho, float))


def _band_sq(rho):
    """|phi_hat|^2 = low(rho) - low(2 rho), written without cancellation."""
    rho = np.asarray(rho, float)
    return np.where(rho <= 1.0, smooth_step(2.0 * rho - 1.0), smooth_step(2.0 - rho))


class LPPair:
    """Littlewood-Paley pair with Calderon duals.

    ``Phi_hat`` is the square root of a smooth step from 1 (|xi| <= 1) to
    0 (|xi| >= 2) and ``phi_hat(xi) = sqrt(step(xi) - step(2 xi))``, so that
    phi_hat vanishes outside 1/2 <= |xi| <= 2.  The duals are
    ``Phi_hat / G`` and ``phi_hat / G`` with G the Calderon sum.
    """

    low_support = 2.0
    band_support = (0.5, 2.0)

    def Phi_hat(self, rho):
        return np.sqrt(_low_sq(rho))

    def phi_hat(self, rho):
        return np.sqrt(_band_sq(rho))

    def G(self, rho):
        """|Phi_hat|^2 + sum_{j>=1} |phi_hat(2^-j xi)|^2, summed numerically."""
        rho = np.asarray(rho, float)
        g = _low_sq(rho)
        top = float(rho.max()) if rho.size else 0.0
        jt = max(1, int(math.ceil(math.log2(max(top, 1.0)))) + 2)
        for j in range(1, jt + 1):
            u = rho * 2.0 ** (-j)
            m = (u > 0.5) & (u < 2.0)
            if np.any(m):
                g = g + np.where(m, _band_sq(u), 0.0)
        return g

    def Psi_hat(self, rho):
        return self.Phi_hat(rho) / self.G(rho)

    def psi_hat(self, rho):
        return self.phi_hat(rho) / self.G(rho)

    def block_multiplier(self, rho, j, dual=False):
        if j == 0:
            return self.Psi_hat(rho) if dual else self.Phi_hat(rho)
        u = np.asarray(rho, float) * 2.0 ** (-j)
        return self.psi_hat(u) if dual else self.phi_hat(u)

    def calderon_sum(self, rho):
        """Psi_hat conj(Phi_hat) + sum_j psi_hat(2^-j .) conj(phi_hat(2^-j .))."""
        rho = np.asarray(rho, float)
        total = self.Psi_hat(rho) * np.conj(self.Phi_hat(rho))
        top = float(rho.max()) if rho.size else 0.0
        jt = max(1, int(math.ceil(math.log2(max(top, 1.0)))) + 2)
        for j in range(1, jt + 1):
            u = rho * 2.0 ** (-j)
            total = total + self.psi_hat(u) * np.conj(self.phi_hat(u))
        return total

    def lower_bounds(self, samples=2001) -> dict:
        """Realized lower bounds of |Phi_hat| on |xi| <= 5/3 and |phi_hat| on [3/5, 5/3]."""
        a = np.linspace(0, 5 / 3, samples)
        b = np.linspace(3 / 5, 5 / 3, samples)
        return {"Phi": float(self.Phi_hat(a).min()), "phi": float(self.phi_hat(b).min())}


_DEFAULT_PAIR = LPPair()


def make_lp_pair() -> LPPair:
    return LPPair()


# ---------------------------------------------------------------------------
# grid frequency machinery

@lru_cache(maxsize=16)
def _freq_radius(n: int, N: int, h: float, real: bool) -> np.ndarray:
    xi = 2.0 * np.pi * np.fft.fftfreq(N, d=h)
    last = 2.0 * np.pi * np.fft.rfftfreq(N, d=h) if real else xi
    r2 = np.zeros([N] * (n - 1) + [last.size])
    for d in range(n):
        ax = last if d == n - 1 else xi
        shape = [1] * n
        shape[d] = ax.size
        r2 = r2 + (ax ** 2).reshape(shape)
    out = np.sqrt(r2)
    out.setflags(write=False)
    return out


def max_admissible_level(h: float) -> int:
    """Largest j with 2^(j+1) < pi / h, or -1 if even the low-pass band is too wide."""
    nyq = math.pi / h
    j = -1
    while 2.0 ** (j + 2) < nyq:
        j += 1
    return j


def default_j_max(h: float) -> int:
    """floor(log2(pi / (2h)) - 1), clipped to the admissible range."""
    return max(0, min(max_admissible_level(h), int(math.floor(math.log2(math.pi / (2 * h)) - 1))))


def check_support(f: GridFunction, tol: float = SUPPORT_TOL) -> float:
    """Relative size of f outside [-R/2, R/2]^n; raises SupportError above tol."""
    a = np.abs(f.samples)
    top = float(a.max()) if a.size else 0.0
    if top == 0.0:
        return 0.0
    outside = np.abs(f.axis()) > f.R / 2
    mask = np.zeros(a.shape, bool)
    for d in range(f.n):
        shape = [1] * f.n
        shape[d] = f.N
        mask |= outside.reshape(shape)
    rel = float(a[mask].max()) / top if np.any(mask) else 0.0
    if rel > tol:
        raise SupportError(
            f"input not supported in [-R/2, R/2]^n: relative mass {rel:.2e} outside")
    return rel


class _Spectrum:
    """Forward transform of f kept for repeated block extraction."""

    def __init__(self, f: GridFunction):
        self.f = f
        self.real = not f.is_complex
        axes = tuple(range(f.n))
        if self.real:
            self.F = sfft.rfftn(f.samples, axes=axes, workers=_WORKERS)
        else:
            self.F = sfft.fftn(f.samples, axes=axes, workers=_WORKERS)
        self.rho = _freq_radius(f.n, f.N, f.h, self.real)

    def apply(self, mult) -> np.ndarray:
        f = self.f
        axes = tuple(range(f.n))
        G = self.F * mult
        if self.real:
            return sfft.irfftn(G, s=(f.N,) * f.n, axes=axes, workers=_WORKERS)
        return sfft.ifftn(G, axes=axes, workers=_WORKERS)


def _check_level(f, j):
    if j < 0:
        raise ValueError("level must be nonnegative")
    ja = max_admissible_level(f.h)
    if j > ja:
        raise LevelTooFine(j, ja)


def lp_block(f: GridFunction, j: int, pair: LPPair | None = None, *,
             dual: bool = False, check: bool = True) -> GridFunction:
    """phi_j * f (Phi * f for j = 0), or the dual block with ``dual=True``.

    Raises
    ------
    LevelTooFine
        If the band 2^(j+1) reaches the grid's Nyquist frequency pi/h.
    """
    return lp_blocks(f, [j], pair, dual=dual, check=check)[0]


def lp_blocks(f: GridFunction, levels, pair: LPPair | None = None, *,
              dual: bool = False, check: bool = True) -> list:
    """Blocks for several levels from a single forward transform."""
    pair = pair or _DEFAULT_PAIR
    levels = list(levels)
    for j in levels:
        _check_level(f, j)
    if check:
        check_support(f)
    spec = _Spectrum(f)
    return [f.with_samples(spec.apply(pair.block_multiplier(spec.rho, j, dual)))
            for j in levels]


def resynthesize(f: GridFunction, pair: LPPair | None = None, j_max: int | None = None,
                 check: bool = True) -> GridFunction:
    """Psi * (Phi~ * f) + sum_j psi_j * (phi~_j * f), block by block.

    phi~(x) = conj(phi(-x)) has multiplier conj(phi_hat); every block
    goes through two separate grid convolutions.
    """
    pair = pair or _DEFAULT_PAIR
    if j_max is None:
        j_max = max_admissible_level(f.h)
    if check:
        check_support(f)
    spec = _Spectrum(f)
    total = np.zeros(f.samples.shape, dtype=np.result_type(f.samples, float))
    for j in range(j_max + 1):
        _check_level(f, j)
        g = f.with_samples(spec.apply(np.conj(pair.block_multiplier(spec.rho, j))))
        inner = _Spectrum(g)
        total = total + inner.apply(pair.block_multiplier(inner.rho, j, dual=True))
    return f.with_samples(total)


def block_spectrum_leak(block: GridFunction, j: int) -> float:
    """Largest |DFT| of a block outside 2^(j-1) <= |xi| <= 2^(j+1), relative to its max."""
    spec = _Spectrum(block)
    a = np.abs(spec.F)
    top = float(a.max())
    if top == 0.0:
        return 0.0
    lo = 0.0 if j == 0 else 2.0 ** (j - 1)
    out = (spec.rho < lo * (1 - 1e-12)) | (spec.rho > 2.0 ** (j + 1) * (1 + 1e-12))
    return float(a[out].max()) / top if np.any(out) else 0.0


# ---------------------------------------------------------------------------
# sampling and I/O

def sample_radial(profile: RadialProfile, R: float, N: int) -> GridFunction:
    """Samples of x -> profile(|x|) on the grid over [-R, R]^n.

    Raises
    ------
    InsufficientRange
        If the profile does not reach the corner radius R sqrt(n).
    """
    n = profile.n
    if profile.r_max < R * math.sqrt(n) * (1 - 1e-12):
        raise InsufficientRange(
            f"profile reaches r={profile.r_max}, grid needs {R * math.sqrt(n)}")
    g = GridFunction(n, R, N, np.zeros((N,) * n))
    rad = g.radius()
    vals = profile(np.minimum(rad, profile.r_max))
    return g.with_samples(np.asarray(vals).reshape(rad.shape))


def write_gfn(path, f: GridFunction) -> None:
    cplx = f.is_complex
    head = _GFN_HEADER.pack(GFN_MAGIC, f.n, f.N, float(f.R), 1 if cplx else 0)
    data = np.ascontiguousarray(f.samples, dtype="<c16" if cplx else "<f8")
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(data.tobytes(order="C"))


def read_gfn(path) -> GridFunction:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _GFN_HEADER.size:
        raise ValueError("truncated GFN1 file")
    magic, n, N, R, cplx = _GFN_HEADER.unpack_from(raw)
    if magic != GFN_MAGIC:
        raise ValueError("not a GFN1 file")
    dt = np.dtype("<c16" if cplx else "<f8")
    expected = N ** n * dt.itemsize
    body = raw[_GFN_HEADER.size:]
    if len(body) != expected:
        raise ValueError(f"GFN1 payload has {len(body)} bytes, expected {expected}")
    arr = np.frombuffer(body, dtype=dt).reshape((N,) * n).astype(dt.newbyteorder("="))
    return GridFunction(int(n), float(R), int(N), arr)
