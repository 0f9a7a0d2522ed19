"""Report figures, rendered off-screen to PNG files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from fractions import Fraction  # noqa: E402

_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return str(path)


def plot_covering(cov, j: int, path, rings: int = 6):
    """Balls of the first few rings at level j."""
    fig, ax = plt.subplots(figsize=(5, 5))
    rb = cov.radius(j)
    for k in range(min(rings, cov.k_max + 1)):
        for c in cov.centers(j, k):
            ax.add_patch(plt.Circle(c[:2], rb, fill=False, lw=0.5, color=f"C{k % 10}"))
        ax.add_patch(plt.Circle((0, 0), cov.ring_radius(j, k), fill=False, lw=0.8,
                                ls="--", color="k"))
    lim = cov.ring_radius(j, rings) + rb
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_aspect("equal")
    ax.set_title(f"radial covering, level {j}, rings 0..{rings - 1}")
    return _save(fig, path)


def plot_decay(curves: list, path):
    """Normalized witness peaks against radius with fitted and predicted slopes."""
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for i, c in enumerate(curves):
        r = np.asarray(c["radii"])
        v = np.asarray(c["values"])
        ax.loglog(r, v, "o", color=f"C{i}", base=2, label=f"tau={c['tau']} (slope {c['slope']:.3f})")
        if c.get("predicted") is not None:
            e = float(Fraction(c["predicted"]))
            ax.loglog(r, v[0] * (r / r[0]) ** e, "--", color=f"C{i}", base=2,
                      label=f"predicted {c['predicted']}")
    ax.set_xlabel("radius")
    ax.set_ylabel("peak / norm")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_blowup(levels, values, path):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogy(levels, values, "o-", base=2)
    ax.set_xlabel("j")
    ax.set_ylabel("normalized witness value at |x| = 1")
    return _save(fig, path)


def plot_reconstruction(errors: dict, path):
    """Relative L2 error of partial reconstructions against the top level J."""
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, errs in errors.items():
        J = sorted(int(k) for k in errs)
        ax.semilogy(J, [max(errs[str(j)] if str(j) in errs else errs[j], 1e-17) for j in J],
                    "o-", label=str(label))
    ax.set_xlabel("J")
    ax.set_ylabel("relative L2 error")
    if len(errors) <= 12:
        ax.legend(fontsize=7)
    return _save(fig, path)

