"""Exponential-transition smooth steps shared by the frequency and radial cutoffs."""

import numpy as np


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1.

    Uses exp(-1/t) / (exp(-1/t) + exp(-1/(1-t))) on (0, 1), written as a
    logistic in 1/t - 1/(1-t) so that it never under- or overflows.
    """
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    inside = (t > 0.0) & (t < 1.0)
    if np.any(inside):
        ti = t[inside]
        z = 1.0 / ti - 1.0 / (1.0 - ti)
        out[inside] = 0.5 * (1.0 - np.tanh(0.5 * z))
    return out if out.ndim else float(out)


def plateau(t, a, b):
    """1 on [0, a], 0 on [b, inf), smooth and nonincreasing in between."""
    t = np.asarray(t, dtype=float)
    return smooth_step((b - t) / (b - a))
