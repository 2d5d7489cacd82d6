"""Fused per-entry loops for the AMP hot path.

Each kernel walks a ``(L, M)`` section-major array once.  Reductions run in
a fixed order so results do not depend on how callers batch the work.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _sigmoid(t):
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@njit(cache=True)
def pme_sections(r, d, tau, prior, out):
    """Posterior activity of every entry, one prior probability per entry."""
    L, M = r.shape
    for l in range(L):
        a = d[l] / (tau[l] * tau[l])
        b = 0.5 * d[l] * a
        for k in range(M):
            p = prior[l, k]
            t = a * r[l, k] - b + (np.log(p) - np.log1p(-p))
            out[l, k] = _sigmoid(t)


@njit(cache=True)
def pme_sections_flat(r, d, tau, logit_prior, out):
    """Posterior activity of every entry under one shared prior log-odds."""
    L, M = r.shape
    for l in range(L):
        a = d[l] / (tau[l] * tau[l])
        b = 0.5 * d[l] * a
        for k in range(M):
            out[l, k] = _sigmoid(a * r[l, k] - b + logit_prior)


@njit(cache=True)
def variance_sums(s):
    """Per-section ``sum(s - s^2)``."""
    L, M = s.shape
    out = np.zeros(L)
    for l in range(L):
        acc = 0.0
        for k in range(M):
            acc += s[l, k] * (1.0 - s[l, k])
        out[l] = acc
    return out
