"""Counter-based Poisson sampling.

Every detector pixel owns an independent random stream keyed by
``(seed, view, row, col)``. Draw ``n`` of a stream is a pure function of the
key and ``n`` (SplitMix64 finalizer applied to ``key + (n + 1) * gamma``), so
samples do not depend on evaluation order, chunking or worker count.

Sampling method, fixed for reproducibility:

* mean < 10: sequential inversion of the CDF with one uniform per pixel;
* mean >= 10: Hoermann's transformed rejection with squeeze (PTRS), two
  uniforms per attempt.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
INVERSION_LIMIT = 10.0


def _mix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


def stream_keys(seed: int, shape) -> np.ndarray:
    """Per-pixel keys for a ``(views, rows, cols)`` block."""
    nk, nr, nc = shape
    if max(nr, nc) >= 1 << 21 or nk >= 1 << 21:
        raise ValueError("stack dimensions exceed the stream key layout")
    k = np.arange(nk, dtype=np.uint64)[:, None, None] << np.uint64(42)
    r = np.arange(nr, dtype=np.uint64)[None, :, None] << np.uint64(21)
    c = np.arange(nc, dtype=np.uint64)[None, None, :]
    base = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + _GAMMA)[0]
    return _mix((k | r | c) ^ base)


def uniforms(keys: np.ndarray, counter: np.ndarray) -> np.ndarray:
    """Uniform doubles in [0, 1) for draw number ``counter`` of each stream."""
    state = keys + (np.asarray(counter, dtype=np.uint64) + np.uint64(1)) * _GAMMA
    return (_mix(state) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def _inversion(lam, keys):
    u = uniforms(keys, np.zeros(keys.shape, dtype=np.uint64))
    k = np.zeros(lam.shape, dtype=np.int64)
    p = np.exp(-lam)
    cdf = p.copy()
    active = u > cdf
    # tail mass beyond k = 200 is below 1e-100 for lam < 10
    for step in range(1, 200):
        if not active.any():
            break
        k[active] += 1
        p = np.where(active, p * lam / step, p)
        cdf = np.where(active, cdf + p, cdf)
        active &= u > cdf
    return k


def _ptrs(lam, keys):
    slam = np.sqrt(lam)
    loglam = np.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2)
    out = np.zeros(lam.shape, dtype=np.int64)
    ctr = np.zeros(lam.shape, dtype=np.uint64)
    pending = np.ones(lam.shape, dtype=bool)
    while pending.any():
        idx = np.flatnonzero(pending)
        U = uniforms(keys[idx], ctr[idx]) - 0.5
        V = uniforms(keys[idx], ctr[idx] + np.uint64(1))
        ctr[idx] += np.uint64(2)
        us = 0.5 - np.abs(U)
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.floor((2 * a[idx] / us + b[idx]) * U + lam[idx] + 0.43)
            quick = (us >= 0.07) & (V <= vr[idx])
            reject = (k < 0) | ((us < 0.013) & (V > us))
            lhs = np.log(V) + np.log(invalpha[idx]) - np.log(a[idx] / (us * us) + b[idx])
            rhs = -lam[idx] + k * loglam[idx] - gammaln(k + 1)
        accept = quick | (~reject & (lhs <= rhs))
        done = idx[accept]
        out[done] = k[accept].astype(np.int64)
        pending[done] = False
    return out


def poisson(mean: np.ndarray, seed: int) -> np.ndarray:
    """Poisson counts for a ``(views, rows, cols)`` array of means."""
    mean = np.asarray(mean, dtype=float)
    if mean.ndim != 3:
        raise ValueError("mean must be a (views, rows, cols) array")
    if np.any(mean < 0) or not np.all(np.isfinite(mean)):
        raise ValueError("Poisson means must be finite and non-negative")
    keys = stream_keys(seed, mean.shape)
    out = np.zeros(mean.shape, dtype=np.int64)
    small = (mean > 0) & (mean < INVERSION_LIMIT)
    large = mean >= INVERSION_LIMIT
    if small.any():
        out[small] = _inversion(mean[small], keys[small])
    if large.any():
        out[large] = _ptrs(mean[large], keys[large])
    return out
