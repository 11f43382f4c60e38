"""Compensated summation helpers.

The cotangent sums over root configurations mix terms of size O(n) with
opposite signs, so plain accumulation loses several digits.  Two flavours are
provided: a scalar Neumaier accumulator (``neumaier_sum``) and a vectorised
cascade (``compensated_sum``) that reduces along one axis of an array with
error-free pairwise additions.
"""

from __future__ import annotations

import numpy as np


def _two_sum(a, b):
    s = a + b
    bp = s - a
    err = (a - (s - bp)) + (b - bp)
    return s, err


def neumaier_sum(values) -> float:
    """Kahan-Babuska (Neumaier) summation of an iterable of floats."""
    total = 0.0
    carry = 0.0
    for v in values:
        v = float(v)
        t = total + v
        if abs(total) >= abs(v):
            carry += (total - t) + v
        else:
            carry += (v - t) + total
        total = t
    return total + carry


def compensated_sum(terms: np.ndarray, axis: int = -1) -> np.ndarray:
    """Sum ``terms`` along ``axis`` with pairwise two-sum compensation.

    Each level of the cascade adds neighbouring pairs exactly (value plus
    rounding error); the rounding errors are collected and added back at the
    end.  The result is as accurate as if computed in roughly twice the
    working precision, up to a condition-number factor.
    """
    x = np.moveaxis(np.asarray(terms, dtype=float), axis, -1)
    if x.shape[-1] == 0:
        return np.zeros(x.shape[:-1])
    errs = []
    while x.shape[-1] > 1:
        if x.shape[-1] % 2:
            pad = np.zeros(x.shape[:-1] + (1,))
            x = np.concatenate([x, pad], axis=-1)
        s, e = _two_sum(x[..., 0::2], x[..., 1::2])
        errs.append(e.sum(axis=-1))
        x = s
    out = x[..., 0]
    if errs:
        out = out + np.sum(errs, axis=0)
    return out
