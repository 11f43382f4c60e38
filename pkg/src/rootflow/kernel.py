"""Leading-order error-propagation kernel of the root flow.

After one differentiation the gap errors evolve, to leading order, as
``E_m += sum_{j != m} kappa(j, m) (E_j - E_m)`` with

    kappa(j, m) = 1 / (16 pi^2 n^2 (u^2 + Hu^2) sin^2((y_m - x_j) / 2)),

``u`` and ``Hu`` taken at ``x_m`` and ``y_m`` the derivative root in gap
``m``.  A row sum below one makes the recursion a contraction; the closed-form
majorant is ``F(a) = sin^2 a (1/3 + 1/a^2)`` with ``a = arccot(Hu/u)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coupling import ErrorVector, _arccot
from .errors import PoleError
from .spectral import GridFunction, hilbert, interpolate, wrap_angle
from .summation import compensated_sum
from .trigpoly import RootConfiguration


@dataclass(frozen=True)
class KernelRow:
    m: int
    indices: np.ndarray
    coefficients: np.ndarray

    @property
    def S(self) -> float:
        return float(np.sum(self.coefficients))


def match_gap_roots(roots_t: RootConfiguration, roots_next: RootConfiguration) -> np.ndarray:
    """Reorder ``roots_next`` so that entry ``m`` lies in gap ``(x_m, x_{m+1})``."""
    x, y = roots_t.roots, roots_next.roots
    k = np.searchsorted(x, y, side="right") - 1  # gap index; -1 means the wrap gap
    k = np.mod(k, x.size)
    if np.unique(k).size != x.size:
        raise PoleError("derivative roots do not interlace the input roots")
    out = np.empty_like(y)
    out[k] = y
    return out


def kernel_matrix(
    roots_t: RootConfiguration,
    roots_next: RootConfiguration,
    u: GridFunction,
    hu: GridFunction | None = None,
) -> np.ndarray:
    """All rows at once: ``K[m, j] = kappa(j, m)``, with zeros on the diagonal."""
    if hu is None:
        hu = hilbert(u)
    x = roots_t.roots
    n = roots_t.n
    y = match_gap_roots(roots_t, roots_next)
    um, hum = interpolate([u, hu], x)
    d = wrap_angle(y[:, None] - x[None, :])
    off = ~np.eye(x.size, dtype=bool)
    if np.any(np.abs(d[off]) < 1e-15):
        raise PoleError("a derivative root coincides with an input root")
    s2 = np.sin(0.5 * d) ** 2
    pref = 16.0 * math.pi**2 * n**2 * (um * um + hum * hum)
    with np.errstate(divide="ignore"):
        K = 1.0 / (pref[:, None] * s2)
    K[~off] = 0.0
    return K


def kappa_row(
    roots_t: RootConfiguration,
    roots_next: RootConfiguration,
    u: GridFunction,
    m: int,
    hu: GridFunction | None = None,
) -> KernelRow:
    K = kernel_matrix(roots_t, roots_next, u, hu)
    j = np.delete(np.arange(K.shape[0]), m)
    return KernelRow(m, j, K[m, j])


def F_bound(a):
    """Row-sum majorant ``sin^2(a) (1/3 + 1/a^2)`` on ``0 < a < pi``.

    At ``a = pi`` the value ``0`` is returned (the closed form extends
    continuously); the ``a -> 0`` limit is 1.
    """
    arr = np.asarray(a, dtype=float)
    if np.any(~(arr > 0)) or np.any(arr > math.pi):
        raise ValueError("F_bound is defined for 0 < a < pi")
    s = np.sin(arr)
    out = s * s * (1.0 / 3.0 + 1.0 / (arr * arr))
    out = np.where(arr == math.pi, 0.0, out)
    return out if out.ndim else float(out)


def row_sum_bounds(roots_t: RootConfiguration, u: GridFunction, hu: GridFunction | None = None):
    """``F(a)`` per gap with ``a = arccot(Hu/u)`` at the gap midpoints."""
    if hu is None:
        hu = hilbert(u)
    um, hum = interpolate([u, hu], roots_t.midpoints)
    return F_bound(_arccot(hum / um))


def mean_compatibility(E: ErrorVector, u: GridFunction) -> float:
    """``sum_j E_j u(xbar_j)``, which stays O(n^-2) when the total mass is 1."""
    return float(compensated_sum(E.entries * interpolate(u, E.midpoints)))


def envelope_constants(K: np.ndarray) -> tuple[float, float]:
    """Tightest ``c1, c2`` with ``c1/d^2 <= kappa <= c2/d^2`` over all off-diagonal entries.

    ``d`` is the cyclic index distance.
    """
    two_n = K.shape[0]
    idx = np.arange(two_n)
    fwd = (idx[None, :] - idx[:, None]) % two_n
    d = np.minimum(fwd, two_n - fwd).astype(float)
    off = d > 0
    scaled = K[off] * d[off] ** 2
    return float(scaled.min()), float(scaled.max())
