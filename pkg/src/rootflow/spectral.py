"""Periodic grid functions and Fourier-multiplier operators on the circle.

Grid nodes are ``theta_i = -pi + 2*pi*i/N`` for ``i = 1..N``, so the last node
sits at ``pi`` and ``0`` is node ``N/2``.  All transforms go through ``rfft``;
the trigonometric interpolant is the symmetric truncated Fourier series in
which the Nyquist mode contributes a pure cosine.

Symbols used:

* hilbert        ``-i sgn(k)``   (Nyquist zeroed)
* derivative     ``i k``         (Nyquist zeroed)
* half_laplacian ``|k|``         (Nyquist kept)

With these conventions ``H cos = sin`` and ``Lambda = d/dx H`` on every mode
below Nyquist.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import ConvergenceError, PositivityError

TWO_PI = 2.0 * math.pi

Kind = Literal["hilbert", "half_laplacian", "derivative"]


def grid_nodes(N: int) -> np.ndarray:
    return -math.pi + TWO_PI * np.arange(1, N + 1) / N


def wrap_angle(x):
    """Reduce angles to ``(-pi, pi]``."""
    y = np.mod(np.asarray(x, dtype=float) + math.pi, TWO_PI) - math.pi
    y = np.where(y == -math.pi, math.pi, y)
    return y if np.ndim(y) else float(y)


@dataclass(frozen=True)
class GridFunction:
    """Real periodic function sampled at ``N`` uniform nodes (``N`` even)."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        if s.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if s.size == 0 or s.size % 2:
            raise ValueError(f"grid size must be even and positive, got {s.size}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_callable(cls, func, N: int) -> "GridFunction":
        return cls(func(grid_nodes(N)))

    @property
    def N(self) -> int:
        return self.samples.size

    @property
    def nodes(self) -> np.ndarray:
        return grid_nodes(self.N)

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    def rfft(self) -> np.ndarray:
        return np.fft.rfft(self.samples)

    def __add__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.samples + other.samples)
        return GridFunction(self.samples + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            return GridFunction(self.samples - other.samples)
        return GridFunction(self.samples - other)

    def __mul__(self, c):
        return GridFunction(self.samples * c)

    __rmul__ = __mul__


def _symbol(kind: str, N: int) -> np.ndarray:
    k = np.arange(N // 2 + 1, dtype=float)
    if kind == "hilbert":
        sym = -1j * np.sign(k)
        sym[-1] = 0.0
    elif kind == "derivative":
        sym = 1j * k
        sym[-1] = 0.0
    elif kind == "half_laplacian":
        sym = k.astype(complex)
    else:
        raise ValueError(f"unknown multiplier kind {kind!r}")
    return sym


def multiplier_transform(f: GridFunction, kind: Kind) -> GridFunction:
    """Apply the Fourier multiplier named by ``kind`` to ``f``."""
    coef = f.rfft() * _symbol(kind, f.N)
    return GridFunction(np.fft.irfft(coef, n=f.N))


def hilbert(f: GridFunction) -> GridFunction:
    return multiplier_transform(f, "hilbert")


def half_laplacian(f: GridFunction) -> GridFunction:
    return multiplier_transform(f, "half_laplacian")


def derivative(f: GridFunction, order: int = 1) -> GridFunction:
    for _ in range(order):
        f = multiplier_transform(f, "derivative")
    return f


def _phase(x, N: int) -> np.ndarray:
    # offset so that mode phases are measured from the first node
    x0 = -math.pi + TWO_PI / N
    return np.asarray(x, dtype=float) - x0


def _complex_weights(samples: np.ndarray) -> np.ndarray:
    c = np.fft.rfft(samples, axis=-1) / samples.shape[-1]
    c[..., 1:-1] *= 2.0
    return c


def _eval_series(C: np.ndarray, phase: np.ndarray, block: int = 32) -> np.ndarray:
    """``Re sum_k C[..., k] exp(i k phase)`` with a blocked phase table.

    ``k = q*block + r`` so only ``block + K/block`` complex exponentials per
    point are needed instead of ``K``.
    """
    K = C.shape[-1]
    Q = -(-K // block)
    Cp = np.zeros(C.shape[:-1] + (Q * block,), dtype=complex)
    Cp[..., :K] = C
    Cp = Cp.reshape(C.shape[:-1] + (Q, block))
    er = np.exp(1j * np.outer(phase, np.arange(block)))
    eq = np.exp(1j * np.outer(phase, block * np.arange(Q)))
    # inner[..., p, q] = sum_r Cp[..., q, r] er[p, r]
    inner = np.einsum("...qr,pr->...pq", Cp, er)
    return np.einsum("...pq,pq->...p", inner, eq).real


def interpolate(f, x):
    """Evaluate the trigonometric interpolant of ``f`` at ``x`` (scalar or array).

    ``f`` may also be a sequence of grid functions on the same grid, in which
    case the result has one row per function.  Direct summation, O(N) per point.
    """
    many = not isinstance(f, GridFunction)
    fs = list(f) if many else [f]
    N = fs[0].N
    C = _complex_weights(np.stack([g.samples for g in fs]))
    xs = np.atleast_1d(_phase(x, N))
    vals = _eval_series(C, xs)
    if many:
        return vals if np.ndim(x) else vals[:, 0]
    return vals[0] if np.ndim(x) else float(vals[0, 0])


@dataclass(frozen=True)
class CumulativeDensity:
    """``U(x) = integral of u over [-pi, x]`` for a strictly positive grid density."""

    u: GridFunction
    _coef: np.ndarray = field(init=False, repr=False)
    _anti: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if np.min(self.u.samples) <= 0:
            i = int(np.argmin(self.u.samples))
            raise PositivityError(
                f"density must be strictly positive; u({self.u.nodes[i]:.6g}) = "
                f"{self.u.samples[i]:.6g}"
            )
        C = _complex_weights(self.u.samples)
        k = np.arange(C.size)
        anti = np.zeros_like(C)
        anti[1:] = C[1:] / (1j * k[1:])
        object.__setattr__(self, "_coef", C)
        object.__setattr__(self, "_anti", anti)

    @property
    def total_mass(self) -> float:
        return TWO_PI * float(self._coef[0].real)

    def __call__(self, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        a0 = float(self._coef[0].real)
        N = self.u.N
        osc = _eval_series(self._anti[None, :], _phase(xs, N))[0]
        osc0 = _eval_series(self._anti[None, :], _phase(np.array([-math.pi]), N))[0, 0]
        vals = a0 * (xs + math.pi) + osc - osc0
        return vals if np.ndim(x) else float(vals[0])


def invert_cdf(U: CumulativeDensity, p, tol: float = 1e-13, max_iter: int = 200):
    """Solve ``U(x) = p`` on ``[-pi, pi]`` by bracketed Newton iteration.

    Accepts a scalar or an array of targets; the iteration is vectorised with
    an independent bracket per target.
    """
    ps = np.atleast_1d(np.asarray(p, dtype=float))
    mass = U.total_mass
    if np.any(ps < -tol) or np.any(ps > mass + tol):
        raise ValueError(f"p must lie in [0, {mass}]")
    lo = np.full(ps.shape, -math.pi)
    hi = np.full(ps.shape, math.pi)
    x = -math.pi + TWO_PI * ps / mass
    done = (ps <= 0.0) | (ps >= mass)
    x = np.where(ps <= 0.0, -math.pi, np.where(ps >= mass, math.pi, x))
    for _ in range(max_iter):
        active = ~done
        if not active.any():
            break
        xa = x[active]
        r = U(xa) - ps[active]
        conv = np.abs(r) <= tol
        # shrink brackets using the sign of the residual (U increasing)
        la, ha = lo[active], hi[active]
        la = np.where(r < 0, xa, la)
        ha = np.where(r > 0, xa, ha)
        step = r / interpolate(U.u, xa)
        xn = xa - step
        outside = (xn <= la) | (xn >= ha) | ~np.isfinite(xn)
        xn = np.where(outside, 0.5 * (la + ha), xn)
        conv |= np.abs(xn - xa) <= 1e-16 * max(1.0, math.pi)
        lo[active], hi[active] = la, ha
        x[active] = np.where(conv, xa, xn)
        idx = np.flatnonzero(active)
        done[idx[conv]] = True
    else:
        if not done.all():
            bad = np.flatnonzero(~done)
            raise ConvergenceError(
                f"inverse CDF did not converge for {bad.size} target(s); "
                "density may be non-positive or corrupted",
                index=int(bad[0]),
            )
    return x if np.ndim(p) else float(x[0])


@dataclass(frozen=True)
class ExtremumReport:
    vacuous: bool
    fraclap_residual: float = 0.0
    nmp_residual: float = 0.0
    hilbert_residual: float = 0.0
    scales: tuple = (0.0, 0.0, 0.0)

    def holds(self, rel_tol: float = 1e-6) -> bool:
        if self.vacuous:
            return True
        res = (self.fraclap_residual, self.nmp_residual, self.hilbert_residual)
        return all(r >= -rel_tol * s for r, s in zip(res, self.scales))


def _refine_extremum(f: GridFunction, i: int, sign: float) -> float:
    """Polish a discrete extremum location with Newton steps on the interpolant."""
    h = TWO_PI / f.N
    x = float(f.nodes[i])
    df = derivative(f)
    d2f = derivative(df)
    x_lo, x_hi = x - h, x + h
    for _ in range(20):
        g = interpolate(df, x)
        g2 = interpolate(d2f, x)
        if sign * g2 >= 0:
            break
        xn = x - g / g2
        if not (x_lo < xn < x_hi):
            break
        if abs(xn - x) < 1e-15:
            x = xn
            break
        x = xn
    # keep the grid node if refinement did not improve the extremum
    if sign * interpolate(f, x) < sign * f.samples[i]:
        x = float(f.nodes[i])
    return x


def extremum_inequality_check(f: GridFunction) -> ExtremumReport:
    """Evaluate the extremum inequalities for ``Lambda f`` and for ``v = f'``.

    Residuals are (larger side) minus (smaller side), so each must be
    non-negative:

    * ``Lambda f(x0) - (M-m)/pi cot(pi (fbar-m) / (2 (M-m)))`` at the max, and
      the mirrored bound at the min (the smaller of the two is reported);
    * ``8 pi V Lambda v(x0) - v(x0)^2`` at the max of ``v``;
    * ``16/pi V Lambda v(x0) - Hv(x0)^2`` at the max of ``v``.
    """
    s = f.samples
    V = float(s.max() - s.min())
    if V <= 1e-14 * max(1.0, float(np.abs(s).max())):
        return ExtremumReport(vacuous=True)
    lam_f = half_laplacian(f)
    x_max = _refine_extremum(f, int(np.argmax(s)), -1.0)
    x_min = _refine_extremum(f, int(np.argmin(s)), +1.0)
    M = interpolate(f, x_max)
    m = interpolate(f, x_min)
    fbar = f.mean
    amp = M - m
    bound_max = amp / math.pi / math.tan(math.pi * (fbar - m) / (2 * amp))
    bound_min = -amp / math.pi / math.tan(math.pi * (M - fbar) / (2 * amp))
    lam_max = interpolate(lam_f, x_max)
    lam_min = interpolate(lam_f, x_min)
    r_max = lam_max - bound_max
    r_min = bound_min - lam_min
    if r_max <= r_min:
        frac_res, frac_scale = r_max, abs(lam_max) + abs(bound_max)
    else:
        frac_res, frac_scale = r_min, abs(lam_min) + abs(bound_min)

    v = derivative(f)
    x0 = _refine_extremum(v, int(np.argmax(v.samples)), -1.0)
    v0 = interpolate(v, x0)
    lam_v0 = interpolate(half_laplacian(v), x0)
    hv0 = interpolate(hilbert(v), x0)
    V = amp
    lhs4, rhs4 = 8 * math.pi * V * lam_v0, v0**2
    lhs5, rhs5 = 16 / math.pi * V * lam_v0, hv0**2
    return ExtremumReport(
        vacuous=False,
        fraclap_residual=float(frac_res),
        nmp_residual=float(lhs4 - rhs4),
        hilbert_residual=float(lhs5 - rhs5),
        scales=(float(frac_scale), abs(lhs4) + rhs4, abs(lhs5) + rhs5),
    )
