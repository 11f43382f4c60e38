"""Trigonometric polynomials of degree n with 2n distinct real roots.

Such a polynomial is ``p(x) = c * prod_j sin((x - x_j) / 2)`` and its
derivative satisfies ``p'(x) = p(x)/2 * sum_j cot((x - x_j) / 2)``.  The
derivative again has 2n distinct roots, exactly one in each cyclic gap
``(x_m, x_{m+1})``, which is what ``differentiate_roots`` exploits: in each gap
the cotangent sum is strictly decreasing from ``+inf`` to ``-inf``.

The leading factor ``c`` grows roughly like ``n`` per differentiation and
overflows a double after a few hundred steps, so it is stored as a sign and
a log-magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConvergenceError, DegenerateConfigurationError, PoleError
from .spectral import TWO_PI, wrap_angle
from .summation import compensated_sum

MIN_GAP = 1e-12
BRACKET_INSET = 1e-6
MAX_NEWTON = 200


def cyclic_gaps(roots: np.ndarray) -> np.ndarray:
    """Gaps ``x_{j+1} - x_j`` with the last one wrapping through ``pi``."""
    return np.diff(np.append(roots, roots[0] + TWO_PI))


@dataclass(frozen=True)
class RootConfiguration:
    roots: np.ndarray
    step_index: int = 0
    sign: float = 1.0
    log_abs_factor: float = 0.0
    n: int = field(init=False)

    def __post_init__(self):
        r = np.array(self.roots, dtype=float)
        if r.ndim != 1 or r.size == 0 or r.size % 2:
            raise DegenerateConfigurationError(
                f"need an even, positive number of roots, got {r.size}"
            )
        if np.any(r <= -math.pi) or np.any(r > math.pi):
            raise DegenerateConfigurationError("roots must lie in (-pi, pi]")
        if np.any(np.diff(r) <= 0):
            raise DegenerateConfigurationError("roots must be strictly increasing")
        if self.sign not in (1.0, -1.0):
            raise ValueError("sign must be +1 or -1")
        r.setflags(write=False)
        object.__setattr__(self, "roots", r)
        object.__setattr__(self, "n", r.size // 2)

    @classmethod
    def from_angles(cls, angles, **kw) -> "RootConfiguration":
        """Wrap arbitrary angles into ``(-pi, pi]`` and sort them."""
        return cls(np.sort(wrap_angle(np.asarray(angles, dtype=float))), **kw)

    @classmethod
    def lattice(cls, n: int, offset: float = 0.0) -> "RootConfiguration":
        """Uniform lattice ``x_j = -pi + j pi / n + offset``, ``j = 1..2n``."""
        return cls.from_angles(-math.pi + math.pi * np.arange(1, 2 * n + 1) / n + offset)

    @property
    def t(self) -> float:
        return self.step_index / (2 * self.n)

    @property
    def leading_factor(self) -> float:
        return self.sign * math.exp(self.log_abs_factor)

    @property
    def gaps(self) -> np.ndarray:
        return cyclic_gaps(self.roots)

    @property
    def midpoints(self) -> np.ndarray:
        return wrap_angle(self.roots + 0.5 * self.gaps)


def _cot_terms(roots: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = wrap_angle(y[:, None] - roots[None, :])
    if np.any(np.abs(d) < 1e-15):
        i, j = np.argwhere(np.abs(d) < 1e-15)[0]
        raise PoleError(f"probe point {y[i]!r} coincides with root {j}")
    return 1.0 / np.tan(0.5 * d)


def log_derivative_sum(cfg: RootConfiguration, y):
    """``sum_j cot((y - x_j)/2)`` with compensated accumulation.

    ``y`` may be a scalar or an array of probe points.
    """
    ys = np.atleast_1d(np.asarray(y, dtype=float))
    s = compensated_sum(_cot_terms(cfg.roots, ys), axis=-1)
    return s if np.ndim(y) else float(s[0])


def _regularized(x: np.ndarray, gaps: np.ndarray, idx: np.ndarray, y: np.ndarray):
    """Pole-free form of the per-gap equation and its slope.

    With ``a = (y - x_m)/2`` and ``b = (x_{m+1} - y)/2`` the cotangent sum is
    ``cot a - cot b + R(y)``; multiplying by ``sin a sin b > 0`` gives
    ``h = sin(b - a) + sin a sin b R(y)``, which has the same sign and the same
    single zero in the gap but no poles at its ends.
    """
    two_n = x.size
    a = 0.5 * (y - x[idx])
    b = 0.5 * (x[idx] + gaps[idx] - y)
    d = 0.5 * wrap_angle(y[:, None] - x[None, :])
    sn = np.sin(d)
    cot = np.cos(d) / sn
    csc2 = 1.0 / (sn * sn)
    rows = np.arange(idx.size)
    for cols in (idx, (idx + 1) % two_n):
        cot[rows, cols] = 0.0
        csc2[rows, cols] = 0.0
    R = compensated_sum(cot, axis=-1)
    dR = -0.5 * np.sum(csc2, axis=-1)
    sa, ca, sb, cb = np.sin(a), np.cos(a), np.sin(b), np.cos(b)
    h = np.sin(b - a) + sa * sb * R
    dh = -np.cos(b - a) + 0.5 * (ca * sb - sa * cb) * R + sa * sb * dR
    return h, dh


def gap_roots(cfg: RootConfiguration) -> np.ndarray:
    """Roots of ``p'`` in gap order: entry ``m`` lies in ``(x_m, x_{m+1})``.

    The last entry is not wrapped, so it may exceed ``pi``.  All gaps are
    solved simultaneously by Newton iteration on the pole-free form of the
    equation, safeguarded by bisection inside each gap's sign bracket.
    """
    x = cfg.roots
    gaps = cfg.gaps
    if gaps.min() < MIN_GAP:
        m = int(np.argmin(gaps))
        raise DegenerateConfigurationError(
            f"gap {m} has width {gaps[m]:.3e} < {MIN_GAP:g}; roots too clustered"
        )
    lo = x + BRACKET_INSET * gaps
    hi = x + (1.0 - BRACKET_INSET) * gaps
    tol = 1e-13 * np.maximum(1.0, gaps)
    y = x + 0.5 * gaps
    active = np.ones(x.size, dtype=bool)
    for _ in range(MAX_NEWTON):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        ya = y[idx]
        g, dg = _regularized(x, gaps, idx, ya)
        la = np.where(g > 0, ya, lo[idx])
        ha = np.where(g < 0, ya, hi[idx])
        newton = -g / dg
        converged = (g == 0) | (np.abs(newton) < tol[idx])
        yn = ya + newton
        bad = ~converged & ~((yn > la) & (yn < ha))
        yn = np.where(bad, 0.5 * (la + ha), yn)
        # a bracket squeezed below the resolution floor also ends the search
        converged |= (ha - la) < tol[idx]
        lo[idx], hi[idx] = la, ha
        y[idx] = np.where(g == 0, ya, yn)
        active[idx[converged]] = False
    if active.any():
        m = int(np.flatnonzero(active)[0])
        raise ConvergenceError(
            f"derivative root in gap {m} did not converge in {MAX_NEWTON} iterations",
            index=m,
        )
    return y


def _log_abs_product(roots: np.ndarray, x: float):
    s = np.sin(0.5 * (x - roots))
    return float(np.sum(np.log(np.abs(s)))), float(np.prod(np.sign(s)))


def _probe_point(x: np.ndarray, y: np.ndarray) -> float:
    """A point between ``y_0`` and the input root that follows it, away from both."""
    k = int(np.searchsorted(x, y[0], side="right"))
    nxt = x[k] if k < x.size else x[0] + TWO_PI
    return 0.5 * (y[0] + nxt)


def differentiate_roots(cfg: RootConfiguration) -> RootConfiguration:
    """Root configuration of ``p'`` together with its leading factor."""
    return assemble_derivative(cfg, gap_roots(cfg))


def assemble_derivative(cfg: RootConfiguration, y_gap: np.ndarray) -> RootConfiguration:
    """Package gap-ordered derivative roots as the configuration of ``p'``."""
    y = RootConfiguration.from_angles(y_gap).roots
    probe = _probe_point(cfg.roots, y)
    lp, sp = _log_abs_product(cfg.roots, probe)
    g = log_derivative_sum(cfg, probe)
    # p'(probe) = p(probe) * g / 2, kept in log form
    log_dp = cfg.log_abs_factor + lp + math.log(0.5 * abs(g))
    sign_dp = cfg.sign * sp * math.copysign(1.0, g)
    la, sa = _log_abs_product(y, probe)
    return RootConfiguration(
        y,
        step_index=cfg.step_index + 1,
        sign=float(sign_dp * sa),
        log_abs_factor=log_dp - la,
    )


def evaluate_product(cfg: RootConfiguration, x):
    """``c * prod_j sin((x - x_j)/2)``; log-magnitude accumulation for 2n > 64."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    s = np.sin(0.5 * (xs[:, None] - cfg.roots[None, :]))
    if cfg.roots.size <= 64:
        vals = cfg.leading_factor * np.prod(s, axis=-1)
    else:
        with np.errstate(divide="ignore"):
            logs = np.sum(np.log(np.abs(s)), axis=-1) + cfg.log_abs_factor
        sign = cfg.sign * np.prod(np.sign(s), axis=-1)
        vals = sign * np.exp(logs)
    return vals if np.ndim(x) else float(vals[0])


# ---------------------------------------------------------------------------
# coefficient-space oracle (independent of the cotangent machinery)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrigSeries:
    """``scale * (a_0 + sum_k a_k cos kx + b_k sin kx)``."""

    a: np.ndarray
    b: np.ndarray
    scale: float = 1.0

    def __call__(self, x):
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        k = np.arange(self.a.size)
        ph = np.outer(xs, k)
        vals = self.scale * (np.cos(ph) @ self.a + np.sin(ph) @ self.b)
        return vals if np.ndim(x) else float(vals[0])

    def derivative(self) -> "TrigSeries":
        k = np.arange(self.a.size, dtype=float)
        return TrigSeries(k * self.b, -k * self.a, self.scale)

    @property
    def degree(self) -> int:
        return self.a.size - 1


def coefficient_series(cfg: RootConfiguration, samples_per_degree: int = 16) -> TrigSeries:
    """Fourier coefficients of ``p`` from samples on a fine uniform grid."""
    n = cfg.n
    M = 1 << max(6, math.ceil(math.log2(samples_per_degree * n)))
    xg = TWO_PI * np.arange(M) / M
    s = np.sin(0.5 * (xg[:, None] - cfg.roots[None, :]))
    with np.errstate(divide="ignore"):
        logs = np.sum(np.log(np.abs(s)), axis=-1)
    signs = np.prod(np.sign(s), axis=-1)
    shift = logs.max()
    vals = signs * np.exp(logs - shift)
    c = np.fft.rfft(vals) / M
    a = 2.0 * c.real[: n + 1]
    b = -2.0 * c.imag[: n + 1]
    a[0] *= 0.5
    b[0] = 0.0
    return TrigSeries(a, b, scale=cfg.leading_factor * math.exp(shift))


def derivative_roots_oracle(cfg: RootConfiguration, scan_factor: int = 64, retries: int = 2):
    """Roots of ``p'`` via coefficient differentiation, sign scan and bisection.

    Meant for small instances (2n <= 512) and tests only.
    """
    if cfg.roots.size > 512:
        raise ValueError("oracle is limited to 2n <= 512")
    n = cfg.n
    series = coefficient_series(cfg)
    dp = TrigSeries(series.derivative().a, series.derivative().b, 1.0)
    S = scan_factor * 2 * n
    for _ in range(retries + 1):
        xs = -math.pi + TWO_PI * np.arange(S + 1) / S
        v = dp(xs)
        change = np.flatnonzero(np.signbit(v[:-1]) != np.signbit(v[1:]))
        if change.size == 2 * n:
            break
        S *= 2
    else:
        raise ConvergenceError(
            f"sign scan found {change.size} roots of p', expected {2 * n}"
        )
    lo, hi = xs[change].copy(), xs[change + 1].copy()
    flo = v[change]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.all((mid <= lo) | (mid >= hi)):
            break
        fm = dp(mid)
        left = np.signbit(fm) == np.signbit(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    roots = 0.5 * (lo + hi)
    out = RootConfiguration.from_angles(roots)
    probe = _probe_point(cfg.roots, out.roots)
    dval = series.derivative()(probe)
    la, sa = _log_abs_product(out.roots, probe)
    return replace(
        out,
        step_index=cfg.step_index + 1,
        sign=float(np.sign(dval) * sa),
        log_abs_factor=math.log(abs(dval)) - la,
    )
