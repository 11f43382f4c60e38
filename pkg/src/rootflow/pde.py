"""Pseudospectral integrator for ``u_t + (1/pi) (arctan(Hu/u))_x = 0`` on the circle.

The equation is advanced in conservative flux form with classical RK4.  The
flux is evaluated pointwise in physical space and truncated by the 2/3 rule
before the spectral derivative, so the mean of ``u`` is untouched up to
rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PositivityError
from .spectral import GridFunction, _symbol

SAFETY = 0.8
DT_REFRESH = 10


@dataclass(frozen=True)
class PdeState:
    u: GridFunction
    t: float = 0.0


@dataclass(frozen=True)
class ObservableRecord:
    t: float
    mean: float
    min: float
    max: float
    V: float
    du1_inf: float
    du2_inf: float
    du3_inf: float
    Hu_inf: float


class _Operators:
    """Cached spectral symbols for one grid size."""

    _cache: dict = {}

    def __new__(cls, N):
        ops = cls._cache.get(N)
        if ops is None:
            ops = super().__new__(cls)
            ops.N = N
            ops.hilbert = _symbol("hilbert", N)
            d = _symbol("derivative", N)
            k = np.arange(N // 2 + 1)
            # 2/3 rule: keep |k| <= N/3
            ops.dealiased_derivative = np.where(k <= N / 3, d, 0.0)
            cls._cache[N] = ops
        return ops


def _check_positive(u: np.ndarray, t=None):
    if u.min() <= 0:
        i = int(np.argmin(u))
        when = "" if t is None else f" at t={t:.6g}"
        raise PositivityError(
            f"density lost positivity{when}: u[{i}] = {u[i]:.3e}; "
            "the discretisation is unstable or the data is invalid"
        )


def _hilbert(u: np.ndarray, ops) -> np.ndarray:
    return np.fft.irfft(np.fft.rfft(u) * ops.hilbert, n=ops.N)


def _rhs(u: np.ndarray, ops) -> np.ndarray:
    _check_positive(u)
    hu = _hilbert(u, ops)
    flux = np.arctan(hu / u) / math.pi
    return -np.fft.irfft(np.fft.rfft(flux) * ops.dealiased_derivative, n=ops.N)


def rhs(u: GridFunction) -> GridFunction:
    """Time derivative ``-(1/pi) d/dx arctan(Hu/u)`` on the grid."""
    return GridFunction(_rhs(u.samples, _Operators(u.N)))


def stable_dt(u: GridFunction) -> float:
    """RK4 step from the stiffest linearised symbol: dissipation plus advection."""
    s = u.samples
    _check_positive(s)
    hu = _hilbert(s, _Operators(u.N))
    psi = hu / (s * s + hu * hu)
    lam = (u.N / 2) * (1.0 / (math.pi * s.min()) + np.abs(psi).max())
    return SAFETY * 2.0 / lam


def _rk4(u: np.ndarray, dt: float, ops) -> np.ndarray:
    k1 = _rhs(u, ops)
    k2 = _rhs(u + 0.5 * dt * k1, ops)
    k3 = _rhs(u + 0.5 * dt * k2, ops)
    k4 = _rhs(u + dt * k3, ops)
    out = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return out


def step(state: PdeState, dt: float) -> PdeState:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    out = _rk4(state.u.samples, dt, _Operators(state.u.N))
    _check_positive(out, state.t + dt)
    return PdeState(GridFunction(out), state.t + dt)


class Integrator:
    """Stateful driver that lands exactly on requested times.

    The automatic step is refreshed every ``DT_REFRESH`` steps; a step that
    would overshoot the next target is shortened to hit it.
    """

    def __init__(self, state: PdeState, dt_max: float | None = None):
        self.state = state
        self.dt_max = dt_max
        self.steps = 0
        self._dt = None

    def _auto_dt(self) -> float:
        if self._dt is None or self.steps % DT_REFRESH == 0:
            self._dt = stable_dt(self.state.u)
            if self.dt_max is not None:
                self._dt = min(self._dt, self.dt_max)
        return self._dt

    def advance_to(self, t_target: float) -> PdeState:
        ops = _Operators(self.state.u.N)
        u, t = self.state.u.samples, self.state.t
        if t_target < t:
            raise ValueError(f"cannot integrate backwards from {t} to {t_target}")
        while t < t_target:
            dt = self._auto_dt()
            remaining = t_target - t
            if remaining <= dt * (1 + 1e-12):
                dt, t_new = remaining, t_target
            else:
                t_new = t + dt
            u = _rk4(u, dt, ops)
            _check_positive(u, t_new)
            t = t_new
            self.steps += 1
            self.state = PdeState(GridFunction(u), t)
        return self.state


def evolve_to(state: PdeState, t_target: float, checkpoints=(), dt_max=None) -> list[PdeState]:
    """States at each checkpoint (and at ``t_target`` if it is not one of them)."""
    times = sorted(checkpoints)
    if times and (times[0] < state.t or times[-1] > t_target):
        raise ValueError("checkpoints must lie within [state.t, t_target]")
    if not times or times[-1] != t_target:
        times.append(t_target)
    integ = Integrator(state, dt_max=dt_max)
    return [integ.advance_to(tc) for tc in times]


def observables(state: PdeState) -> ObservableRecord:
    u = state.u.samples
    ops = _Operators(state.u.N)
    coef = np.fft.rfft(u)
    d = _symbol("derivative", state.u.N)
    norms = []
    for order in (1, 2, 3):
        norms.append(float(np.abs(np.fft.irfft(coef * d**order, n=ops.N)).max()))
    hu = _hilbert(u, ops)
    lo, hi = float(u.min()), float(u.max())
    return ObservableRecord(
        t=state.t,
        mean=float(np.mean(u)),
        min=lo,
        max=hi,
        V=hi - lo,
        du1_inf=norms[0],
        du2_inf=norms[1],
        du3_inf=norms[2],
        Hu_inf=float(np.abs(hu).max()),
    )


def cosine_density(N: int, amplitude: float, k: int = 1, mass: float = 1.0) -> GridFunction:
    """``mass/(2 pi) * (1 + amplitude cos kx)`` on ``N`` nodes."""
    return GridFunction.from_callable(
        lambda x: mass / (2 * math.pi) * (1.0 + amplitude * np.cos(k * x)), N
    )
