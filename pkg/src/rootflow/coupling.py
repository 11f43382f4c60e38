"""Coupling between root configurations and the density PDE.

A configuration of 2n roots is compared with a density ``u`` through the gap
errors ``E_j = (x_{j+1} - x_j) - 1/(2n u(xbar_j))``.  One differentiation of
the polynomial corresponds to a time step ``1/(2n)`` of the PDE, so a coupled
run alternates ``differentiate_roots`` with PDE integration to the times
``k/(2n)`` and records how far the two descriptions drift apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Iterator

import numpy as np

from .errors import ConfigError, RootflowError
from .pde import Integrator, PdeState, observables
from .spectral import (
    TWO_PI,
    CumulativeDensity,
    GridFunction,
    hilbert,
    interpolate,
    invert_cdf,
    wrap_angle,
)
from .summation import compensated_sum
from .trigpoly import RootConfiguration, assemble_derivative, gap_roots

MASS_TOL = 1e-10


@dataclass(frozen=True)
class ErrorVector:
    entries: np.ndarray
    gaps: np.ndarray
    midpoints: np.ndarray

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.entries).max())


@dataclass(frozen=True)
class DensitySpec:
    """Initial density: a normalised cosine bump or explicit Fourier modes.

    ``fourier`` densities are ``a0 + sum_k cos[k-1] cos kx + sin[k-1] sin kx``
    and are not renormalised.
    """

    kind: str = "cosine"
    amplitude: float = 0.5
    a0: float = 1.0 / TWO_PI
    cos: tuple = ()
    sin: tuple = ()

    def grid(self, N: int) -> GridFunction:
        if self.kind == "cosine":
            return GridFunction.from_callable(
                lambda x: (1.0 + self.amplitude * np.cos(x)) / TWO_PI, N
            )
        if self.kind == "fourier":
            def f(x):
                out = np.full_like(x, self.a0)
                for k, c in enumerate(self.cos, start=1):
                    out += c * np.cos(k * x)
                for k, s in enumerate(self.sin, start=1):
                    out += s * np.sin(k * x)
                return out
            return GridFunction.from_callable(f, N)
        raise ConfigError(f"unknown density type {self.kind!r}")

    @property
    def max_mode(self) -> int:
        if self.kind == "cosine":
            return 1
        return max(len(self.cos), len(self.sin), 0)


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    N: int | None = None
    density: DensitySpec = field(default_factory=DensitySpec)
    Z0: float = 0.0
    eps: float = 0.5
    seed: int = 0
    t_final: float = 1.0
    checkpoint_stride: int = 1
    output: str | None = None
    tolerances: dict = field(default_factory=dict)
    sweep_ns: tuple = (32, 64, 128, 256)
    sweep_times: tuple = (0.25, 0.5)
    kernel_times: tuple = (0.0, 0.25, 0.5, 1.0)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be a positive integer")
        if self.N is None:
            object.__setattr__(self, "N", default_grid_size(self.n))
        if self.N % 2 or self.N <= 2 * self.density.max_mode:
            raise ConfigError(f"grid size N={self.N} must be even and resolve the density")
        if self.checkpoint_stride < 1:
            raise ConfigError("checkpoint_stride must be >= 1")
        if self.t_final < 0:
            raise ConfigError("t_final must be non-negative")
        u = self.density.grid(self.N)
        s = u.samples
        if s.min() <= 0:
            i = int(np.argmin(s))
            raise ConfigError(
                f"density must be strictly positive; u({u.nodes[i]:.6g}) = {s[i]:.6g}"
            )
        mass = TWO_PI * u.mean
        if abs(mass - 1.0) > MASS_TOL:
            raise ConfigError(f"density must have total mass 1, measured {mass:.12g}")

    @property
    def steps(self) -> int:
        return int(round(self.t_final * 2 * self.n))

    def with_(self, **kw) -> "ExperimentConfig":
        vals = {f.name: getattr(self, f.name) for f in fields(self)}
        vals.update(kw)
        if "n" in kw and "N" not in kw:
            vals["N"] = None
        return ExperimentConfig(**vals)


def default_grid_size(n: int) -> int:
    return max(256, 8 * n)


def quantile_init(u0: GridFunction, n: int) -> RootConfiguration:
    """Roots at ``U^{-1}((j - 1/2)/(2n))`` so each arc carries mass ``1/(2n)``."""
    U = CumulativeDensity(u0)
    if abs(U.total_mass - 1.0) > MASS_TOL:
        raise ConfigError(f"density must have total mass 1, got {U.total_mass:.12g}")
    p = (np.arange(1, 2 * n + 1) - 0.5) / (2 * n)
    return RootConfiguration(invert_cdf(U, p))


def perturb_roots(cfg: RootConfiguration, Z0: float, eps: float, seed: int) -> RootConfiguration:
    """Add i.i.d. uniform offsets of size at most ``Z0 n^{-1-eps}`` to every root."""
    if Z0 == 0:
        return cfg
    if Z0 < 0 or eps <= 0:
        raise ValueError("need Z0 >= 0 and eps > 0")
    delta = Z0 * cfg.n ** (-1.0 - eps)
    if delta >= 0.25 * cfg.gaps.min():
        raise ConfigError(
            f"perturbation {delta:.3e} exceeds a quarter of the minimum gap "
            f"{cfg.gaps.min():.3e} at n={cfg.n}"
        )
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-delta, delta, size=cfg.roots.size)
    return RootConfiguration.from_angles(
        cfg.roots + offsets,
        step_index=cfg.step_index,
        sign=cfg.sign,
        log_abs_factor=cfg.log_abs_factor,
    )


def error_vector(cfg: RootConfiguration, u: GridFunction) -> ErrorVector:
    gaps = cfg.gaps
    mid = cfg.midpoints
    u_mid = interpolate(u, mid)
    return ErrorVector(gaps - 1.0 / (2 * cfg.n * u_mid), gaps, mid)


def _arccot(z):
    # branch with values in (0, pi)
    return 0.5 * math.pi - np.arctan(z)


def _splits(n: int, um, hum):
    z = hum / um
    scale = 1.0 / (TWO_PI * n * um)
    return scale * _arccot(-z), scale * _arccot(z)


def predict_gap_splits(cfg: RootConfiguration, u: GridFunction, hu: GridFunction | None = None):
    """Leading-order sub-gaps ``(y_m - x_m, x_{m+1} - y_m)`` for every gap.

    ``y_m - x_m = arccot(-Hu/u) / (2 pi n u)`` and
    ``x_{m+1} - y_m = arccot(Hu/u) / (2 pi n u)`` with ``u, Hu`` taken at the
    gap midpoint.
    """
    if hu is None:
        hu = hilbert(u)
    um, hum = interpolate([u, hu], cfg.midpoints)
    return _splits(cfg.n, um, hum)


def predict_gap_split(cfg: RootConfiguration, u: GridFunction, m: int, hu=None):
    left, right = predict_gap_splits(cfg, u, hu)
    return float(left[m]), float(right[m])


@dataclass(frozen=True)
class GapBoundReport:
    far_ratio: float  # min over j != m, m+1 of |y_m - x_j| / (|m-j| / (8 |u|_inf n))
    near_ratio: float  # min over m of min(y_m - x_m, x_{m+1} - y_m) / (c(u) / (2n))

    @property
    def ok(self) -> bool:
        return self.far_ratio >= 1.0 and self.near_ratio >= 1.0


def gap_bounds(cfg: RootConfiguration, y_gap: np.ndarray, u: GridFunction, hu=None) -> GapBoundReport:
    """Check the lower bounds on derivative-root distances to the old roots."""
    if hu is None:
        hu = hilbert(u)
    x = cfg.roots
    two_n = x.size
    n = cfg.n
    idx = np.arange(two_n)
    fwd = (idx[None, :] - idx[:, None]) % two_n  # j - m, cyclic
    dist_idx = np.minimum(fwd, two_n - fwd).astype(float)
    far = (fwd != 0) & (fwd != 1)
    ang = np.abs(wrap_angle(y_gap[:, None] - x[None, :]))
    bound = dist_idx / (8.0 * np.abs(u.samples).max() * n)
    far_ratio = float(np.min(ang[far] / bound[far]))

    left = y_gap - x
    right = x[(idx + 1) % two_n] + np.where(idx == two_n - 1, TWO_PI, 0.0) - y_gap
    mid = cfg.midpoints
    um = interpolate(u, mid)
    a = _arccot(interpolate(hu, mid) / um)
    c = np.minimum(a, math.pi - a) / (TWO_PI * um)
    near_ratio = float(np.min(np.minimum(left, right) / (0.5 * c / n)))
    return GapBoundReport(far_ratio, near_ratio)


@dataclass(frozen=True)
class CoupledRecord:
    t: float
    E_inf: float
    V: float
    mean_u: float
    min_u: float
    sum_E_u: float
    gap_dev_max: float
    pred_resid_max: float
    du1_inf: float
    du2_inf: float
    du3_inf: float
    Hu_inf: float


COLUMNS = tuple(f.name for f in fields(CoupledRecord))


@dataclass
class CoupledSnapshot:
    """Everything known at checkpoint ``k``: roots, PDE state and ``p'`` roots."""

    k: int
    cfg: RootConfiguration
    state: PdeState
    hu: GridFunction
    y_gap: np.ndarray

    @property
    def t(self) -> float:
        return self.state.t


def initial_roots(config: ExperimentConfig, u0: GridFunction) -> RootConfiguration:
    cfg = quantile_init(u0, config.n)
    return perturb_roots(cfg, config.Z0, config.eps, config.seed)


def iterate_coupled(config: ExperimentConfig) -> Iterator[CoupledSnapshot]:
    """Yield a snapshot at every checkpoint ``k = 0..2n t_final``."""
    n = config.n
    u0 = config.density.grid(config.N)
    cfg = initial_roots(config, u0)
    integ = Integrator(PdeState(u0, 0.0))
    for k in range(config.steps + 1):
        if k > 0:
            cfg = assemble_derivative(cfg, y_gap)
            integ.advance_to(k / (2 * n))
        state = integ.state
        y_gap = gap_roots(cfg)
        yield CoupledSnapshot(k, cfg, state, hilbert(state.u), y_gap)


def snapshot_record(snap: CoupledSnapshot) -> CoupledRecord:
    cfg, u = snap.cfg, snap.state.u
    gaps = cfg.gaps
    um, hum = interpolate([u, snap.hu], cfg.midpoints)
    E = gaps - 1.0 / (2 * cfg.n * um)
    left, _ = _splits(cfg.n, um, hum)
    resid = float(np.abs((snap.y_gap - cfg.roots) - left).max())
    obs = observables(snap.state)
    return CoupledRecord(
        t=snap.t,
        E_inf=float(np.abs(E).max()),
        V=obs.V,
        mean_u=obs.mean,
        min_u=obs.min,
        sum_E_u=float(compensated_sum(E * um)),
        gap_dev_max=float(np.abs(gaps - math.pi / cfg.n).max()),
        pred_resid_max=resid,
        du1_inf=obs.du1_inf,
        du2_inf=obs.du2_inf,
        du3_inf=obs.du3_inf,
        Hu_inf=obs.Hu_inf,
    )


class CoupledRunAborted(RootflowError):
    """An engine failure mid-run; ``partial`` holds the records emitted so far."""

    def __init__(self, cause: RootflowError, partial: list):
        super().__init__(f"coupled run aborted after {len(partial)} record(s): {cause}")
        self.cause = cause
        self.partial = partial


def run_coupled(config: ExperimentConfig) -> list[CoupledRecord]:
    """Time series of coupled diagnostics at every ``checkpoint_stride``-th step."""
    stride = config.checkpoint_stride
    records = []
    try:
        for snap in iterate_coupled(config):
            if snap.k % stride == 0 or snap.k == config.steps:
                records.append(snapshot_record(snap))
    except RootflowError as exc:
        raise CoupledRunAborted(exc, records) from exc
    return records
