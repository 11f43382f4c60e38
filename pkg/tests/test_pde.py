import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_bandlimited
from rootflow.errors import PositivityError
from rootflow.pde import (
    Integrator,
    PdeState,
    cosine_density,
    evolve_to,
    observables,
    rhs,
    stable_dt,
    step,
)
from rootflow.spectral import GridFunction

UBAR = 1 / (2 * math.pi)
SIGMA = 4 / math.pi


def test_constant_is_steady():
    u = GridFunction(np.full(128, UBAR))
    assert np.abs(rhs(u).samples).max() <= 1e-13
    s = step(PdeState(u), 0.01)
    assert np.array_equal(s.u.samples, u.samples)
    out = evolve_to(PdeState(u), 1.0)
    assert np.abs(out[-1].u.samples - UBAR).max() <= 1e-13


def test_rhs_preserves_evenness():
    u = GridFunction.from_callable(lambda x: UBAR * (1 + 0.3 * np.cos(x) + 0.2 * np.cos(3 * x)), 128)
    r = rhs(u).samples
    # x -> -x maps node i to node N-2-i (mod N); node N-1 sits at pi
    mirror = np.roll(r[::-1], -1)
    assert np.abs(r - mirror).max() <= 1e-10


def test_rhs_linearization():
    eps = 0.01
    u = GridFunction.from_callable(lambda x: UBAR * (1 + eps * np.cos(x)), 128)
    r = rhs(u)
    cos_coef = lambda k: 2 * np.mean(r.samples * np.cos(k * r.nodes))
    lin = -2 * eps * UBAR
    # first harmonic matches the linearised operator
    assert abs(cos_coef(1) - lin) <= 5e-4 * abs(lin)
    # the remainder is the quadratic term, proportional to eps^2 cos 2x
    assert cos_coef(2) == pytest.approx(eps**2 / math.pi, rel=1e-3)


def test_rhs_rejects_nonpositive():
    with pytest.raises(PositivityError):
        rhs(GridFunction.from_callable(lambda x: np.cos(x), 64))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_rhs_integrates_to_zero(seed):
    u = random_bandlimited(np.random.default_rng(seed), 64, kmax=5, positive=True)
    assert abs(rhs(u).samples.sum()) <= 1e-12 * np.abs(rhs(u).samples).max() * 64


def test_step_conserves_mean():
    s = PdeState(cosine_density(256, 0.5))
    s1 = step(s, stable_dt(s.u))
    assert abs(s1.u.mean - s.u.mean) <= 1e-14


def test_step_rejects_bad_dt():
    with pytest.raises(ValueError):
        step(PdeState(cosine_density(32, 0.5)), 0.0)


def test_rk4_order():
    s0 = PdeState(cosine_density(64, 0.5))
    dt = stable_dt(s0.u)
    T = 0.2

    def run(h):
        m = round(T / h)
        s = s0
        for _ in range(m):
            s = step(s, T / m)
        return s.u.samples

    ref = run(dt / 8)
    e1 = np.abs(run(dt) - ref).max()
    e2 = np.abs(run(dt / 2) - ref).max()
    assert math.log2(e1 / e2) >= 3.7


def test_evolve_checkpoints():
    s = PdeState(cosine_density(64, 0.5))
    assert evolve_to(s, 0.0, checkpoints=[0.0])[0] is s
    ts = [0.1, 0.25, 0.4]
    out = evolve_to(s, 0.5, checkpoints=ts)
    assert [o.t for o in out] == ts + [0.5]
    with pytest.raises(ValueError):
        evolve_to(s, 0.5, checkpoints=[0.7])


def test_integrator_lands_exactly():
    integ = Integrator(PdeState(cosine_density(64, 0.5)))
    for k in range(1, 6):
        assert integ.advance_to(k / 7).t == k / 7
    with pytest.raises(ValueError):
        integ.advance_to(0.1)


def test_dt_max_is_respected():
    integ = Integrator(PdeState(cosine_density(64, 0.5)), dt_max=1e-3)
    integ.advance_to(0.01)
    assert integ.steps >= 10


def test_observables_of_cosine():
    ob = observables(PdeState(cosine_density(256, 0.5)))
    assert ob.max == pytest.approx(1.5 / (2 * math.pi), abs=1e-12)
    assert ob.min == pytest.approx(0.5 / (2 * math.pi), abs=1e-12)
    assert ob.du1_inf == pytest.approx(0.5 / (2 * math.pi), rel=1e-4)
    assert ob.du2_inf == pytest.approx(0.5 / (2 * math.pi), abs=1e-12)
    assert ob.Hu_inf == pytest.approx(0.5 / (2 * math.pi), rel=1e-4)
    assert ob.mean == pytest.approx(UBAR, abs=1e-15)


def test_observables_of_constant():
    ob = observables(PdeState(GridFunction(np.full(64, UBAR))))
    assert ob.V == 0
    assert max(ob.du1_inf, ob.du2_inf, ob.du3_inf, ob.Hu_inf) <= 1e-12


def test_amplitude_drops_by_t1():
    s0 = PdeState(cosine_density(256, 0.5))
    s1 = evolve_to(s0, 1.0)[-1]
    assert observables(s1).V / observables(s0).V <= math.exp(-SIGMA * 0.8)


def test_V_monotone_along_run():
    s0 = PdeState(cosine_density(128, 0.7))
    out = evolve_to(s0, 1.0, checkpoints=list(np.linspace(0, 1, 41)))
    V = [observables(s).V for s in out]
    assert all(b <= a * (1 + 1e-10) for a, b in zip(V, V[1:]))


def test_two_mode_data_stays_positive():
    u = GridFunction.from_callable(
        lambda x: UBAR * (1 + 0.6 * np.cos(x) + 0.3 * np.sin(4 * x)), 256
    )
    out = evolve_to(PdeState(u), 0.5)[-1]
    assert out.u.samples.min() > 0
    assert abs(out.u.mean - UBAR) <= 1e-13
