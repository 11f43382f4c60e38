import math

import numpy as np
import pytest

from rootflow.spectral import GridFunction
from rootflow.trigpoly import RootConfiguration


def jittered_lattice(rng, n, jitter=0.4):
    """Uniform lattice of 2n roots with independent offsets of up to ``jitter`` spacings."""
    base = -math.pi + math.pi * np.arange(1, 2 * n + 1) / n
    return RootConfiguration.from_angles(base + rng.uniform(-jitter, jitter, 2 * n) * math.pi / n)


def random_bandlimited(rng, N, kmax=6, positive=False):
    """Random real trig polynomial of degree ``kmax`` on ``N`` nodes."""
    x = -math.pi + 2 * math.pi * np.arange(1, N + 1) / N
    k = np.arange(1, kmax + 1)
    a = rng.standard_normal(kmax) / k
    b = rng.standard_normal(kmax) / k
    vals = np.cos(np.outer(x, k)) @ a + np.sin(np.outer(x, k)) @ b
    if positive:
        vals = vals - vals.min() + rng.uniform(0.05, 1.0)
    return GridFunction(vals)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance lines are collected here and printed at the end of the session
_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    def record(label, ok, **detail):
        parts = "  ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in detail.items())
        _ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL':<5}{label}  {parts}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
