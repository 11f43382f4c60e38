import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from rootflow.cli import (
    EXIT_ABORT,
    EXIT_CHECK,
    EXIT_CONFIG,
    EXIT_OK,
    config_from_dict,
    fit_loglinear,
    main,
    parse_config,
    run_suite,
)
from rootflow.coupling import COLUMNS
from rootflow.errors import ConfigError

UBAR = 1 / (2 * math.pi)


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, {"n": 64, "density": {"type": "cosine", "amplitude": 0.5},
                                         "t_final": 1.0}))
    assert cfg.N == 512 and cfg.checkpoint_stride == 1
    assert cfg.tolerances["split_sum"] == 1e-14


@pytest.mark.parametrize("data, key", [
    ({"n": 8, "density": {"type": "cosine", "amplitude": 1.2}}, "density.amplitude"),
    ({"n": 8, "bogus": 1}, "bogus"),
    ({"n": "eight"}, "n"),
    ({"n": 8, "perturbation": {"Z": 1}}, "perturbation.Z"),
    ({"n": 8, "tolerances": {"nope": 1}}, "tolerances.nope"),
    ({"n": 8, "density": {"type": "gauss"}}, "density.type"),
    ({}, "n"),
])
def test_config_errors_name_key(data, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        config_from_dict(data)


def test_fourier_mass_rejected_with_measured_value():
    with pytest.raises(ConfigError, match="mass"):
        config_from_dict({"n": 8, "density": {"type": "fourier", "a0": 0.2, "cos": [0.05]}})


def test_nonpositive_density_names_point():
    with pytest.raises(ConfigError, match=r"u\("):
        config_from_dict({"n": 8, "density": {"type": "fourier", "a0": UBAR, "cos": [0.2]}})


def test_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{n: 3")
    with pytest.raises(ConfigError):
        parse_config(p)
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.json")


def test_fit_exact_exponential():
    x = np.linspace(0, 3, 10)
    slope, r2 = fit_loglinear(x, np.exp(-2 * x), "rate")
    assert slope == pytest.approx(-2.0, abs=1e-10) and r2 == pytest.approx(1.0)
    slope, _ = fit_loglinear(x, np.full(10, 3.0), "rate")
    assert slope == pytest.approx(0.0, abs=1e-12)


def test_fit_noisy_power(rng):
    ns = np.array([32, 64, 128, 256])
    ys = ns**-1.5 * (1 + 0.05 * rng.uniform(-1, 1, 4))
    slope, r2 = fit_loglinear(ns, ys, "power")
    assert abs(slope + 1.5) <= 0.1 and r2 > 0.99


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_loglinear([1, 2], [1, 2], "power")
    with pytest.raises(ValueError):
        fit_loglinear([1, 2, 3], [1, 0, 2], "power")
    with pytest.raises(ValueError):
        fit_loglinear([1, 2, 3], [1, 2, 3], "linear")


def test_pde_run_constant_density(tmp_path):
    cfg = config_from_dict({"n": 8, "density": {"type": "fourier", "a0": UBAR}, "t_final": 0.5})
    man = run_suite("pde-run", cfg, tmp_path)
    assert man.exit_status == EXIT_OK
    csv_path = next(p for p in man.outputs if p.endswith(".csv"))
    rows = _rows(csv_path)
    col = rows[0].index("V")
    assert all(float(r[col]) <= 1e-12 for r in rows[1:])


def test_coupled_run_schema(tmp_path):
    path = _write(tmp_path, {"n": 16, "t_final": 0.5})
    assert main(["coupled-run", "--config", path, "--out", str(tmp_path / "o")]) == EXIT_OK
    csvs = list((tmp_path / "o").glob("*.csv"))
    assert len(csvs) == 1
    rows = _rows(csvs[0])
    assert tuple(rows[0]) == COLUMNS
    assert len(rows) == 1 + 16 + 1
    manifest = json.loads((tmp_path / "o" / "coupled-run_manifest.json").read_text())
    assert str(csvs[0]) in manifest["outputs"]
    assert manifest["exit_status"] == 0


def test_csv_byte_identical(tmp_path):
    path = _write(tmp_path, {"n": 16, "t_final": 0.25, "perturbation": {"Z0": 0.5, "seed": 9}})
    for d in ("a", "b"):
        assert main(["coupled-run", "--config", path, "--out", str(tmp_path / d)]) == EXIT_OK
    a = next((tmp_path / "a").glob("*.csv")).read_bytes()
    b = next((tmp_path / "b").glob("*.csv")).read_bytes()
    assert a == b


def test_seed_override_changes_output(tmp_path):
    path = _write(tmp_path, {"n": 16, "t_final": 0.1, "perturbation": {"Z0": 0.5, "seed": 9}})
    main(["coupled-run", "--config", path, "--out", str(tmp_path / "a")])
    main(["coupled-run", "--config", path, "--out", str(tmp_path / "b"), "--seed", "10"])
    a = next((tmp_path / "a").glob("*.csv")).read_bytes()
    b = next((tmp_path / "b").glob("*.csv")).read_bytes()
    assert a != b


def test_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, {"n": 8, "density": {"amplitude": 1.2}}, "bad.json")
    assert main(["pde-run", "--config", bad, "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "density.amplitude" in capsys.readouterr().err
    strict = _write(tmp_path, {"n": 8, "t_final": 0.2, "tolerances": {"mean_drift": -1.0}}, "s.json")
    assert main(["pde-run", "--config", strict, "--out", str(tmp_path)]) == EXIT_CHECK
    # a perturbation too large for the root spacing is refused when the run builds the roots
    huge = _write(tmp_path, {"n": 8, "perturbation": {"Z0": 50.0, "eps": 0.1}}, "h.json")
    assert main(["coupled-run", "--config", huge, "--out", str(tmp_path)]) == EXIT_ABORT
    manifest = json.loads((tmp_path / "coupled-run_manifest.json").read_text())
    assert manifest["error"]


def test_roots_run_and_predict_check(tmp_path):
    cfg = config_from_dict({"n": 16, "t_final": 0.25, "sweep": {"ns": [8, 16, 32, 64]}})
    assert run_suite("roots-run", cfg, tmp_path).exit_status == EXIT_OK
    man = run_suite("predict-check", cfg, tmp_path)
    assert man.checks["split_sum"]["passed"]
    assert man.summary["pred_resid_slope"]["slope"] < -1.4


def test_scaling_sweep_summary(tmp_path):
    cfg = config_from_dict({"n": 8, "sweep": {"ns": [8, 16, 32], "times": [0.25, 0.5]}})
    man = run_suite("scaling-sweep", cfg, tmp_path)
    summary = json.loads((tmp_path / "sweep_summary.json").read_text())
    assert man.exit_status in (EXIT_OK, EXIT_CHECK)
    text = json.dumps(summary)
    for key in ("E", "pred", "mean"):
        assert key in text


def test_kernel_check(tmp_path):
    cfg = config_from_dict({"n": 16, "kernel": {"times": [0, 0.5]}})
    man = run_suite("kernel-check", cfg, tmp_path)
    assert man.exit_status == EXIT_OK
    assert set(man.checks) >= {"positivity", "envelope_ratio", "row_sum_below_one", "row_sum_vs_F"}


def test_console_entry_point(tmp_path):
    path = _write(tmp_path, {"n": 4, "t_final": 0.1})
    proc = subprocess.run([sys.executable, "-m", "rootflow.cli", "pde-run", "--config", path,
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
