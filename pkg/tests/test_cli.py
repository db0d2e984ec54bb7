import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from state_lp.cli import main
from state_lp.diagnostics import omega_analytic_example
from state_lp.panel import PanelDataset, write_panel


@pytest.fixture(scope="module")
def panel_csv(tmp_path_factory, small_panel):
    path = tmp_path_factory.mktemp("panel") / "panel.csv"
    write_panel(small_panel, path)
    return path


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_estimate_writes_files_and_is_deterministic(tmp_path, panel_csv):
    args = [
        "estimate", str(panel_csv), "--horizons", "0-4", "--bootstrap", "200", "--grid", "41",
        "--intermediate", "off", "--seed", "3",
    ]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for h in range(5):
        a = (tmp_path / "a" / f"irf_h{h}.csv").read_bytes()
        assert a == (tmp_path / "b" / f"irf_h{h}.csv").read_bytes()
        rows = _read_csv(tmp_path / "a" / f"irf_h{h}.csv")
        assert rows[0] == ["z", "estimate", "se", "ci_lo", "ci_hi", "band_lo", "band_hi"]
        assert len(rows) == 42
        est, lo, hi, blo, bhi = (np.array([float(r[k]) for r in rows[1:]]) for k in (1, 3, 4, 5, 6))
        assert np.all(lo <= est) and np.all(est <= hi) and np.all(blo <= est) and np.all(est <= bhi)
        # the sup band has the same half-width everywhere
        np.testing.assert_allclose(bhi - est, (bhi - est)[0], rtol=1e-9)
        np.testing.assert_allclose(est - blo, (bhi - est)[0], rtol=1e-9)
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert [s["horizon"] for s in summary["horizons"]] == list(range(5))
    assert summary["horizons"][2]["file"] == "irf_h2.csv"
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert {f"irf_h{h}.csv" for h in range(5)} <= set(manifest["outputs"])
    assert manifest["seed"] == 3


def test_estimate_exit_codes(tmp_path, panel_csv, capsys):
    base = ["estimate", str(panel_csv), "--out", str(tmp_path)]
    assert main(base + ["--selector", "oracle"]) == 3
    assert main(["estimate", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("unit,time,y,x,z\n1,1,0.1,0.2,oops\n")
    assert main(["estimate", str(bad), "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as info:
        main(base + ["--no-such-flag"])
    assert info.value.code == 3
    with pytest.raises(SystemExit) as info:
        main(base + ["--selector", "bic"])
    assert info.value.code == 3


def test_diagnose_linear_analytic(tmp_path):
    assert main(["diagnose-linear", "--analytic-example", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "estimand.json").read_text())
    assert abs(report["beta"] + 1 / 28) < 1e-6
    assert abs(report["omega_integral"] - 1) < 1e-8
    rows = _read_csv(tmp_path / "weights.csv")
    assert rows[0] == ["z", "omega", "gprime", "integrand"]
    z, w, gp, f = np.array([[float(v) for v in r] for r in rows[1:]]).T
    np.testing.assert_allclose(w, omega_analytic_example(z), atol=1e-14)
    np.testing.assert_allclose(f, w * gp, atol=1e-14)
    assert abs(np.trapezoid(f, z) + 1 / 28) < 1e-4
    assert "weights.csv" in json.loads((tmp_path / "manifest.json").read_text())["outputs"]


def test_diagnose_linear_empirical(tmp_path, panel_csv):
    assert main(["diagnose-linear", str(panel_csv), "--gprime", "0.5,0.6,-0.75", "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "estimand.json").read_text())
    assert {"beta_ols", "alpha_ols", "omega_integral", "beta"} <= set(report)


def test_diagnose_linear_degenerate_exits_2(tmp_path):
    T = 12
    p = PanelDataset.from_arrays(outcome=np.random.default_rng(0).normal(size=(3, T)),
                                 shock=np.linspace(-1, 1, T), state=np.ones((3, T)))
    write_panel(p, tmp_path / "flat.csv")
    assert main(["diagnose-linear", str(tmp_path / "flat.csv"), "--out", str(tmp_path / "o")]) == 2


def test_simulate_small_config(tmp_path):
    cfg = tmp_path / "mc.cfg"
    cfg.write_text("reps = 2\nn = 30\nt = 30\nhorizons = 0\nb = 100\ngrid_points = 30\n"
                   "candidates = 4,5,6\nburn_in = 50\n")
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rimse = _read_csv(tmp_path / "o" / "rimse.csv")
    assert rimse[0] == ["N", "T", "h", "delta", "estimator", "rimse"]
    cov = _read_csv(tmp_path / "o" / "coverage.csv")
    assert cov[0] == ["selector", "N", "T", "h", "coverage", "width"]
    (tmp_path / "bad.cfg").write_text("reps = 2\nfoo = 1\n")
    assert main(["simulate", str(tmp_path / "bad.cfg"), "--out", str(tmp_path / "p")]) == 3


def test_aggregate(tmp_path, small_panel):
    write_panel(small_panel, tmp_path / "p.csv")
    rows = _read_csv(tmp_path / "p.csv")
    rng = np.random.default_rng(1)
    rows[0].append("k")
    for r in rows[1:]:
        r.append(repr(float(rng.uniform(0.5, 2))))
    with open(tmp_path / "pk.csv", "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    assert main(["aggregate", str(tmp_path / "pk.csv"), "--weights-col", "k", "--horizons", "0,2",
                 "--out", str(tmp_path / "o")]) == 0
    out = _read_csv(tmp_path / "o" / "aggregate_h2.csv")
    assert out[0] == ["time", "response", "smoothed"]
    assert len(out) == small_panel.T
    assert out[1][2] == "nan" and out[5][2] != "nan"


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "state_lp.cli", "diagnose-linear", "--analytic-example",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "beta" in proc.stdout
