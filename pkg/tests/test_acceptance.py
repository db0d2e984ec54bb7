"""End-to-end acceptance checks at full design size.

Each test prints one ``CRITERION k: PASS|FAIL`` line (shown even under
output capture) and then asserts. The simulation criteria run the full
N=500, T=200 design and take most of the suite's wall time.
"""

import filecmp
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from state_lp.montecarlo import McConfig, run_study

pytestmark = pytest.mark.acceptance

N, T = 500, 200
THREADS = os.cpu_count() or 1


def report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} | {detail}")


def test_criterion_1_analytic_example(tmp_path, capsys):
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "state_lp.cli", "diagnose-linear", "--analytic-example",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    seconds = time.perf_counter() - start
    assert proc.returncode == 0, proc.stderr
    est = json.loads((tmp_path / "estimand.json").read_text())
    checks = {
        "beta": abs(est["beta"] + 1 / 28) < 1e-6,
        "integral": abs(est["omega_integral"] - 1) < 1e-8,
        "runtime": seconds < 1.0,
    }
    ok = all(checks.values())
    report(capsys, 1, ok, f"beta={est['beta']:.12f} int_omega={est['omega_integral']:.12f} "
                          f"runtime={seconds:.3f}s {checks}")
    assert ok


@pytest.fixture(scope="module")
def rimse_study():
    cfg = McConfig(reps=100, Ns=(N,), Ts=(T,), horizons=(0, 4, 8, 12), deltas=(1.0, 2.0),
                   selectors=("aic",), with_intermediate=True, linear=True, bands=False)
    return run_study(cfg, threads=THREADS)


def test_criterion_2_rimse_levels(rimse_study, capsys):
    r = rimse_study.rimse
    sieve0, lin0 = r[(N, T, 0, 1.0, "sieve-aic")], r[(N, T, 0, 1.0, "linear")]
    ratios = {h: r[(N, T, h, 1.0, "sieve-aic")] / r[(N, T, h, 1.0, "linear")] for h in (0, 4, 8, 12)}
    checks = {
        "sieve_h0<=0.10": sieve0 <= 0.10,
        "linear_h0_in_[30,50]": 30 <= lin0 <= 50,
        "ratio<0.01_all_h": all(v < 0.01 for v in ratios.values()),
    }
    ok = all(checks.values())
    table = " ".join(f"h{h}:sieve={r[(N, T, h, 1.0, 'sieve-aic')]:.4f},linear={r[(N, T, h, 1.0, 'linear')]:.3f},"
                     f"ratio={ratios[h]:.4f}" for h in ratios)
    report(capsys, 2, ok, f"{checks} {table}")
    assert ok


def test_criterion_3_delta_proportional(rimse_study, capsys):
    r = rimse_study.rimse
    dev = max(abs(r[(N, T, h, 2.0, est)] / r[(N, T, h, 1.0, est)] - 2)
              for h in (0, 4, 8, 12) for est in ("sieve-aic", "linear"))
    ok = dev < 1e-10
    report(capsys, 3, ok, f"max |ratio - 2| = {dev:.3e}")
    assert ok


def _coverage(h, selectors=("aic",), intermediate=True, reps=100, **kw):
    cfg = McConfig(reps=reps, Ns=(N,), Ts=(T,), horizons=(h,), selectors=selectors, B=2000, alpha=0.05,
                   with_intermediate=intermediate, linear=False, bands=True, **kw)
    res = run_study(cfg, threads=THREADS)
    return res.coverage[(selectors[0], N, T, h)]


def test_criterion_4_aic_coverage_h0(capsys):
    cov, width = _coverage(0)
    ok = abs(cov - 0.84) <= 0.08 and abs(width - 0.47) <= 0.10
    report(capsys, 4, ok, f"coverage={cov:.3f} (0.84+-0.08) width={width:.4f} (0.47+-0.10)")
    assert ok


def test_criterion_5_oracle_coverage_h4(capsys):
    cov, width = _coverage(4, selectors=("oracle",), oracle_J=4)
    ok = abs(cov - 0.92) <= 0.07 and abs(width - 0.55) <= 0.12
    report(capsys, 5, ok, f"coverage={cov:.3f} (0.92+-0.07) width={width:.4f} (0.55+-0.12)")
    assert ok


def test_criterion_6_intermediate_terms(capsys):
    cov_w, width_w = _coverage(4, intermediate=True, reps=50)
    cov_wo, width_wo = _coverage(4, intermediate=False, reps=50)
    ok = width_w <= width_wo / 10 and abs(cov_w - cov_wo) <= 0.10
    report(capsys, 6, ok, f"with: coverage={cov_w:.3f} width={width_w:.4f}; "
                          f"without: coverage={cov_wo:.3f} width={width_wo:.4f}")
    assert ok


def test_criterion_7_hac_defaults(capsys):
    from state_lp.inference import bartlett_weights, hac_lag
    from state_lp.montecarlo import DgpSpec, simulate_dgp
    from state_lp.panel import build_regression_sample

    n = build_regression_sample(simulate_dgp(DgpSpec(burn_in=10), N, T, 1), 0).n
    L = hac_lag(n)
    w = bartlett_weights(4)
    ok = L == 18 == math.floor(4 * 1000 ** (2 / 9)) and w.tolist() == [0.8, 0.6, 0.4, 0.2]
    report(capsys, 7, ok, f"n={n} L={L} weights={w.tolist()}")
    assert ok


ORACLE_SUITES = [
    "tests/test_estimator.py::test_schur_matches_full_ols",
    "tests/test_inference.py::test_score_process_brute_force",
    "tests/test_inference.py::test_hac_brute_force",
    "tests/test_inference.py::test_covariance_formula",
    "tests/test_inference.py::test_bootstrap_scalar_quantile",
    "tests/test_basis.py::test_partition_of_unity",
    "tests/test_selection.py::test_lasso_selection_kkt",
    "tests/test_selection.py::test_kkt_property",
]


def test_criterion_8_oracle_suites(capsys):
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *ORACLE_SUITES],
                          cwd=root, capture_output=True, text=True)
    seconds = time.perf_counter() - start
    ok = proc.returncode == 0 and seconds < 120
    last = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    report(capsys, 8, ok, f"{last} | runtime={seconds:.1f}s (< 120 s)")
    assert ok, proc.stdout[-3000:]


def test_criterion_9_thread_invariance(tmp_path, capsys):
    from state_lp.cli import main

    cfg = tmp_path / "study.cfg"
    cfg.write_text("reps = 6\nn = 60\nt = 50\nhorizons = 0,2\ndeltas = 1,2\nselectors = aic,gcv\n"
                   "b = 300\ngrid_points = 60\ncandidates = 4-8\nburn_in = 50\nseed = 77\n")
    for k in (1, 4):
        assert main(["simulate", str(cfg), "--threads", str(k), "--out", str(tmp_path / f"t{k}")]) == 0
    names = ("rimse.csv", "coverage.csv", "replications.csv")
    same = {f: filecmp.cmp(tmp_path / "t1" / f, tmp_path / "t4" / f, shallow=False) for f in names}
    ok = all(same.values())
    report(capsys, 9, ok, f"byte-identical at threads 1 vs 4: {same}")
    assert ok
