"""Command-line entry point: ``state-lp {estimate,simulate,diagnose-linear,aggregate}``.

Exit codes: 0 success, 1 bad input data, 2 numerical failure, 3 bad
configuration or arguments.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional

import numpy as np

from .errors import ConfigError, InputError, StateLPError

_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2 lacks trapezoid

# numerical modules are imported inside the commands that need them, which
# keeps the closed-form diagnostic fast to start

log = logging.getLogger("state_lp")

SELECTORS = ("aic", "gcv", "lasso", "oracle")
MODES = ("level", "cum-t", "cum-t1")
IRF_HEADER = ("z", "estimate", "se", "ci_lo", "ci_hi", "band_lo", "band_hi")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def _grid_spec(text: str):
    parts = text.split(":")
    try:
        if len(parts) == 1:
            n, lo, hi = int(parts[0]), None, None
        elif len(parts) == 3:
            n, lo, hi = int(parts[0]), float(parts[1]), float(parts[2])
        else:
            raise ValueError
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected n or n:lo:hi, got {text!r}") from None
    if n < 2 or (lo is not None and not hi > lo):
        raise argparse.ArgumentTypeError(f"need n >= 2 and hi > lo, got {text!r}")
    return n, lo, hi


def _horizons(text: str):
    from .montecarlo import parse_int_list

    try:
        hs = parse_int_list(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad horizon list {text!r}") from None
    if not hs or min(hs) < 0:
        raise argparse.ArgumentTypeError("horizons must be nonnegative")
    return tuple(sorted(set(hs)))


def _on_off(text: str) -> bool:
    t = text.lower()
    if t not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return t == "on"


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("STATE_LP_THREADS", "1")
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"STATE_LP_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("threads must be >= 1")
    return n


def _schema(args):
    from .panel import PanelSchema

    controls = None if args.controls is None else tuple(c for c in args.controls.split(",") if c)
    extra = (args.weights_col,) if getattr(args, "weights_col", None) else ()
    return PanelSchema(unit=args.unit_col, time=args.time_col, outcome=args.outcome_col,
                       shock=args.shock_col, state=args.state_col, controls=controls, extra=extra)


def _out_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _config_echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


# -- estimate ---------------------------------------------------------------

def _selection_trace(sel) -> dict:
    from .selection import Selector

    if sel.selector is Selector.LASSO:
        keep = ("lambdas", "nonzero", "cv_loss", "lambda_hat", "J_lasso")
        return {k: sel.trace[k] for k in keep}
    return {"criterion": {str(j): v for j, v in sel.trace.items()},
            "skipped": {str(j): r for j, r in sel.skipped.items()}}


def _estimate_horizon(task):
    from threadpoolctl import threadpool_limits

    from .estimator import fit_sieve
    from .inference import bartlett_hac, coef_covariance, score_process, uniform_band
    from .panel import build_regression_sample
    from .rng import derive_seed
    from .selection import select_dimension

    panel, h, opts = task
    with threadpool_limits(1):
        sample = build_regression_sample(panel, h, opts["mode"], opts["intermediate"])
        sel = select_dimension(sample, opts["selector"], with_intermediate=opts["intermediate"],
                               oracle_J=opts["oracle_j"])
        fit = fit_sieve(sample, sel.J_fit, opts["intermediate"])
        n_pts, lo, hi = opts["grid"]
        if lo is None:
            lo, hi = float(sample.state.min()), float(sample.state.max())
        grid = np.linspace(lo, hi, n_pts)
        hac = bartlett_hac(score_process(fit))
        curve = uniform_band(fit, coef_covariance(hac, fit), grid, B=opts["bootstrap"],
                             alpha=opts["alpha"], seed=derive_seed(opts["seed"], h))
    summary = {
        "horizon": h, "n": sample.n, "J_hat": int(sel.J_hat), "J_fit": int(fit.J),
        "hac_lag": hac.L, "critical_value": curve.critical_value,
        "selection": _selection_trace(sel),
    }
    return h, curve, summary


def cmd_estimate(args) -> int:
    from .panel import OutcomeMode, load_panel
    from .reporting import RunManifest, write_csv, write_json

    start = time.perf_counter()
    if args.selector == "oracle" and args.oracle_j is None:
        raise ConfigError("--selector oracle requires --oracle-j")
    threads = _threads(args)
    out = _out_dir(args.out)
    panel = load_panel(args.panel, _schema(args))
    opts = {
        "mode": OutcomeMode(args.mode), "intermediate": args.intermediate,
        "selector": args.selector, "oracle_j": args.oracle_j, "grid": args.grid,
        "bootstrap": args.bootstrap, "alpha": args.alpha, "seed": args.seed,
    }
    if not 0 < args.alpha < 1:
        raise ConfigError("--alpha must lie in (0, 1)")
    tasks = [(panel, h, opts) for h in args.horizons]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
            results = list(pool.map(_estimate_horizon, tasks))
    else:
        results = [_estimate_horizon(t) for t in tasks]

    manifest = RunManifest("estimate", _config_echo(args), args.seed)
    manifest.add_input(args.panel)
    horizons = []
    for h, curve, summary in sorted(results, key=lambda r: r[0]):
        path = os.path.join(out, f"irf_h{h}.csv")
        write_csv(path, IRF_HEADER, zip(curve.grid, curve.estimate, curve.pointwise_se,
                                        curve.ci_lo, curve.ci_hi, curve.band_lo, curve.band_hi))
        manifest.add_output(path)
        summary["file"] = os.path.basename(path)
        horizons.append(summary)
    spath = os.path.join(out, "summary.json")
    write_json(spath, {"manifest": "manifest.json", "selector": args.selector,
                       "alpha": args.alpha, "bootstrap": args.bootstrap, "horizons": horizons})
    manifest.add_output(spath)
    manifest.seconds = time.perf_counter() - start
    manifest.write(os.path.join(out, "manifest.json"))
    for s in horizons:
        print(f"h={s['horizon']}: J_hat={s['J_hat']} n={s['n']} L={s['hac_lag']} "
              f"c={s['critical_value']:.6g} -> {s['file']}")
    return 0


# -- simulate ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .montecarlo import load_config, run_study
    from .reporting import RunManifest, write_csv

    start = time.perf_counter()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.reps is not None:
        overrides["reps"] = args.reps
    if args.horizons is not None:
        overrides["horizons"] = ",".join(map(str, args.horizons))
    if args.selector is not None:
        overrides["selectors"] = args.selector
    if args.oracle_j is not None:
        overrides["oracle_j"] = args.oracle_j
    if args.bootstrap is not None:
        overrides["b"] = args.bootstrap
    if args.alpha is not None:
        overrides["alpha"] = args.alpha
    if args.intermediate is not None:
        overrides["intermediate"] = "on" if args.intermediate else "off"
    if args.grid is not None:
        n, lo, hi = args.grid
        overrides["grid_points"] = n
        if lo is not None:
            overrides["band_range"] = f"{lo},{hi}"
    config = load_config(args.config, overrides)
    threads = _threads(args)
    result = run_study(config, threads=threads)
    out = _out_dir(args.out)
    manifest = RunManifest("simulate", _config_echo(args), config.seed)
    manifest.add_input(args.config)
    rpath = os.path.join(out, "rimse.csv")
    write_csv(rpath, ("N", "T", "h", "delta", "estimator", "rimse"),
              ([r["N"], r["T"], r["h"], r["delta"], r["estimator"], r["rimse"]] for r in result.rimse_rows()))
    cpath = os.path.join(out, "coverage.csv")
    write_csv(cpath, ("selector", "N", "T", "h", "coverage", "width"),
              ([r["selector"], r["N"], r["T"], r["h"], r["coverage"], r["width"]]
               for r in result.coverage_rows()))
    dpath = os.path.join(out, "replications.csv")
    keys = ("N", "T", "rep", "selector", "h", "J_hat", "covered", "width")
    write_csv(dpath, keys, ([rec.get(k, "") for k in keys] for rec in result.records))
    for p in (rpath, cpath, dpath):
        manifest.add_output(p)
    manifest.config["failures"] = result.failures
    manifest.seconds = time.perf_counter() - start
    manifest.write(os.path.join(out, "manifest.json"))
    print(f"{config.reps} replications per cell, {result.failures} failed; tables in {out}")
    return 0


# -- diagnose-linear ----------------------------------------------------------

def cmd_diagnose_linear(args) -> int:
    from .diagnostics import (
        EXAMPLE_DOMAIN,
        gprime_analytic_example,
        linear_estimand,
        omega_analytic_example,
        positive_intervals,
        sign_changes,
    )
    from .reporting import RunManifest, write_csv, write_json

    start = time.perf_counter()
    out = _out_dir(args.out)
    manifest = RunManifest("diagnose-linear", _config_echo(args), None)
    n_pts, lo, hi = args.grid if args.grid is not None else (401, None, None)
    if args.analytic_example:
        if args.panel is not None:
            raise ConfigError("give either a panel file or --analytic-example, not both")
        a, b = EXAMPLE_DOMAIN
        lo, hi = (a, b) if lo is None else (lo, hi)
        grid = np.linspace(lo, hi, n_pts)
        omega = omega_analytic_example(grid)
        gp = gprime_analytic_example(grid)
        beta = linear_estimand(omega_analytic_example, gprime_analytic_example, EXAMPLE_DOMAIN)
        omega_int = linear_estimand(omega_analytic_example, lambda z: 1.0, EXAMPLE_DOMAIN)
        report = {
            "mode": "analytic-example", "domain": [a, b],
            "beta": beta.value, "beta_quadrature_error": beta.abserr,
            "omega_integral": omega_int.value,
            "omega_sign_changes": sign_changes(grid, omega),
            "gprime_positive_on": positive_intervals(gprime_analytic_example, EXAMPLE_DOMAIN),
        }
    else:
        if args.panel is None:
            raise ConfigError("diagnose-linear needs a panel file or --analytic-example")
        from .diagnostics import omega_empirical
        from .estimator import fit_linear_lp
        from .panel import build_regression_sample, load_panel

        panel = load_panel(args.panel, _schema(args))
        manifest.add_input(args.panel)
        sample = build_regression_sample(panel, args.horizon)
        if lo is None:
            lo, hi = float(sample.state.min()), float(sample.state.max())
        grid = np.linspace(lo, hi, n_pts)
        curve = omega_empirical(sample, grid)
        omega = curve.omega
        lin = fit_linear_lp(sample)
        report = {
            "mode": "empirical", "horizon": args.horizon, "domain": [lo, hi],
            "beta_ols": lin.beta, "alpha_ols": lin.alpha,
            "omega_integral": curve.integral, "omega_sign_changes": curve.sign_changes,
        }
        gp = None
        if args.gprime is not None:
            coefs = np.array([float(c) for c in args.gprime.split(",")])
            gp = np.polynomial.polynomial.polyval(grid, coefs)
            report["beta"] = float(_trapezoid(omega * gp, grid))
    if gp is None:
        header, rows = ("z", "omega"), zip(grid, omega)
    else:
        header, rows = ("z", "omega", "gprime", "integrand"), zip(grid, omega, gp, omega * gp)
    wpath = os.path.join(out, "weights.csv")
    write_csv(wpath, header, rows)
    if gp is not None:
        report["beta_trapezoid"] = float(_trapezoid(omega * gp, grid))
    jpath = os.path.join(out, "estimand.json")
    report["manifest"] = "manifest.json"
    write_json(jpath, report)
    manifest.add_output(wpath)
    manifest.add_output(jpath)
    manifest.seconds = time.perf_counter() - start
    manifest.write(os.path.join(out, "manifest.json"))
    if "beta" in report:
        print(f"beta = {report['beta']:.10g}")
    if "beta_ols" in report:
        print(f"beta (OLS) = {report['beta_ols']:.10g}")
    print(f"integral of omega = {report['omega_integral']:.10g}")
    return 0


# -- aggregate ----------------------------------------------------------------

def cmd_aggregate(args) -> int:
    from .estimator import fit_sieve
    from .panel import OutcomeMode, build_regression_sample, load_panel
    from .reporting import RunManifest, aggregate_response, write_csv
    from .selection import select_dimension

    start = time.perf_counter()
    if args.selector == "oracle" and args.oracle_j is None:
        raise ConfigError("--selector oracle requires --oracle-j")
    out = _out_dir(args.out)
    panel = load_panel(args.panel, _schema(args))
    K = panel.extra[args.weights_col]
    manifest = RunManifest("aggregate", _config_echo(args), None)
    manifest.add_input(args.panel)
    for h in args.horizons:
        sample = build_regression_sample(panel, h, OutcomeMode(args.mode), args.intermediate)
        sel = select_dimension(sample, args.selector, with_intermediate=args.intermediate,
                               oracle_J=args.oracle_j)
        fit = fit_sieve(sample, sel.J_fit, args.intermediate)
        # period t uses the lagged states and weights from t-1
        agg = aggregate_response(fit, panel.state[:, :-1], K[:, :-1], periods=panel.time_index[1:],
                                 weights_source=args.weights_col)
        path = os.path.join(out, f"aggregate_h{h}.csv")
        write_csv(path, ("time", "response", "smoothed"), zip(agg.periods, agg.response, agg.smoothed))
        manifest.add_output(path)
        print(f"h={h}: J_hat={sel.J_hat} -> {os.path.basename(path)}")
    manifest.seconds = time.perf_counter() - start
    manifest.write(os.path.join(out, "manifest.json"))
    return 0


# -- parser -------------------------------------------------------------------

def _add_schema_flags(p):
    g = p.add_argument_group("panel columns")
    g.add_argument("--unit-col", default="unit")
    g.add_argument("--time-col", default="time")
    g.add_argument("--outcome-col", default="y")
    g.add_argument("--shock-col", default="x")
    g.add_argument("--state-col", default="z")
    g.add_argument("--controls", default=None,
                   help="comma-separated control columns (default: every w<k> column)")


def _add_fit_flags(p):
    p.add_argument("--horizons", type=_horizons, default=(0,), help="e.g. 0-4 or 0,4,8")
    p.add_argument("--selector", choices=SELECTORS, default="aic")
    p.add_argument("--oracle-j", type=int, default=None)
    p.add_argument("--mode", choices=MODES, default="level")
    p.add_argument("--intermediate", type=_on_off, default=True, help="on or off (default on)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="state-lp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="sieve IRFs with pointwise intervals and uniform bands")
    p.add_argument("panel")
    _add_fit_flags(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--bootstrap", type=int, default=2000, metavar="B")
    p.add_argument("--grid", type=_grid_spec, default=(200, None, None), help="n or n:lo:hi")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    _add_schema_flags(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="Monte Carlo study from a key = value config file")
    p.add_argument("config")
    p.add_argument("--horizons", type=_horizons, default=None)
    p.add_argument("--selector", default=None, help="comma-separated selectors")
    p.add_argument("--oracle-j", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--bootstrap", type=int, default=None, metavar="B")
    p.add_argument("--grid", type=_grid_spec, default=None, help="band grid: n or n:lo:hi")
    p.add_argument("--intermediate", type=_on_off, default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose-linear", help="weight function behind the linear interaction slope")
    p.add_argument("panel", nargs="?", default=None)
    p.add_argument("--analytic-example", action="store_true")
    p.add_argument("--horizon", type=int, default=0)
    p.add_argument("--gprime", default=None, help="polynomial coefficients of g', constant first")
    p.add_argument("--grid", type=_grid_spec, default=None, help="n or n:lo:hi")
    p.add_argument("--out", required=True)
    _add_schema_flags(p)
    p.set_defaults(func=cmd_diagnose_linear)

    p = sub.add_parser("aggregate", help="weight-share aggregate of the unit responses")
    p.add_argument("panel")
    p.add_argument("--weights-col", required=True)
    _add_fit_flags(p)
    p.add_argument("--out", required=True)
    _add_schema_flags(p)
    p.set_defaults(func=cmd_aggregate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StateLPError as exc:
        print(f"state-lp: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError, UnicodeDecodeError) as exc:
        print(f"state-lp: error: {exc}", file=sys.stderr)
        return InputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
