"""Sieve local projections for state-dependent impulse responses on micro-macro panels.

Submodules load on first attribute access, so light entry points (such as
the closed-form diagnostics) do not pay for the compiled kernels.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "basis": ("BasisSpec", "make_basis", "eval_basis"),
    "diagnostics": ("WeightCurve", "omega_empirical", "omega_analytic_example",
                    "gprime_analytic_example", "linear_estimand"),
    "errors": ("StateLPError", "InputError", "NumericError", "ConfigError"),
    "estimator": ("LpFit", "build_design", "fit_ols", "fit_sieve", "fit_linear_lp", "schur_b"),
    "inference": ("IrfCurve", "score_process", "bartlett_hac", "coef_covariance", "irf_curve"),
    "montecarlo": ("DgpSpec", "McConfig", "McResult", "simulate_dgp", "true_irf", "run_study"),
    "panel": ("PanelSchema", "PanelDataset", "OutcomeMode", "load_panel", "build_regression_sample"),
    "reporting": ("aggregate_response",),
    "selection": ("Selector", "select_dimension"),
}
_WHERE = {name: mod for mod, names in _EXPORTS.items() for name in names}

__all__ = sorted(_WHERE)


def __getattr__(name):
    if name in _WHERE:
        value = getattr(importlib.import_module(f".{_WHERE[name]}", __name__), name)
        globals()[name] = value
        return value
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(list(globals()) + __all__)
