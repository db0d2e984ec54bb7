import numpy as np
import pytest

from state_lp.montecarlo import DgpSpec, simulate_dgp
from state_lp.panel import PanelDataset, build_regression_sample


@pytest.fixture(scope="session")
def small_panel():
    return simulate_dgp(DgpSpec(burn_in=100), N=40, T=60, seed=11)


@pytest.fixture(scope="session")
def mid_panel():
    return simulate_dgp(DgpSpec(burn_in=100), N=120, T=80, seed=5)


@pytest.fixture(scope="session")
def small_sample(small_panel):
    return build_regression_sample(small_panel, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_panel(rng, N=6, T=9, Q=2):
    return PanelDataset.from_arrays(
        outcome=rng.standard_normal((N, T)),
        shock=rng.standard_normal(T),
        state=rng.standard_normal((N, T)),
        controls=rng.standard_normal((N, T, Q)),
    )
