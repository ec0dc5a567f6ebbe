import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from shadowprice.optimize import solve
from shadowprice.scenario import build_counterexample

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# scipy's HiGHS wrapper warns about ill-conditioned LPs on the heavy-tailed tree
warnings.filterwarnings("ignore", category=RuntimeWarning, module="scipy")


@pytest.fixture(scope="session")
def ce_free():
    return build_counterexample(10, 20, (4.0, -1.0), "unconstrained")


@pytest.fixture(scope="session")
def ce_free_solved(ce_free):
    return solve(ce_free)


@pytest.fixture(scope="session")
def ce_noshort():
    return build_counterexample(10, 20, (4.0, 0.0), "no_short")


@pytest.fixture(scope="session")
def ce_noshort_solved(ce_noshort):
    return solve(ce_noshort)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
