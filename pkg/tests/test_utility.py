import numpy as np
import pytest
from hypothesis import given, strategies as st

from shadowprice.utility import (LOG, DomainError, UtilitySpec, conjugate, curvature, marginal,
                                 marginal_inverse, utility_eval)

SPECS = [LOG, UtilitySpec("power", 0.5), UtilitySpec("power", -1.0), UtilitySpec("power", 0.9)]


def test_closed_form_values():
    assert conjugate(LOG, 1.0) == pytest.approx(-1.0)
    assert conjugate(UtilitySpec("power", 0.5), 1.0) == pytest.approx(1.0)
    assert marginal_inverse(LOG, 0.25) == pytest.approx(4.0)
    assert utility_eval(LOG, np.e) == pytest.approx(1.0)
    assert marginal(UtilitySpec("power", 0.5), 4.0) == pytest.approx(0.5)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan])
def test_domain_errors(bad):
    for u in SPECS:
        with pytest.raises(DomainError):
            utility_eval(u, bad)
        with pytest.raises(DomainError):
            conjugate(u, bad)


@pytest.mark.parametrize("kind,p", [("power", 1.0), ("power", 0.0), ("power", None), ("log", 0.5),
                                    ("exp", None)])
def test_invalid_specs(kind, p):
    with pytest.raises(ValueError):
        UtilitySpec(kind, p)


@pytest.mark.parametrize("u", SPECS)
@given(x=st.floats(1e-3, 1e3))
def test_marginal_inverse_roundtrip(u, x):
    assert marginal_inverse(u, marginal(u, x)) == pytest.approx(x, rel=1e-10)


@pytest.mark.parametrize("u", SPECS)
@given(y=st.floats(1e-2, 1e2))
def test_conjugate_is_sup(u, y):
    """U*(y) = sup_x U(x) - x y, attained at I(y); a grid never beats it."""
    xs = np.geomspace(1e-4, 1e4, 4001)
    grid_best = np.max(utility_eval(u, xs) - xs * y)
    cj = conjugate(u, y)
    assert grid_best <= cj + 1e-12 * (1 + abs(cj))
    x = marginal_inverse(u, y)
    assert utility_eval(u, x) - x * y == pytest.approx(cj, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("u", SPECS)
@given(x=st.floats(1e-2, 1e2))
def test_derivatives_by_differences(u, x):
    h = 1e-6 * x
    fd1 = (utility_eval(u, x + h) - utility_eval(u, x - h)) / (2 * h)
    fd2 = (marginal(u, x + h) - marginal(u, x - h)) / (2 * h)
    assert marginal(u, x) == pytest.approx(fd1, rel=1e-6)
    assert curvature(u, x) == pytest.approx(fd2, rel=1e-5)
    assert curvature(u, x) < 0 < marginal(u, x)


def test_inada():
    for u in SPECS:
        assert marginal(u, 1e-100) > 1e5
        assert marginal(u, 1e100) < 1e-5
