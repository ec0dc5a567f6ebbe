import numpy as np
import pytest
from hypothesis import given, strategies as st

from shadowprice import market_core as mc
from shadowprice.generate import close_triangle

M2 = mc.validate_bid_ask([[1, 3], [0.5, 1]])


# validation

def test_valid_two_asset_matrix():
    assert M2.d == 2
    assert M2.spread_pairs() == [(0, 1)]
    assert not M2.is_frictionless()


def test_diagonal_not_one_names_index():
    with pytest.raises(mc.DiagonalNotOne) as e:
        mc.validate_bid_ask([[1, 2], [1, 2]])
    assert e.value.indices == (1, 1)
    assert "(2,2)" in str(e.value)


def test_nonpositive_entry():
    with pytest.raises(mc.NonPositiveEntry):
        mc.validate_bid_ask([[1, -1], [1, 1]])


def test_triangle_violation():
    pi = np.array([[1, 2, 10], [1, 1, 3], [1, 1, 1]], dtype=float)
    with pytest.raises(mc.TriangleViolation) as e:
        mc.validate_bid_ask(pi)
    assert e.value.indices == (0, 2, 1)
    assert "pi[1][3]" in str(e.value)


def test_from_price_and_costs():
    M = mc.from_price_and_costs([1, 3], np.zeros((2, 2)))
    assert M.pi[0, 1] == pytest.approx(3)
    assert M.pi[1, 0] == pytest.approx(1 / 3)
    assert M.is_frictionless()
    lam = np.array([[0, 0.1], [0, 0]])
    assert mc.from_price_and_costs([1, 3], lam).pi[0, 1] == pytest.approx(3.3)
    M = mc.from_price_and_costs([1, 1], np.full((2, 2), 0.5) - 0.5 * np.eye(2))
    assert M.pi[0, 1] == pytest.approx(1.5) and M.pi[1, 0] == pytest.approx(1.5)


# cones

def test_cone_generators_are_solvent():
    assert mc.cone_contains(M2, [1, 0])
    assert mc.cone_contains(M2, [3, -1])
    for g in mc.generators(M2):
        assert mc.cone_contains(M2, g)


def test_buying_one_unit_costs_three():
    # the change (-3, 1) is available at price zero: it lies in -K
    assert mc.cone_contains(M2, [3, -1])
    assert not mc.cone_contains(M2, [2.9, -1])
    # and neither (-2.9, 1) nor (-3, 1) is itself solvent
    assert not mc.cone_contains(M2, [-2.9, 1])
    assert not mc.cone_contains(M2, [-3, 1])
    # selling one unit of asset 2 yields 2 units of asset 1
    assert mc.cone_contains(M2, [-2, 1])
    assert not mc.cone_contains(M2, [-2.1, 1])


def test_polar_examples():
    assert mc.polar_contains(M2, [1, 2.5])
    assert not mc.polar_contains(M2, [1, 3.5])
    assert mc.polar_contains(M2, [0, 0])
    assert mc.polar_strictly_contains(M2, [1, 2.5]) is mc.PolarStatus.STRICT
    assert mc.polar_strictly_contains(M2, [1, 3]) is mc.PolarStatus.BOUNDARY
    assert mc.polar_strictly_contains(M2, [1, 3.5]) is mc.PolarStatus.OUTSIDE
    F = mc.frictionless([1, 2])
    for z in ([1, 2], [1, 1.5], [2, 1]):
        assert mc.polar_strictly_contains(F, z) is mc.PolarStatus.INTERIOR_EMPTY


def test_liquidation_examples():
    assert mc.liquidation_value(M2, [4, -1]) == pytest.approx(1)
    assert mc.liquidation_value(M2, [1, 0]) == pytest.approx(1)
    assert mc.liquidation_value(M2, [0, 1]) == pytest.approx(2)


def test_trade_vector_change_in_minus_cone():
    tv = mc.TradeVector(np.array([[0, 1.0], [0.5, 0]]), np.array([0.1, 0]))
    delta = tv.change(M2)
    assert delta == pytest.approx([-3 + 0.5 - 0.1, 1 - 0.25])
    assert mc.cone_contains(M2, -delta)


# properties

@st.composite
def bid_ask(draw, d=None):
    d = draw(st.integers(1, 4)) if d is None else d
    logS = draw(st.lists(st.floats(-1, 1), min_size=d, max_size=d))
    lam = draw(st.lists(st.floats(0, 0.3), min_size=d * d, max_size=d * d))
    S = np.exp(np.array(logS))
    pi = (1 + np.array(lam).reshape(d, d)) * S[None, :] / S[:, None]
    return mc.validate_bid_ask(close_triangle(pi))


@given(bid_ask(), st.data())
def test_polar_iff_nonnegative_on_generators(M, data):
    z = np.array(data.draw(st.lists(st.floats(0.01, 5), min_size=M.d, max_size=M.d)))
    on_gens = np.all(mc.generators(M) @ z >= -1e-12 * np.abs(mc.generators(M)) @ z)
    assert mc.polar_contains(M, z) == bool(on_gens)


@given(bid_ask(), st.data())
def test_liquidation_is_solvency_boundary(M, data):
    v = np.array(data.draw(st.lists(st.floats(-3, 3), min_size=M.d, max_size=M.d)))
    a = mc.liquidation_value(M, v)
    e1 = np.eye(M.d)[0]
    assert mc.cone_contains(M, v - (a - 1e-7) * e1)
    assert not mc.cone_contains(M, v - (a + 1e-4) * e1, tol=1e-9)


@given(bid_ask(d=3), st.data())
def test_liquidation_matches_consistent_prices(M, data):
    """Liquidation value equals min over z in K*, z1 = 1 of z . v (LP duality)."""
    v = np.array(data.draw(st.lists(st.floats(-2, 2), min_size=3, max_size=3)))
    from scipy.optimize import linprog
    d = 3
    A_ub = []
    for i in range(d):
        for j in range(d):
            if i != j:
                r = np.zeros(d)
                r[j] += 1
                r[i] -= M.pi[i, j]
                A_ub.append(r)
    res = linprog(v, A_ub=np.array(A_ub), b_ub=np.zeros(len(A_ub)), A_eq=[[1, 0, 0]], b_eq=[1],
                  bounds=[(0, None)] * d, method="highs")
    assert mc.liquidation_value(M, v) == pytest.approx(res.fun, abs=1e-8)


@given(bid_ask(), st.data())
def test_random_trades_stay_in_minus_cone(M, data):
    d = M.d
    buys = np.array(data.draw(st.lists(st.floats(0, 2), min_size=d * d, max_size=d * d))).reshape(d, d)
    np.fill_diagonal(buys, 0)
    disp = np.array(data.draw(st.lists(st.floats(0, 1), min_size=d, max_size=d)))
    delta = mc.TradeVector(buys, disp).change(M)
    assert mc.cone_contains(M, -delta)
    tv, resid = mc.decompose_change(M, delta)
    assert resid < 1e-9
    # the LP backend works to a 1e-7 feasibility tolerance
    assert tv.change(M) == pytest.approx(delta, abs=1e-6)


@given(bid_ask())
def test_strict_margin_sign_matches_status(M):
    z = np.ones(M.d)
    m = mc.strict_margin(M, z)
    status = mc.polar_strictly_contains(M, z)
    if m is None:
        assert M.spread_pairs() == []
    elif status is mc.PolarStatus.STRICT:
        assert m > 0
