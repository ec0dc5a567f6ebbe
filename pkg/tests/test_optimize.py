import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shadowprice.generate import RandomMarketConfig, random_scenario
from shadowprice.market_core import frictionless
from shadowprice.optimize import (Infeasible, TooLarge, Unbounded, brute_force_value, check_dpp,
                                  conditional_value, lipschitz_constant, solve, subproblem_value)
from shadowprice.scenario import (Strategy, build_counterexample, counterexample_nodes, do_nothing,
                                  make_scenario, make_tree, subscenario)
from shadowprice.utility import LOG, UtilitySpec, marginal

TINY = RandomMarketConfig(d_choices=(2,), T_choices=(1, 2), max_branching=2, max_nodes=7)


def test_forced_liquidation():
    s = make_scenario(make_tree([-1], [0], [1.0]), [[[1, 3], [0.5, 1]]], [0, 1])
    r = solve(s)
    assert r.payoff[0] == pytest.approx(2)
    assert r.value == pytest.approx(np.log(2))


def test_noshort_counterexample_does_not_trade(ce_noshort, ce_noshort_solved):
    r = ce_noshort_solved
    assert r.value == pytest.approx(np.log(4), abs=1e-9)
    assert np.all(np.abs(r.strategy.holdings[ce_noshort.tree.internal, 1]) < 1e-9)
    assert r.gap <= 1e-7


def test_unconstrained_counterexample_shorts_at_time_one(ce_free, ce_free_solved):
    H = ce_free_solved.strategy.holdings
    for a, _, _ in counterexample_nodes(20):
        assert H[a, 1] < 0
    # frozen solver output on the truncated tree
    assert ce_free_solved.value == pytest.approx(0.7363384141, abs=1e-9)


def test_truncated_optimum_is_short_at_time_zero(ce_free_solved):
    """The infinite-tail argument forces a flat position at time 0; the
    truncation lets the optimizer keep a short of about 1/19."""
    assert ce_free_solved.strategy.holdings[0, 1] == pytest.approx(-1 / 19, abs=1e-6)


def test_small_counterexample_against_brute_force():
    s = build_counterexample(10, 3)
    r = solve(s)
    assert r.value == pytest.approx(1.0887506727, abs=1e-9)
    grid = 1e-3
    assert abs(r.value - brute_force_value(s, grid)) <= 2 * grid


def test_noshort_small_counterexample_brute_force():
    s = build_counterexample(10, 3, (4.0, 0.0), "no_short")
    assert brute_force_value(s, 1e-3) == pytest.approx(np.log(4), abs=1e-3)


def test_binomial_log_optimal_fraction():
    """Frictionless one period, up 1.3 / down 0.8 with equal odds: the
    log-optimal risky fraction solves 0.5 * 0.3/(1+0.3a) = 0.5 * 0.2/(1-0.2a)."""
    tree = make_tree([-1, 0, 0], [0, 1, 1], [1, 0.5, 0.5])
    s = make_scenario(tree, [frictionless([1, 1]), frictionless([1, 1.3]), frictionless([1, 0.8])],
                      [1, 0], mode="unconstrained")
    a = (0.3 - 0.2) / (2 * 0.3 * 0.2)
    closed = 0.5 * np.log(1 + 0.3 * a) + 0.5 * np.log(1 - 0.2 * a)
    r = solve(s)
    assert r.value == pytest.approx(closed, abs=1e-10)
    assert r.strategy.holdings[0, 1] == pytest.approx(a, abs=1e-7)
    grid = 1e-3
    assert abs(brute_force_value(s, grid) - closed) <= lipschitz_constant(s) * grid


def test_infeasible_and_unbounded():
    tree = make_tree([-1, 0], [0, 1], [1, 1])
    flat = make_scenario(tree, [frictionless([1, 3]), frictionless([1, 3])], [4, -1],
                         mode="unconstrained")
    with pytest.raises(Infeasible):
        solve(subscenario(flat, 0, [3, -1]))
    falling = make_scenario(tree, [frictionless([1, 3]), frictionless([1, 2])], [1, 0],
                            mode="unconstrained")
    with pytest.raises(Unbounded):
        solve(falling)
    assert solve(falling.replace(mode="no_short")).value == pytest.approx(0, abs=1e-9)


def test_brute_force_size_limit(ce_free):
    with pytest.raises(TooLarge):
        brute_force_value(ce_free, 1e-2)


# value processes

def test_conditional_value_examples(ce_noshort, ce_noshort_solved):
    s = ce_noshort
    v = do_nothing(s)
    assert conditional_value(s, v, 0) == pytest.approx(ce_noshort_solved.value, abs=1e-9)
    for a, down, _ in counterexample_nodes(20)[:4]:
        assert conditional_value(s, v, a) == pytest.approx(np.log(4), abs=1e-9)
        assert conditional_value(s, v, down) == pytest.approx(np.log(4))


def test_dpp_single_branch_is_exact():
    tree = make_tree([-1, 0, 1], [0, 1, 2], [1, 1, 1])
    mats = [[[1, 2.2], [1 / 1.8, 1]], [[1, 2.1], [1 / 1.9, 1]], [[1, 2.5], [1 / 2.0, 1]]]
    s = make_scenario(tree, mats, [1, 1])
    assert check_dpp(s, solve(s)) <= 1e-9


def test_dpp_detects_wasteful_strategy():
    tree = make_tree([-1, 0, 0], [0, 1, 1], [1, 0.5, 0.5])
    mats = [[[1, 1.05], [1 / 0.95, 1]]] * 3
    s = make_scenario(tree, mats, [1, 1])
    r = solve(s)
    H = r.strategy.holdings.copy()
    H[0] *= 0.5                       # throw half of everything away at t = 0
    f = {leaf: 0.5 * r.payoff[leaf] for leaf in s.tree.leaves}
    for leaf in s.tree.leaves:
        H[leaf, 0] = f[leaf]
    wasted = Strategy(H, f)
    assert check_dpp(s, r) <= 1e-8
    # J(V, 0) > E[J(V, 1)]: the discarded wealth shows up as a drop
    assert check_dpp(s, wasted) > 0.1
    J0 = conditional_value(s, wasted, 0)
    J1 = [conditional_value(s, wasted, c) for c in s.tree.children[0]]
    assert J0 > 0.5 * sum(J1)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_dpp_on_random_scenarios(seed):
    s = random_scenario(np.random.default_rng(seed), RandomMarketConfig(max_nodes=15))
    r = solve(s)
    assert check_dpp(s, r) <= 1e-6 * (1 + abs(r.value))


# duality and structure

@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_gap_and_positive_payoff(seed):
    s = random_scenario(np.random.default_rng(seed), RandomMarketConfig(max_nodes=20))
    r = solve(s)
    assert r.gap >= 0 and r.gap <= 1e-7 * (1 + abs(r.value))
    assert all(f > 0 for f in r.payoff.values())


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 2.0, 10.0]))
def test_log_scaling(seed, lam):
    s = random_scenario(np.random.default_rng(seed), RandomMarketConfig(max_nodes=15), utility=LOG)
    J = solve(s).value
    assert solve(s.replace(endowment=lam * s.endowment)).value == pytest.approx(J + np.log(lam),
                                                                                 abs=1e-6)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_power_homogeneity(seed):
    u = UtilitySpec("power", 0.5)
    s = random_scenario(np.random.default_rng(seed), RandomMarketConfig(max_nodes=15), utility=u)
    J = solve(s).value
    assert solve(s.replace(endowment=4 * s.endowment)).value == pytest.approx(2 * J, rel=1e-7)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_root_multiplier_is_a_supergradient(seed):
    """J(x + eps e_i) <= J(x) + eps h_i, with near equality for small eps."""
    s = random_scenario(np.random.default_rng(seed), RandomMarketConfig(max_nodes=10))
    r = solve(s)
    for i in range(s.d):
        for eps in (1e-2, 1e-1):
            bumped = s.endowment.copy()
            bumped[i] += eps
            assert subproblem_value(s, 0, bumped) <= r.value + eps * r.h[i] + 1e-8


@settings(max_examples=12)
@given(st.integers(0, 2**32 - 1))
def test_tiny_random_against_brute_force(seed):
    s = random_scenario(np.random.default_rng(seed), TINY)
    grid = 1e-3
    J, B = solve(s).value, brute_force_value(s, grid)
    assert B <= J + 1e-7
    assert J - B <= lipschitz_constant(s) * grid


def test_log_budget_identity(ce_free, ce_free_solved):
    """E[U'(f) f] = 1 for log utility."""
    r = ce_free_solved
    P = ce_free.tree.unconditional()
    leaves = ce_free.tree.leaves
    f = np.array([r.payoff[l] for l in leaves])
    assert float(P[leaves] @ (marginal(LOG, f) * f)) == pytest.approx(1.0, abs=1e-12)
    assert float(r.node_duals[0] @ ce_free.endowment) == pytest.approx(1.0, abs=1e-7)
