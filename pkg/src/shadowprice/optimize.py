"""Expected-utility maximization on event trees under proportional costs.

The program is posed in trade variables: at every node a nonnegative
TradeVector (buys and disposals), post-trade holdings at internal nodes
(nonnegative in ``no_short`` mode, free otherwise) and a positive payoff in
asset 1 at every leaf. Holdings evolve by

    V_n - V_parent(n) - (trade change at n) = 0       (V_parent(root) = x)

and at a leaf the post-trade holdings are f e_1. The multiplier of node n's
constraint is the marginal value of one more unit of each asset entering n,
in unconditional terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .ipm import IPMNotConverged, IPMUnbounded, solve_ipm
from .market_core import TradeVector, liquidation_value, trade_matrix
from .scenario import MarketScenario, Strategy, subscenario
from .utility import UtilitySpec, marginal, utility_eval

GAP_RTOL = 1e-7
DPP_RTOL = 1e-6
VOLUME_PENALTY = 1e-10


class SolveError(RuntimeError):
    pass


class Infeasible(SolveError):
    pass


class Unbounded(SolveError):
    pass


class NotConverged(SolveError):
    pass


class TooLarge(ValueError):
    pass


@dataclass
class SolveReport:
    value: float
    strategy: Strategy
    trades: list
    node_duals: np.ndarray
    gap: float
    h: np.ndarray
    iterations: int = 0
    raw_duals: np.ndarray = field(default=None, repr=False)

    @property
    def payoff(self) -> dict:
        return self.strategy.payoff


@dataclass
class _Layout:
    """Column offsets of the per-node variable blocks."""

    trade: list
    state: list
    n_vars: int
    n_trade: int


def _layout(s: MarketScenario) -> _Layout:
    d = s.d
    nt = d * (d - 1) + d
    trade, state, k = [], [], 0
    for node in range(s.tree.size):
        trade.append(k)
        k += nt
        state.append(k)
        k += 1 if s.tree.is_leaf(node) else d
    return _Layout(trade, state, k, nt)


def _program(s: MarketScenario):
    """Constraint matrix, right-hand side and bound mask of the tree program."""
    tree, d = s.tree, s.d
    L = _layout(s)
    rows, cols, vals = [], [], []

    def put(r0, c0, block):
        block = np.atleast_2d(block)
        nz = np.nonzero(block)
        rows.extend(r0 + nz[0])
        cols.extend(c0 + nz[1])
        vals.extend(block[nz])

    for n in range(tree.size):
        r0 = n * d
        put(r0, L.trade[n], -trade_matrix(s.bid_ask[n]))
        if tree.is_leaf(n):
            e1 = np.zeros((d, 1))
            e1[0, 0] = 1.0
            put(r0, L.state[n], e1)
        else:
            put(r0, L.state[n], np.eye(d))
        if n > 0:
            put(r0, L.state[tree.parent[n]], -np.eye(d))
    A = sp.csr_matrix((vals, (rows, cols)), shape=(tree.size * d, L.n_vars))
    b = np.zeros(tree.size * d)
    b[:d] = s.endowment
    bounded = np.ones(L.n_vars, dtype=bool)
    if s.mode == "unconstrained":
        for n in tree.internal:
            bounded[L.state[n]:L.state[n] + d] = False
    leaves = tree.leaves
    fidx = np.array([L.state[n] for n in leaves])
    return A, b, bounded, fidx, leaves, L


def feasibility_margin(s: MarketScenario) -> float:
    """max t such that every leaf payoff can be made >= t (capped at 1)."""
    A, b, bounded, fidx, _, L = _program(s)
    n = L.n_vars
    # variables (x, t); maximize t s.t. A x = b, x[f] - t >= 0
    A_eq = sp.hstack([A, sp.csr_matrix((A.shape[0], 1))])
    G = sp.lil_matrix((len(fidx), n + 1))
    for k, j in enumerate(fidx):
        G[k, j] = -1.0
        G[k, n] = 1.0
    c = np.zeros(n + 1)
    c[-1] = -1.0
    bounds = [(0, None) if bk else (None, None) for bk in bounded] + [(None, 1.0)]
    res = linprog(c, A_ub=G.tocsr(), b_ub=np.zeros(len(fidx)), A_eq=A_eq.tocsr(), b_eq=b,
                  bounds=bounds, method="highs")
    if res.status == 2:
        return -np.inf
    if res.status != 0:
        raise NotConverged(f"feasibility LP failed: {res.message}")
    return float(res.x[-1])


def arbitrage_gain(s: MarketScenario) -> float:
    """max E[f] over strategies from zero endowment with 0 <= f <= 1.

    A positive value is a free lottery: expected utility has no maximizer.
    """
    A, b, bounded, fidx, leaves, L = _program(s)
    P = s.tree.unconditional()
    c = np.zeros(L.n_vars)
    c[fidx] = -P[leaves]
    bounds = [(0, None) if bk else (None, None) for bk in bounded]
    for j in fidx:
        bounds[j] = (0.0, 1.0)
    res = linprog(c, A_eq=A, b_eq=np.zeros_like(b), bounds=bounds, method="highs")
    if res.status != 0:
        raise NotConverged(f"arbitrage LP failed: {res.message}")
    return float(-res.fun)


def minimal_duals(s: MarketScenario, payoff: dict) -> np.ndarray:
    """Smallest consistent marginal values given terminal payoffs.

    Backward recursion: at a leaf one unit of asset i is worth U'(f)/pi[i,1];
    at an internal node it is worth the best direct exchange into some asset j
    carried forward at the expected continuation value of j. Returned per node
    in conditional (per unit probability) terms.
    """
    tree, d = s.tree, s.d
    Z = np.zeros((tree.size, d))
    for n in reversed(tree.order()):
        pi = s.bid_ask[n].pi
        if tree.is_leaf(n):
            m = np.zeros(d)
            m[0] = marginal(s.utility, payoff[n])
        else:
            m = sum(tree.prob[c] * Z[c] for c in tree.children[n])
        Z[n] = (m[None, :] / pi).max(axis=1)
    return Z


def solve(s: MarketScenario, *, tol_gap: float = GAP_RTOL, check_feasible: bool = True,
          penalty: float = VOLUME_PENALTY) -> SolveReport:
    """Maximize expected utility of the liquidated terminal payoff."""
    tree, d, u = s.tree, s.d, s.utility
    if check_feasible:
        if feasibility_margin(s) <= 1e-12:
            raise Infeasible("no strictly positive terminal payoff is reachable")
        gain = arbitrage_gain(s)
        if gain > 1e-9:
            raise Unbounded(f"zero-cost strategy with expected payoff {gain:.3e}")
    A, b, bounded, fidx, leaves, L = _program(s)
    P = tree.unconditional()
    weights = P[leaves]
    c = np.zeros(L.n_vars)
    for n in range(tree.size):
        c[L.trade[n]:L.trade[n] + L.n_trade] = penalty
    try:
        res = solve_ipm(A, b, bounded, fidx, weights, u, c)
    except IPMUnbounded as e:
        raise Unbounded(str(e)) from e
    except IPMNotConverged as e:
        raise NotConverged(str(e)) from e
    x = res.x

    H = np.zeros((tree.size, d))
    trades = []
    payoff = {}
    for n in range(tree.size):
        trades.append(TradeVector.from_flat(s.bid_ask[n], x[L.trade[n]:L.trade[n] + L.n_trade]))
        if tree.is_leaf(n):
            payoff[n] = float(x[L.state[n]])
            H[n, 0] = payoff[n]
        else:
            H[n] = x[L.state[n]:L.state[n] + d]
    f = np.array([payoff[n] for n in leaves])
    value = float(weights @ utility_eval(u, f))
    raw = -res.y.reshape(tree.size, d)
    if s.mode == "no_short":
        duals = minimal_duals(s, payoff) * P[:, None]
    else:
        duals = raw
    h = raw[0].copy()
    budget = float(weights @ (marginal(u, f) * f))
    gap = float(duals[0] @ s.endowment) - budget
    if s.mode == "unconstrained":
        gap = abs(gap)
    gap = max(gap, 0.0) + res.mu * len(bounded)
    if gap > tol_gap * (1.0 + abs(value)):
        raise NotConverged(f"duality gap {gap:.3e} above tolerance")
    return SolveReport(value, Strategy(H, payoff), trades, duals, gap, h, res.iterations, raw)


# ------------------------------------------------------------ value processes

def subproblem_value(s: MarketScenario, node: int, holdings) -> float:
    """Optimal conditional value at ``node`` entered with ``holdings``."""
    holdings = np.array(holdings, dtype=float)
    if s.mode == "no_short":
        holdings = np.maximum(holdings, 0.0)
    if s.tree.is_leaf(node):
        f = liquidation_value(s.bid_ask[node], holdings)
        return float(utility_eval(s.utility, f)) if f > 0 else -np.inf
    return solve(subscenario(s, node, holdings)).value


def conditional_value(s: MarketScenario, v: Strategy, node: int) -> float:
    """J(V, node): re-solve from node with the holdings V carried into it."""
    prev = s.endowment if node == 0 else v.holdings[s.tree.parent[node]]
    return subproblem_value(s, node, prev)


def check_dpp(s: MarketScenario, r) -> float:
    """Largest one-step deviation of J(V, .) from its conditional mean.

    ``r`` is a SolveReport (checks V_hat) or any Strategy.
    """
    tree = s.tree
    v = getattr(r, "strategy", r)
    J = np.array([conditional_value(s, v, n) for n in range(tree.size)])
    dev = 0.0
    for n in tree.internal:
        mean = sum(tree.prob[c] * J[c] for c in tree.children[n])
        dev = max(dev, abs(J[n] - mean))
    return dev


# -------------------------------------------------------- brute-force oracle

MAX_BRUTE_NODES = 16


def position_bounds(s: MarketScenario):
    """Range of the risky position at each internal node over strategies with
    nonnegative terminal payoff (two LPs per node)."""
    A, b, bounded, fidx, _, L = _program(s)
    n = L.n_vars
    bounds = [(0, None) if bk else (None, None) for bk in bounded]
    lo, hi = {}, {}
    for node in s.tree.internal:
        j = L.state[node] + 1
        for sign, out in ((1.0, lo), (-1.0, hi)):
            c = np.zeros(n)
            c[j] = sign
            res = linprog(c, A_eq=A, b_eq=b, bounds=bounds, method="highs")
            if res.status != 0:
                raise Infeasible(f"position bound LP failed at node {node}: {res.message}")
            out[node] = float(res.x[j])
    return lo, hi


def brute_force_value(s: MarketScenario, grid: float) -> float:
    """Exhaustive search over risky positions on a lattice of step ``grid``.

    Two assets only; at each internal node the post-trade risky position is
    chosen from the lattice inside the feasible box, cash follows from the
    bid/ask (and must stay nonnegative under the no-short rule), leaves
    liquidate. Every evaluated strategy is feasible, so the
    result never exceeds the true optimum.
    """
    tree = s.tree
    if s.d != 2 or tree.T > 2 or tree.size > MAX_BRUTE_NODES:
        raise TooLarge(f"brute force needs d=2, T<=2, <= {MAX_BRUTE_NODES} nodes")
    lo, hi = position_bounds(s)
    lattice = {n: np.arange(np.ceil(lo[n] / grid - 1e-9), np.floor(hi[n] / grid + 1e-9) + 1) * grid
               for n in tree.internal}
    u = s.utility
    no_short = s.mode == "no_short"

    def rebalance(n, cash, risky, target):
        pi = s.bid_ask[n].pi
        buy = np.maximum(target - risky, 0.0)
        sell = np.maximum(risky - target, 0.0)
        return cash - pi[0, 1] * buy + sell / pi[1, 0]

    def leaf_value(n, cash, risky):
        pi = s.bid_ask[n].pi
        f = cash + np.where(risky >= 0, risky / pi[1, 0], risky * pi[0, 1])
        out = np.full(f.shape, -np.inf)
        ok = f > 0
        out[ok] = utility_eval(u, f[ok])
        return out

    def value(n, cash, risky):
        """Best conditional value at n for arrays of entering states."""
        if tree.is_leaf(n):
            return leaf_value(n, cash, risky)
        targets = lattice[n]
        best = np.full(cash.shape, -np.inf)
        # chunk the state x target product to bound memory
        step = max(1, 2_000_000 // max(targets.size, 1))
        for k in range(0, cash.size, step):
            c0 = cash[k:k + step, None]
            r0 = risky[k:k + step, None]
            tgt = np.broadcast_to(targets[None, :], (c0.shape[0], targets.size))
            c1 = rebalance(n, c0, r0, tgt)
            total = np.zeros(c1.shape)
            for ch in tree.children[n]:
                total += tree.prob[ch] * value(ch, c1.ravel(), tgt.ravel()).reshape(c1.shape)
            if no_short:
                total[c1 < 0] = -np.inf
            best[k:k + step] = total.max(axis=1)
        return best

    x = s.endowment
    return float(value(0, np.array([x[0]]), np.array([x[1]]))[0])


def lipschitz_constant(s: MarketScenario) -> float:
    """Bound on |J - brute force| per unit grid step.

    Moving every risky position by at most grid/2 changes each payoff by at
    most grid * (T + 1) * max ask; the marginal utility is taken at a quarter
    of the initial liquidation value.
    """
    w0 = liquidation_value(s.bid_ask[0], s.endowment)
    max_ask = max(max(M.pi[0, 1], 1.0 / M.pi[1, 0]) for M in s.bid_ask)
    return (s.tree.T + 1) * max_ask * float(marginal(s.utility, w0 / 4.0))
