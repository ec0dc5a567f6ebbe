"""Random markets and random admissible strategies for property tests and sweeps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .market_core import liquidation_value, validate_bid_ask
from .scenario import MarketScenario, Strategy, make_scenario, make_tree
from .utility import LOG, UtilitySpec

UTILITIES = (LOG, UtilitySpec("power", 0.5), UtilitySpec("power", -1.0))


@dataclass(frozen=True)
class RandomMarketConfig:
    d_choices: tuple = (2, 3, 4)
    T_choices: tuple = (1, 2, 3)
    max_branching: int = 3
    max_cost: float = 0.05
    volatility: float = 0.2
    drift: float = 0.0
    max_nodes: int = 60
    mode: str = "no_short"
    utilities: tuple = UTILITIES


def random_tree(rng: np.random.Generator, T: int, max_branching: int, max_nodes: int = 60):
    parent, time, prob = [-1], [0], [1.0]
    frontier = [0]
    for t in range(1, T + 1):
        nxt = []
        for n in frontier:
            # keep the tree small enough for repeated re-solves
            room = max_nodes - len(parent)
            k = int(rng.integers(1, max_branching + 1)) if room > max_branching * len(frontier) else 1
            w = rng.uniform(0.2, 1.0, size=k)
            w /= w.sum()
            for p in w:
                parent.append(n)
                time.append(t)
                prob.append(float(p))
                nxt.append(len(parent) - 1)
        frontier = nxt
    prob = np.array(prob)
    # renormalize siblings exactly in floating point
    for n in range(len(parent)):
        kids = [c for c in range(len(parent)) if parent[c] == n]
        if kids:
            prob[kids[-1]] = 1.0 - prob[kids[:-1]].sum()
    return make_tree(parent, time, prob)


def close_triangle(pi: np.ndarray) -> np.ndarray:
    """Smallest exchange matrix below ``pi`` satisfying the triangle inequality.

    Shortest paths in log-rates (Floyd-Warshall); the diagonal is reset to 1.
    """
    L = np.log(np.asarray(pi, dtype=float))
    d = L.shape[0]
    for k in range(d):
        L = np.minimum(L, L[:, [k]] + L[[k], :])
    np.fill_diagonal(L, 0.0)
    return np.exp(L)


def random_bid_ask(rng: np.random.Generator, prices, max_cost: float) -> np.ndarray:
    S = np.asarray(prices, dtype=float)
    lam = rng.uniform(0.0, max_cost, size=(S.size, S.size))
    # a few frictionless legs so interior-empty cones are exercised too
    lam[rng.random(lam.shape) < 0.1] = 0.0
    np.fill_diagonal(lam, 0.0)
    pi = (1.0 + lam) * S[None, :] / S[:, None]
    return close_triangle(pi)


def random_scenario(rng: np.random.Generator, cfg: RandomMarketConfig = RandomMarketConfig(),
                    *, d=None, T=None, utility=None) -> MarketScenario:
    d = int(rng.choice(cfg.d_choices)) if d is None else d
    T = int(rng.choice(cfg.T_choices)) if T is None else T
    utility = cfg.utilities[rng.integers(len(cfg.utilities))] if utility is None else utility
    tree = random_tree(rng, T, cfg.max_branching, cfg.max_nodes)
    logS = np.zeros((tree.size, d))
    logS[0, 1:] = rng.normal(0.0, 0.3, size=d - 1)
    for n in tree.order()[1:]:
        step = rng.normal(cfg.drift, cfg.volatility, size=d - 1)
        logS[n, 1:] = logS[tree.parent[n], 1:] + step
    mats = [validate_bid_ask(random_bid_ask(rng, np.exp(logS[n]), cfg.max_cost))
            for n in range(tree.size)]
    x = rng.uniform(0.0, 2.0, size=d) * (rng.random(d) < 0.7)
    if not x.any():
        x[0] = 1.0
    return make_scenario(tree, mats, x, utility, cfg.mode)


def random_admissible_strategy(s: MarketScenario, rng: np.random.Generator,
                               n_trades: int = 2) -> Strategy:
    """Random self-financing strategy that never goes short.

    At every internal node a few exchanges each sell a random fraction of
    one holding for another asset at the node's rate; leaves liquidate.
    Admissible in both modes because no holding turns negative.
    """
    tree, d = s.tree, s.d
    H = np.zeros((tree.size, d))
    payoff = {}
    for n in tree.order():
        h = np.array(s.endowment if n == 0 else H[tree.parent[n]], dtype=float)
        if tree.is_leaf(n):
            payoff[n] = liquidation_value(s.bid_ask[n], h)
            H[n, 0] = payoff[n]
            continue
        pi = s.bid_ask[n].pi
        for _ in range(n_trades):
            i, j = rng.choice(d, size=2, replace=False)
            a = rng.uniform(0.0, 1.0) * h[i]
            h[i] -= a
            h[j] += a / pi[i, j]
        H[n] = h
    return Strategy(H, payoff)
