"""Event-tree markets: the finite filtration, scenario files, strategy checks
and the two-period counterexample market.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import serialize
from .market_core import (BidAskError, BidAskMatrix, CONE_TOL, TradeVector, decompose_change,
                          liquidation_value, validate_bid_ask)
from .utility import LOG, UtilitySpec

FORMAT_VERSION = 1
PROB_TOL = 1e-12
MODES = ("no_short", "unconstrained")


class ScenarioError(ValueError):
    pass


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    def __init__(self, message, node=None):
        super().__init__(message if node is None else f"node {node}: {message}")
        self.node = node


class ParameterError(ScenarioError):
    pass


class LeafNode(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EventTree:
    """Nodes are indexed 0..N-1, root 0; ``prob`` is conditional on the parent."""

    parent: np.ndarray
    time: np.ndarray
    prob: np.ndarray
    children: tuple = field(init=False, repr=False)

    def __post_init__(self):
        kids = [[] for _ in range(len(self.parent))]
        for n, p in enumerate(self.parent):
            if p >= 0:
                kids[p].append(n)
        object.__setattr__(self, "children", tuple(tuple(k) for k in kids))

    @property
    def size(self) -> int:
        return len(self.parent)

    @property
    def T(self) -> int:
        return int(self.time.max())

    def is_leaf(self, n) -> bool:
        return not self.children[n]

    @property
    def leaves(self):
        return [n for n in range(self.size) if not self.children[n]]

    @property
    def internal(self):
        return [n for n in range(self.size) if self.children[n]]

    def path(self, n):
        """Root-to-n node list."""
        out = []
        while n >= 0:
            out.append(n)
            n = int(self.parent[n])
        return out[::-1]

    def subtree(self, n):
        """Nodes of the subtree rooted at n in breadth-first order."""
        out, frontier = [], [n]
        while frontier:
            out.extend(frontier)
            frontier = [c for m in frontier for c in self.children[m]]
        return out

    def unconditional(self) -> np.ndarray:
        P = np.empty(self.size)
        for n in self.order():
            P[n] = 1.0 if self.parent[n] < 0 else P[self.parent[n]] * self.prob[n]
        return P

    def order(self):
        """Topological (parents first) node order."""
        return self.subtree(0)

    def __eq__(self, other):
        return (isinstance(other, EventTree) and np.array_equal(self.parent, other.parent)
                and np.array_equal(self.time, other.time) and np.array_equal(self.prob, other.prob))


def make_tree(parent, time, prob) -> EventTree:
    parent = np.asarray(parent, dtype=int)
    time = np.asarray(time, dtype=int)
    prob = np.asarray(prob, dtype=float)
    tree = EventTree(parent, time, prob)
    _check_tree(tree)
    for a in (parent, time, prob):
        a.setflags(write=False)
    return tree


def _check_tree(tree: EventTree):
    N = tree.size
    if N == 0:
        raise ValidationError("tree has no nodes")
    roots = [n for n in range(N) if tree.parent[n] < 0]
    if roots != [0]:
        raise ValidationError(f"exactly one root with id 0 required, found {roots}")
    if tree.time[0] != 0:
        raise ValidationError("root must have time 0", 0)
    for n in range(1, N):
        p = tree.parent[n]
        if not 0 <= p < N:
            raise ValidationError(f"unknown parent {p}", n)
        if tree.time[n] != tree.time[p] + 1:
            raise ValidationError(f"time {tree.time[n]} but parent {p} has time {tree.time[p]}", n)
    if len(tree.order()) != N:
        raise ValidationError("nodes not connected to the root")
    for n in range(N):
        if not (0.0 < tree.prob[n] <= 1.0):
            raise ValidationError(f"conditional probability {tree.prob[n]!r} outside (0, 1]", n)
    if tree.prob[0] != 1.0:
        raise ValidationError("root probability must be 1", 0)
    T = tree.T
    for n in range(N):
        kids = tree.children[n]
        if kids:
            total = float(sum(tree.prob[c] for c in kids))
            if abs(total - 1.0) > PROB_TOL:
                raise ValidationError(f"children probabilities sum to {total!r}", n)
        elif tree.time[n] != T:
            raise ValidationError(f"leaf at time {tree.time[n]} before horizon {T}", n)


@dataclass(frozen=True, eq=False)
class MarketScenario:
    tree: EventTree
    bid_ask: tuple
    endowment: np.ndarray
    utility: UtilitySpec = LOG
    mode: str = "no_short"

    @property
    def d(self) -> int:
        return self.bid_ask[0].d

    def __eq__(self, other):
        return (isinstance(other, MarketScenario) and self.tree == other.tree
                and len(self.bid_ask) == len(other.bid_ask)
                and all(a == b for a, b in zip(self.bid_ask, other.bid_ask))
                and np.array_equal(self.endowment, other.endowment)
                and self.utility == other.utility and self.mode == other.mode)

    def replace(self, **kw) -> "MarketScenario":
        fields = dict(tree=self.tree, bid_ask=self.bid_ask, endowment=self.endowment,
                      utility=self.utility, mode=self.mode)
        fields.update(kw)
        return make_scenario(**fields)


def make_scenario(tree, bid_ask, endowment, utility=LOG, mode="no_short") -> MarketScenario:
    """Assemble and validate a scenario; matrices may be raw arrays."""
    if mode not in MODES:
        raise ValidationError(f"unknown mode {mode!r}")
    mats = []
    for n, m in enumerate(bid_ask):
        if not isinstance(m, BidAskMatrix):
            try:
                m = validate_bid_ask(m)
            except BidAskError as e:
                raise ValidationError(str(e), n) from e
        mats.append(m)
    if len(mats) != tree.size:
        raise ValidationError(f"{len(mats)} matrices for {tree.size} nodes")
    d = mats[0].d
    for n, m in enumerate(mats):
        if m.d != d:
            raise ValidationError(f"matrix dimension {m.d} differs from {d}", n)
    x = np.array(endowment, dtype=float)
    if x.shape != (d,):
        raise ValidationError(f"endowment has shape {x.shape}, expected ({d},)")
    if mode == "no_short":
        if np.any(x < 0) or not np.any(x > 0):
            raise ValidationError("no_short mode needs a nonnegative, nonzero endowment", 0)
    elif liquidation_value(mats[0], x) <= 0:
        raise ValidationError("endowment has nonpositive liquidation value", 0)
    x.setflags(write=False)
    return MarketScenario(tree, tuple(mats), x, utility, mode)


def subscenario(s: MarketScenario, node: int, holdings) -> MarketScenario:
    """The market restricted to the subtree at ``node``, entered with ``holdings``."""
    nodes = s.tree.subtree(node)
    index = {n: k for k, n in enumerate(nodes)}
    parent = [-1] + [index[int(s.tree.parent[n])] for n in nodes[1:]]
    time = [int(s.tree.time[n] - s.tree.time[node]) for n in nodes]
    prob = [1.0] + [float(s.tree.prob[n]) for n in nodes[1:]]
    tree = EventTree(np.array(parent), np.array(time), np.array(prob))
    x = np.array(holdings, dtype=float)
    return MarketScenario(tree, tuple(s.bid_ask[n] for n in nodes), x, s.utility, s.mode)


# ---------------------------------------------------------------- file format

def _scenario_dict(s: MarketScenario) -> dict:
    nodes = []
    for n in range(s.tree.size):
        nodes.append({
            "id": n,
            "time": int(s.tree.time[n]),
            "parent": None if n == 0 else int(s.tree.parent[n]),
            "prob": float(s.tree.prob[n]),
            "pi": s.bid_ask[n].pi.tolist(),
        })
    return {
        "version": FORMAT_VERSION,
        "d": s.d,
        "mode": s.mode,
        "utility": s.utility.to_dict(),
        "endowment": s.endowment.tolist(),
        "nodes": nodes,
    }


def save_scenario(s: MarketScenario) -> bytes:
    return serialize.dump_bytes(_scenario_dict(s))


def load_scenario(text) -> MarketScenario:
    try:
        raw = serialize.loads(text)
    except (UnicodeDecodeError, ValueError) as e:
        raise ParseError(f"not a JSON document: {e}") from e
    try:
        if raw["version"] != FORMAT_VERSION:
            raise ParseError(f"unsupported version {raw['version']!r}")
        d = int(raw["d"])
        util = raw["utility"]
        utility = UtilitySpec(util["kind"], None if util.get("p") is None else float(util["p"]))
        nodes = sorted(raw["nodes"], key=lambda r: int(r["id"]))
        ids = [int(r["id"]) for r in nodes]
        if ids != list(range(len(ids))):
            raise ValidationError(f"node ids must be 0..{len(ids) - 1}, got {ids}")
        parent = [-1 if r["parent"] is None else int(r["parent"]) for r in nodes]
        time = [int(r["time"]) for r in nodes]
        prob = [float(r["prob"]) for r in nodes]
        mats = [np.array(r["pi"], dtype=float) for r in nodes]
        endowment = [float(v) for v in raw["endowment"]]
        mode = raw["mode"]
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed scenario: {e!r}") from e
    for n, m in enumerate(mats):
        if m.shape != (d, d):
            raise ValidationError(f"matrix shape {m.shape}, expected ({d}, {d})", n)
    tree = make_tree(parent, time, prob)
    return make_scenario(tree, mats, endowment, utility, mode)


# ------------------------------------------------------------- counterexample

def build_counterexample(n: int = 10, kmax: int = 20, x=(4.0, -1.0), mode="unconstrained",
                         utility: UtilitySpec = LOG) -> MarketScenario:
    """Two-period market with deterministic bids 3, 2, 1 and a heavy-tailed ask.

    The time-1 ask is 2 + k with probability 2^(-n-k) (k >= 1); all mass of
    k >= kmax sits on the branch k = kmax. From ask 2 + k the time-2 ask is
    3 + k with probability 2^(-n-k) and 1 otherwise. Node order: root, the
    time-1 nodes k = 0..kmax, then for each k its (ask 1, ask 3+k) leaves.
    """
    if n < 1 or kmax < 1:
        raise ParameterError("n and kmax must be >= 1")
    bid = (3.0, 2.0, 1.0)
    p1 = [1.0 - 2.0 ** -n] + [2.0 ** (-n - k) for k in range(1, kmax)] + [2.0 ** (-n - kmax + 1)]
    for k in range(kmax + 1):
        up = 2.0 ** (-n - k)
        if not (0.0 < up < 1.0 and 0.0 < 1.0 - up < 1.0):
            raise ParameterError(f"probability 2^-{n + k} not representable inside (0, 1)")
    if not all(0.0 < p < 1.0 for p in p1):
        raise ParameterError("time-1 probabilities leave (0, 1)")

    def mat(ask, b):
        return [[1.0, ask], [1.0 / b, 1.0]]

    parent, time, prob, mats = [-1], [0], [1.0], [mat(3.0, bid[0])]
    for k in range(kmax + 1):
        parent.append(0)
        time.append(1)
        prob.append(p1[k])
        mats.append(mat(2.0 + k, bid[1]))
    for k in range(kmax + 1):
        up = 2.0 ** (-n - k)
        for p, ask in ((1.0 - up, 1.0), (up, 3.0 + k)):
            parent.append(1 + k)
            time.append(2)
            prob.append(p)
            mats.append(mat(ask, bid[2]))
    return make_scenario(make_tree(parent, time, prob), mats, x, utility, mode)


def counterexample_nodes(kmax: int):
    """Node ids of the counterexample: (time-1 node k, down leaf, up leaf)."""
    return [(1 + k, kmax + 2 + 2 * k, kmax + 3 + 2 * k) for k in range(kmax + 1)]


# ------------------------------------------------------------------ strategies

@dataclass
class Strategy:
    """Post-trade holdings per node and the terminal payoff per leaf.

    Leaf holdings are liquidated at the leaf's matrix; ``payoff`` records the
    amount of asset 1 collected.
    """

    holdings: np.ndarray
    payoff: dict


def do_nothing(s: MarketScenario) -> Strategy:
    H = np.tile(s.endowment, (s.tree.size, 1))
    f = {}
    for leaf in s.tree.leaves:
        f[leaf] = liquidation_value(s.bid_ask[leaf], s.endowment)
        H[leaf] = 0.0
        H[leaf, 0] = f[leaf]
    return Strategy(H, f)


@dataclass
class TradeReport:
    trades: list
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def max_residual(self) -> float:
        return max((v[2] for v in self.violations), default=0.0)


def check_self_financing(s: MarketScenario, v: Strategy, tol: float = CONE_TOL) -> TradeReport:
    """Witness every holdings increment as a trade at the node's prices."""
    tree = s.tree
    H = np.asarray(v.holdings, dtype=float)
    report = TradeReport(trades=[None] * tree.size)
    for n in tree.order():
        prev = s.endowment if n == 0 else H[tree.parent[n]]
        scale = max(1.0, float(np.abs(prev).max()), float(np.abs(H[n]).max()))
        trade, resid = decompose_change(s.bid_ask[n], H[n] - prev)
        report.trades[n] = trade
        if resid > tol * scale:
            report.violations.append((n, "increment not in -K", resid))
        if s.mode == "no_short" and H[n].min() < -tol * scale:
            report.violations.append((n, "short position", float(-H[n].min())))
        if tree.is_leaf(n):
            f = v.payoff.get(n)
            if f is None:
                report.violations.append((n, "missing terminal payoff", np.inf))
                continue
            if not f > 0:
                report.violations.append((n, "terminal payoff not positive", float(-f)))
            liq = liquidation_value(s.bid_ask[n], H[n])
            if f > liq + tol * scale:
                report.violations.append((n, "payoff exceeds liquidation value", float(f - liq)))
    return report


def conditional_expectation(tree: EventTree, values, node: int):
    kids = tree.children[node]
    if not kids:
        raise LeafNode(f"node {node} has no children")
    return sum(tree.prob[c] * np.asarray(values[c], dtype=float) for c in kids)
