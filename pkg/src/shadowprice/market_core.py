"""Bid-ask matrices, solvency cones and liquidation at a single trading date.

Assets are numbered from 1 in messages (asset 1 is the numeraire) and from 0
in array indices.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import linprog

TRIANGLE_RTOL = 1e-12
POLAR_RTOL = 1e-12
CONE_TOL = 1e-9


class BidAskError(ValueError):
    """A matrix violates one of the bid-ask axioms."""

    def __init__(self, message, indices):
        super().__init__(message)
        self.indices = indices


class NonPositiveEntry(BidAskError):
    pass


class DiagonalNotOne(BidAskError):
    pass


class TriangleViolation(BidAskError):
    pass


@dataclass(frozen=True, eq=False)
class BidAskMatrix:
    """pi[i, j] units of asset i buy one unit of asset j."""

    pi: np.ndarray

    @property
    def d(self) -> int:
        return self.pi.shape[0]

    def __eq__(self, other):
        return isinstance(other, BidAskMatrix) and np.array_equal(self.pi, other.pi)

    def __hash__(self):
        return hash(self.pi.tobytes())

    def spread_pairs(self):
        """Pairs i < j with a genuine spread (pi[i,j] * pi[j,i] > 1)."""
        d = self.d
        return [(i, j) for i in range(d) for j in range(i + 1, d)
                if self.pi[i, j] * self.pi[j, i] > 1.0 + TRIANGLE_RTOL]

    def is_frictionless(self) -> bool:
        return not self.spread_pairs()


def validate_bid_ask(pi) -> BidAskMatrix:
    """Check the three bid-ask axioms and return a frozen matrix."""
    arr = np.array(pi, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise ValueError(f"bid-ask matrix must be square with d >= 1, got shape {arr.shape}")
    d = arr.shape[0]
    for i in range(d):
        for j in range(d):
            if not (np.isfinite(arr[i, j]) and arr[i, j] > 0):
                raise NonPositiveEntry(
                    f"NonPositiveEntry at ({i + 1},{j + 1}): {arr[i, j]!r}", (i, j))
    for i in range(d):
        if arr[i, i] != 1.0:
            raise DiagonalNotOne(f"DiagonalNotOne at ({i + 1},{i + 1}): {arr[i, i]!r}", (i, i))
    for i in range(d):
        for k in range(d):
            for j in range(d):
                bound = arr[i, k] * arr[k, j]
                if arr[i, j] > bound * (1.0 + TRIANGLE_RTOL):
                    raise TriangleViolation(
                        f"TriangleViolation: pi[{i + 1}][{j + 1}]={arr[i, j]!r} > "
                        f"pi[{i + 1}][{k + 1}]*pi[{k + 1}][{j + 1}]={bound!r}", (i, j, k))
    arr.setflags(write=False)
    return BidAskMatrix(arr)


def from_price_and_costs(S, lam) -> BidAskMatrix:
    """pi[i, j] = (1 + lam[i, j]) * S[j] / S[i]."""
    S = np.asarray(S, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any(S <= 0):
        raise ValueError("prices must be strictly positive")
    if lam.shape != (S.size, S.size):
        raise ValueError("cost matrix shape does not match price vector")
    if np.any(np.diag(lam) != 0) or np.any(lam < 0):
        raise ValueError("costs must be nonnegative with zero diagonal")
    pi = (1.0 + lam) * S[None, :] / S[:, None]
    np.fill_diagonal(pi, 1.0)
    return validate_bid_ask(pi)


def frictionless(S) -> BidAskMatrix:
    S = np.asarray(S, dtype=float)
    return from_price_and_costs(S, np.zeros((S.size, S.size)))


def generators(M: BidAskMatrix) -> np.ndarray:
    """Rows are the cone generators: e_i, then pi[i,j] e_i - e_j for i != j."""
    d = M.d
    rows = [np.eye(d)[i] for i in range(d)]
    for i, j in _offdiag(d):
        g = np.zeros(d)
        g[i] = M.pi[i, j]
        g[j] -= 1.0
        rows.append(g)
    return np.array(rows)


def _offdiag(d):
    return [(i, j) for i in range(d) for j in range(d) if i != j]


def trade_matrix(M: BidAskMatrix) -> np.ndarray:
    """Columns map (buys off-diagonal, disposals) to the induced holdings change.

    Buying one unit of asset j with asset i changes holdings by e_j - pi[i,j] e_i;
    disposing of one unit of asset j changes them by -e_j.
    """
    d = M.d
    pairs = _offdiag(d)
    B = np.zeros((d, len(pairs) + d))
    for col, (i, j) in enumerate(pairs):
        B[j, col] += 1.0
        B[i, col] -= M.pi[i, j]
    B[:, len(pairs):] = -np.eye(d)
    return B


@dataclass
class TradeVector:
    buys: np.ndarray
    disposals: np.ndarray

    def change(self, M: BidAskMatrix) -> np.ndarray:
        # a diagonal entry cancels out since pi[i, i] = 1
        return self.buys.sum(axis=0) - (M.pi * self.buys).sum(axis=1) - self.disposals

    @classmethod
    def from_flat(cls, M: BidAskMatrix, u: np.ndarray) -> "TradeVector":
        d = M.d
        buys = np.zeros((d, d))
        for col, (i, j) in enumerate(_offdiag(d)):
            buys[i, j] = u[col]
        return cls(buys, np.array(u[d * (d - 1):], dtype=float))


def decompose_change(M: BidAskMatrix, delta):
    """Find a TradeVector inducing ``delta`` and the L1 residual left over.

    Minimizes the L1 residual plus a small volume term so the returned
    decomposition is a sparse one.
    """
    delta = np.asarray(delta, dtype=float)
    B = trade_matrix(M)
    d, m = B.shape
    # variables: trades (m), residual slacks r+ (d), r- (d)
    c = np.concatenate([np.full(m, 1e-9), np.ones(2 * d)])
    A_eq = np.hstack([B, np.eye(d), -np.eye(d)])
    res = linprog(c, A_eq=A_eq, b_eq=delta, bounds=(0, None), method="highs")
    if res.status != 0:
        return None, np.inf
    return TradeVector.from_flat(M, res.x[:m]), float(res.x[m:].sum())


def cone_contains(M: BidAskMatrix, v, tol: float = CONE_TOL) -> bool:
    """Membership of v in the solvency cone K(M).

    v is solvent iff -v is the holdings change of some TradeVector.
    """
    v = np.asarray(v, dtype=float)
    _, resid = decompose_change(M, -v)
    return resid <= tol


def polar_contains(M: BidAskMatrix, z, rtol: float = POLAR_RTOL) -> bool:
    """z in K(M)*: z >= 0 and pi[i,j] z[i] >= z[j].

    ``rtol`` absorbs the same representation error that the triangle check
    tolerates; pass 0 for the bare inequalities.
    """
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        return False
    lhs = M.pi * z[:, None]
    return bool(np.all(lhs >= z[None, :] - rtol * np.maximum(lhs, z[None, :])))


class PolarStatus(str, Enum):
    STRICT = "strict"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"
    INTERIOR_EMPTY = "interior_empty"


def polar_strictly_contains(M: BidAskMatrix, z) -> PolarStatus:
    d = M.d
    if d > 1 and len(M.spread_pairs()) < d * (d - 1) // 2:
        return PolarStatus.INTERIOR_EMPTY
    z = np.asarray(z, dtype=float)
    if not polar_contains(M, z, rtol=0.0):
        return PolarStatus.OUTSIDE
    if np.all(z > 0) and all(M.pi[i, j] * z[i] > z[j] for i, j in _offdiag(d)):
        return PolarStatus.STRICT
    return PolarStatus.BOUNDARY


def strict_margin(M: BidAskMatrix, z) -> float | None:
    """min (pi[i,j] z[i] - z[j]) / z[i] over legs with a genuine spread.

    None when the matrix has no such leg; -inf if a component is not positive.
    """
    z = np.asarray(z, dtype=float)
    pairs = M.spread_pairs()
    if not pairs:
        return None
    if not np.all(z > 0):
        return -np.inf
    return float(min((M.pi[i, j] * z[i] - z[j]) / z[i]
                     for a, b in pairs for i, j in ((a, b), (b, a))))


def liquidation_value(M: BidAskMatrix, v) -> float:
    """max{alpha : v - alpha e_1 in K(M)}."""
    v = np.asarray(v, dtype=float)
    d = M.d
    if d == 1:
        return float(v[0])
    if d == 2:
        # closed form: sell a long risky position at the bid, cover a short at the ask
        a = v[1]
        return float(v[0] + (a / M.pi[1, 0] if a >= 0 else a * M.pi[0, 1]))
    B = trade_matrix(M)
    m = B.shape[1]
    # maximize alpha s.t. v + B u = alpha e_1, u >= 0  (alpha free)
    e1 = np.zeros(d)
    e1[0] = 1.0
    A_eq = np.hstack([B, -e1[:, None]])
    c = np.zeros(m + 1)
    c[-1] = -1.0
    bounds = [(0, None)] * m + [(None, None)]
    res = linprog(c, A_eq=A_eq, b_eq=-v, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"liquidation LP failed: {res.message}")
    return float(res.x[-1])
