"""Primal-dual interior-point method for separable concave utility programs.

Solves

    min  -sum_k w_k U(x[f_k]) + c.x    s.t.  A x = b,  x[B] >= 0

where U is a utility from :mod:`shadowprice.utility`, the utility arguments
are a subset of the bounded variables, and the remaining variables are free.
Mehrotra predictor-corrector steps on the perturbed KKT system; the utility
barrier keeps the payoffs strictly positive.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .utility import UtilitySpec, curvature, marginal, utility_eval


class IPMError(RuntimeError):
    pass


class IPMUnbounded(IPMError):
    pass


class IPMNotConverged(IPMError):
    pass


@dataclass
class IPMResult:
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    iterations: int
    mu: float
    primal_residual: float
    dual_residual: float


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def solve_ipm(A, b, bounded, fidx, weights, u: UtilitySpec, c=None, *, tol=1e-13,
              max_iter=300, blowup=1e13) -> IPMResult:
    A = sp.csr_matrix(A)
    m, n = A.shape
    b = np.asarray(b, dtype=float)
    bounded = np.asarray(bounded, dtype=bool)
    fidx = np.asarray(fidx, dtype=int)
    w = np.asarray(weights, dtype=float)
    c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
    free = ~bounded
    nb = int(bounded.sum())
    AT = A.T.tocsr()

    x = np.where(bounded, 1.0, 0.0)
    s = np.where(bounded, 1.0, 0.0)
    y = np.zeros(m)
    reg_p, reg_d = 1e-12, 1e-14
    bscale = 1.0 + np.abs(b).max(initial=0.0)

    for it in range(max_iter):
        xf = x[fidx]
        grad = c.copy()
        grad[fidx] -= w * marginal(u, xf)
        hdiag = np.zeros(n)
        hdiag[fidx] = -w * curvature(u, xf)
        rd = grad - AT @ y - s
        rp = A @ x - b
        mu = float(x[bounded] @ s[bounded]) / max(nb, 1)
        gscale = 1.0 + np.abs(grad).max()
        pres = np.abs(rp).max(initial=0.0) / bscale
        dres = np.abs(rd).max(initial=0.0) / gscale
        if pres <= tol and dres <= tol and mu <= tol:
            return IPMResult(x, y, s, it, mu, pres, dres)
        if np.abs(x).max() > blowup:
            raise IPMUnbounded(f"iterates diverged after {it} iterations")

        D = hdiag.copy()
        D[bounded] += s[bounded] / x[bounded]
        D[free] += reg_p
        K = sp.bmat([[sp.diags(D), AT], [A, sp.diags(np.full(m, -reg_d))]], format="csc")
        try:
            lu = splu(K)
        except RuntimeError as e:
            raise IPMNotConverged(f"singular KKT matrix at iteration {it}: {e}") from e

        def direction(rc):
            rhs1 = -rd.copy()
            rhs1[bounded] -= rc[bounded] / x[bounded]
            sol = lu.solve(np.concatenate([rhs1, -rp]))
            dx, dy = sol[:n], -sol[n:]
            ds = np.zeros(n)
            ds[bounded] = (-rc[bounded] - s[bounded] * dx[bounded]) / x[bounded]
            return dx, dy, ds

        rc = np.where(bounded, x * s, 0.0)
        dx, dy, ds = direction(rc)
        ap = _max_step(x[bounded], dx[bounded])
        ad = _max_step(s[bounded], ds[bounded])
        mu_aff = float((x[bounded] + ap * dx[bounded]) @ (s[bounded] + ad * ds[bounded])) / max(nb, 1)
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
        rc = np.where(bounded, x * s + dx * ds - sigma * mu, 0.0)
        dx, dy, ds = direction(rc)

        eta = 0.995
        ap = min(1.0, eta * _max_step(x[bounded], dx[bounded]))
        ad = min(1.0, eta * _max_step(s[bounded], ds[bounded]))
        x = x + ap * dx
        y = y + ap * dy
        s = s + ad * ds
        if not np.all(x[bounded] > 0) or not np.all(np.isfinite(x)):
            raise IPMNotConverged(f"lost interiority at iteration {it}")

    raise IPMNotConverged(
        f"no convergence in {max_iter} iterations (mu={mu:.3e}, primal={pres:.3e}, dual={dres:.3e})")


def objective(u: UtilitySpec, x, weights):
    return float(np.dot(weights, utility_eval(u, x)))
