"""Log and power utilities with their marginal, conjugate and inverse marginal."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class UtilitySpec:
    kind: str = "log"
    p: float | None = None

    def __post_init__(self):
        if self.kind == "log":
            if self.p is not None:
                raise ValueError("log utility takes no exponent")
        elif self.kind == "power":
            if self.p is None or not (self.p < 1 and self.p != 0):
                raise ValueError(f"power utility needs p < 1, p != 0, got {self.p!r}")
        else:
            raise ValueError(f"unknown utility kind {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind} if self.kind == "log" else {"kind": self.kind, "p": self.p}


LOG = UtilitySpec("log")


def _positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError(f"argument must be strictly positive, got {x!r}")
    return x


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def utility_eval(u: UtilitySpec, x):
    x = _positive(x)
    if u.kind == "log":
        return _out(np.log(x))
    return _out(x ** u.p / u.p)


def marginal(u: UtilitySpec, x):
    x = _positive(x)
    if u.kind == "log":
        return _out(1.0 / x)
    return _out(x ** (u.p - 1.0))


def curvature(u: UtilitySpec, x):
    """U''(x), negative."""
    x = _positive(x)
    if u.kind == "log":
        return _out(-1.0 / x ** 2)
    return _out((u.p - 1.0) * x ** (u.p - 2.0))


def conjugate(u: UtilitySpec, y):
    """U*(y) = sup_{x>0} U(x) - x y."""
    y = _positive(y)
    if u.kind == "log":
        return _out(-np.log(y) - 1.0)
    p = u.p
    return _out((1.0 - p) / p * y ** (p / (p - 1.0)))


def marginal_inverse(u: UtilitySpec, y):
    y = _positive(y)
    if u.kind == "log":
        return _out(1.0 / y)
    return _out(y ** (1.0 / (u.p - 1.0)))
