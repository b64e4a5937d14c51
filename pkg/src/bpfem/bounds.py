"""Admissible set of nodal values and the clipping projection onto it."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .fe_space import FeFunction

ADMISSIBLE_TOL = 1e-13


def _zero(t):
    return 0.0


@dataclass(frozen=True)
class BoundSpec:
    """Bounds ``lower(t) <= u(x_i, t) <= upper(t)`` on every nodal value."""

    upper: Callable[[float], float]
    lower: Callable[[float], float] = field(default=_zero)

    def at(self, t: float) -> tuple[float, float]:
        lo, hi = float(self.lower(t)), float(self.upper(t))
        if not lo < hi:
            raise ValueError(f"empty admissible interval [{lo}, {hi}] at t={t}")
        return lo, hi

    @classmethod
    def constant(cls, upper: float, lower: float = 0.0) -> "BoundSpec":
        return cls(upper=lambda t: upper, lower=lambda t: lower)


class SplitFunction(NamedTuple):
    plus: FeFunction
    minus: FeFunction


def clip(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.maximum(lo, np.minimum(values, hi))


def split(u: FeFunction, bounds: BoundSpec, t: float) -> SplitFunction:
    """Constrained part (nodal values clipped to the bounds) and the remainder."""
    lo, hi = bounds.at(t)
    plus = clip(u.coefficients, lo, hi)
    return SplitFunction(FeFunction(u.space, plus), FeFunction(u.space, u.coefficients - plus))


def is_admissible(u: FeFunction, bounds: BoundSpec, t: float, tol: float = ADMISSIBLE_TOL) -> bool:
    lo, hi = bounds.at(t)
    c = u.coefficients
    return bool(np.all(c >= lo - tol) and np.all(c <= hi + tol))
