"""Benchmark problems: a smooth manufactured solution and the three-body rotation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .bounds import BoundSpec

Field = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    """``du/dt - eps*lap(u) + beta.grad(u) + mu*u = f`` on (0,1)^2, ``u = 0`` on the boundary.

    ``beta(x, y, t)`` returns the pair ``(bx, by)``. ``steady_beta`` tells the
    stepper it may reuse operators across time steps.
    """

    name: str
    eps: float
    beta: Callable
    mu: float
    f: Field
    u0: Field
    bounds: BoundSpec
    exact: Optional[Field] = None
    exact_grad: Optional[Callable] = None
    steady_beta: bool = True

    def beta_magnitude(self, x, y, t):
        bx, by = self.beta(x, y, t)
        return np.hypot(np.broadcast_to(bx, np.shape(x)), np.broadcast_to(by, np.shape(x)))


def divergence_residual(problem: ProblemSpec, npoints: int = 100, t: float = 0.0,
                        step: float = 1e-5, seed: int = 0) -> float:
    """Largest central-difference divergence of beta over random interior points."""
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(step, 1 - step, size=(2, npoints))
    bxp, _ = problem.beta(x + step, y, t)
    bxm, _ = problem.beta(x - step, y, t)
    _, byp = problem.beta(x, y + step, t)
    _, bym = problem.beta(x, y - step, t)
    div = (np.asarray(bxp) - bxm) / (2 * step) + (np.asarray(byp) - bym) / (2 * step)
    return float(np.max(np.abs(div)))


# ------------------------------------------------------------------ smooth

def _smooth(eps=1e-6, bx=2.0, by=1.0, mu=1.0) -> ProblemSpec:
    pi = np.pi

    def exact(x, y, t):
        return np.exp(t) * np.sin(pi * x) * np.sin(pi * y)

    def grad(x, y, t):
        e = np.exp(t) * pi
        return (e * np.cos(pi * x) * np.sin(pi * y), e * np.sin(pi * x) * np.cos(pi * y))

    def f(x, y, t):
        # u_t = u and -lap(u) = 2 pi^2 u for this u
        gx, gy = grad(x, y, t)
        return (1.0 + 2 * eps * pi ** 2 + mu) * exact(x, y, t) + bx * gx + by * gy

    def beta(x, y, t):
        return (np.full_like(np.asarray(x, dtype=float), bx),
                np.full_like(np.asarray(y, dtype=float), by))

    return ProblemSpec(
        name="smooth", eps=eps, beta=beta, mu=mu, f=f,
        u0=lambda x, y, t: exact(x, y, 0.0),
        bounds=BoundSpec(upper=np.exp),
        exact=exact, exact_grad=grad,
    )


# ---------------------------------------------------------------- rotation

R0 = 0.15
SLOT_HALF_WIDTH = 0.0225
SLOT_TOP = 0.85


def rotation_initial(x, y, t=0.0):
    """Slotted cylinder, cone and hump, each inside a disk of radius 0.15."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.zeros(np.broadcast(x, y).shape)

    r = np.hypot(x - 0.5, y - 0.75) / R0
    cyl = (r <= 1.0) & ((np.abs(x - 0.5) >= SLOT_HALF_WIDTH) | (y >= SLOT_TOP))
    u = np.where(cyl, 1.0, u)

    r = np.hypot(x - 0.5, y - 0.25) / R0
    u = np.where(r <= 1.0, 1.0 - r, u)

    r = np.hypot(x - 0.25, y - 0.5) / R0
    u = np.where(r <= 1.0, 0.25 * (1.0 + np.cos(np.pi * np.minimum(r, 1.0))), u)
    return u


def _rotation(eps=1e-12) -> ProblemSpec:
    def beta(x, y, t):
        return (0.5 - np.asarray(y, dtype=float), np.asarray(x, dtype=float) - 0.5)

    return ProblemSpec(
        name="rotation", eps=eps, beta=beta, mu=0.0,
        f=lambda x, y, t: np.zeros(np.broadcast(x, y).shape),
        u0=rotation_initial,
        bounds=BoundSpec.constant(1.0),
    )


PRESETS = {"smooth": _smooth, "rotation": _rotation}


def preset(name: str) -> ProblemSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PRESETS)}") from None
