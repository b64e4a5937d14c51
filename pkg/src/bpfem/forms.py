"""Assembly of the bilinear forms, the nodal stabilization weights and right-hand sides.

All matrices are assembled over every dof of the space (boundary dofs
included) and stored as CSR; callers restrict to interior rows/columns.
Row index = test function, column index = trial function.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fe_space import FeFunction, FeSpace, line_quadrature, reference_basis
from .linalg import SparseMatrix, coo_to_csr
from .mesh import MeshFunction

DIM = 2


# quadrature orders; convection is integrated exactly for affine beta
def _mass_order(k):
    return 2 * k


def _stiffness_order(k):
    return max(2 * k - 2, 2)


def _convection_order(k):
    return 2 * k


def _facet_order(k):
    return 2 * k


def _load_order(k):
    return 2 * k + 2


def _scatter(space: FeSpace, local: np.ndarray) -> SparseMatrix:
    dofs = space.cell_dofs
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1)
    cols = np.tile(dofs, (1, nloc))
    return coo_to_csr(rows, cols, local.reshape(len(dofs), -1), space.num_dofs)


def _beta_at(beta, x, y, t):
    bx, by = beta(x, y, t)
    return np.broadcast_to(bx, np.shape(x)), np.broadcast_to(by, np.shape(x))


def assemble_mass(space: FeSpace) -> SparseMatrix:
    q, w = space.cell_quadrature(_mass_order(space.degree))
    val, _, _, det = space.tabulate(q)
    local = np.einsum("q,qi,qj->ij", w, val, val)[None] * det[:, None, None]
    return _scatter(space, local)


def assemble_stiffness(space: FeSpace) -> SparseMatrix:
    q, w = space.cell_quadrature(_stiffness_order(space.degree))
    _, grad, _, det = space.tabulate(q)
    local = np.einsum("q,cqia,cqja->cij", w, grad, grad) * det[:, None, None]
    return _scatter(space, local)


def assemble_convection(space: FeSpace, beta: Callable, t: float) -> SparseMatrix:
    q, w = space.cell_quadrature(_convection_order(space.degree))
    val, grad, xq, det = space.tabulate(q)
    bx, by = _beta_at(beta, xq[..., 0], xq[..., 1], t)
    bgrad = bx[..., None] * grad[..., 0] + by[..., None] * grad[..., 1]  # (c, q, j)
    local = np.einsum("q,qi,cqj->cij", w, val, bgrad) * det[:, None, None]
    return _scatter(space, local)


def assemble_galerkin(space: FeSpace, eps: float, mu: float, beta: Callable, t: float):
    """Return ``(M, K, C)`` with ``a(w, v) = eps*v'Kw + v'Cw + mu*v'Mw``.

    ``eps`` and ``mu`` only enter through that combination; they are accepted
    so callers can validate the coefficients in one place.
    """
    if eps < 0 or mu < 0:
        raise ValueError("eps and mu must be non-negative")
    return assemble_mass(space), assemble_stiffness(space), assemble_convection(space, beta, t)


def _facet_tabulation(space: FeSpace, order: int):
    """Physical basis gradients of both neighbours at interior-facet quadrature points."""
    mesh = space.mesh
    fi = mesh.interior_facets
    c1, c2 = mesh.facet_cells[fi, 0], mesh.facet_cells[fi, 1]
    a = mesh.vertices[mesh.facets[fi, 0]]
    b = mesh.vertices[mesh.facets[fi, 1]]
    s, ws = line_quadrature(order)
    xq = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]  # (F, q, 2)
    x0, _, _, invT = space.geometry()
    Binv = np.transpose(invT, (0, 2, 1))

    def grads(cells):
        xi = np.einsum("fab,fqb->fqa", Binv[cells], xq - x0[cells][:, None, :])
        _, rg = reference_basis(space.kind, xi.reshape(-1, 2))
        rg = rg.reshape(xi.shape[0], xi.shape[1], -1, 2)
        return np.einsum("fab,fqib->fqia", invT[cells], rg)

    jump = np.concatenate([grads(c1), -grads(c2)], axis=2)  # (F, q, 2*nloc, 2)
    dofs = np.hstack([space.cell_dofs[c1], space.cell_dofs[c2]])
    return fi, a, b, xq, ws, jump, dofs


def assemble_cip(space: FeSpace, gamma: float, beta: Callable, t: float) -> SparseMatrix:
    """Gradient-jump penalty over interior facets, weighted by ``|beta|_inf,F * h_F^2``."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    mesh = space.mesh
    order = _facet_order(space.degree)
    fi, a, b, xq, ws, jump, dofs = _facet_tabulation(space, order)
    if gamma == 0.0 or len(fi) == 0:
        return coo_to_csr([], [], [], space.num_dofs)
    # |beta| sampled at facet end points and quadrature points (exact sup for affine beta)
    pts = np.concatenate([a[:, None, :], b[:, None, :], xq], axis=1)
    bnorm = np.hypot(*_beta_at(beta, pts[..., 0], pts[..., 1], t)).max(axis=1)
    hF = mesh.facet_diameter[fi]
    weight = gamma * bnorm * hF ** 2 * hF  # facet length == h_F for straight edges
    local = np.einsum("q,fqia,fqja->fij", ws, jump, jump) * weight[:, None, None]
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1)
    cols = np.tile(dofs, (1, nloc))
    return coo_to_csr(rows, cols, local.reshape(len(fi), -1), space.num_dofs)


def mesh_function_at_dofs(space: FeSpace, hfun: MeshFunction) -> np.ndarray:
    """Mesh function at every Lagrange node; edge midpoints take the mean of their end points."""
    hv = hfun.value_at_vertex
    nv = space.mesh.num_vertices
    if space.num_dofs == nv:
        return np.array(hv)
    f = space.mesh.facets
    return np.concatenate([hv, 0.5 * (hv[f[:, 0]] + hv[f[:, 1]])])


def lumped_weights(space: FeSpace, hfun: MeshFunction) -> np.ndarray:
    return mesh_function_at_dofs(space, hfun) ** DIM


def patch_beta_norm(space: FeSpace, beta: Callable, t: float) -> np.ndarray:
    """max |beta| over the support of each basis function (sampled at cell vertices)."""
    mesh = space.mesh
    v = mesh.vertices[mesh.cells]
    cellmax = np.hypot(*_beta_at(beta, v[..., 0], v[..., 1], t)).max(axis=1)
    out = np.zeros(space.num_dofs)
    for k in range(space.cell_dofs.shape[1]):
        np.maximum.at(out, space.cell_dofs[:, k], cellmax)
    return out


def assemble_stab_diag(space: FeSpace, hfun: MeshFunction, alpha: float, eps: float,
                       mu: float, beta: Callable, t_n: float, dt: float) -> np.ndarray:
    """Nodal weights ``d_i`` so that ``s(v, w) = sum_i d_i v(x_i) w(x_i)``."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    hd = mesh_function_at_dofs(space, hfun)
    return _stab_weights(hd, patch_beta_norm(space, beta, t_n), alpha, eps, mu, dt)


def _stab_weights(hd, bnorm, alpha, eps, mu, dt):
    return alpha * (eps * hd ** (DIM - 2) + bnorm * hd ** (DIM - 1) + (1.0 / dt + mu) * hd ** DIM)


def lumped_inner(u: FeFunction, v: FeFunction, hfun: MeshFunction) -> float:
    if u.space is not v.space:
        raise ValueError("functions live on different spaces")
    if hfun.mesh is not u.space.mesh:
        raise ValueError("mesh function belongs to a different mesh")
    return float(np.dot(lumped_weights(u.space, hfun) * u.coefficients, v.coefficients))


def load_vector(space: FeSpace, f: Callable, t: float) -> np.ndarray:
    """``(f(., t), phi_i)`` for every dof."""
    q, w = space.cell_quadrature(_load_order(space.degree))
    val, _, xq, det = space.tabulate(q)
    fq = np.broadcast_to(f(xq[..., 0], xq[..., 1], t), xq.shape[:2])
    local = np.einsum("q,qi,cq->ci", w, val, fq) * det[:, None]
    out = np.zeros(space.num_dofs)
    np.add.at(out, space.cell_dofs, local)
    return out


@dataclass(frozen=True, eq=False)
class AssembledForms:
    """Every operator of one time level ``t``."""

    space: FeSpace
    t: float
    eps: float
    mu: float
    M: SparseMatrix
    K: SparseMatrix
    C: SparseMatrix
    Jmat: SparseMatrix
    s_diag: np.ndarray
    lumped_diag: np.ndarray

    def a_J(self) -> SparseMatrix:
        """Matrix of ``a(., .) + J(., .)``."""
        return (self.eps * self.K + self.C + self.mu * self.M + self.Jmat).tocsr()


class FormAssembler:
    """Builds :class:`AssembledForms` for a problem, caching time-independent pieces."""

    def __init__(self, space: FeSpace, problem, hfun: MeshFunction, gamma: float,
                 alpha: float):
        self.space = space
        self.problem = problem
        self.hfun = hfun
        self.gamma = gamma
        self.alpha = alpha
        self.M = assemble_mass(space)
        self.K = assemble_stiffness(space)
        self.lumped = lumped_weights(space, hfun)
        self._cache = {}

    def _beta_ops(self, t):
        # steady beta: one entry for all t; otherwise keep the last two levels
        key = 0.0 if self.problem.steady_beta else float(t)
        if key not in self._cache:
            beta = self.problem.beta
            if len(self._cache) >= 2:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = (assemble_convection(self.space, beta, t),
                                assemble_cip(self.space, self.gamma, beta, t),
                                patch_beta_norm(self.space, beta, t))
        return self._cache[key]

    def at(self, t: float, dt: float) -> AssembledForms:
        if not dt > 0:
            raise ValueError(f"time step must be positive, got {dt}")
        C, J, bn = self._beta_ops(t)
        hd = mesh_function_at_dofs(self.space, self.hfun)
        p = self.problem
        s_diag = _stab_weights(hd, bn, self.alpha, p.eps, p.mu, dt)
        return AssembledForms(self.space, t, p.eps, p.mu, self.M, self.K, C, J,
                              s_diag, self.lumped)


def rhs_fn(forms: AssembledForms, f: Callable, theta: float, dt: float, t_mid: float,
           u_prev_plus: FeFunction) -> np.ndarray:
    """Right-hand side functional of one step tested with every basis function.

    ``forms`` holds the operators of the previous time level; ``t_mid`` is
    ``t_{n-1+theta}``. ``f`` is the source callable or its already assembled
    load vector. Boundary entries are zeroed (they are not unknowns).
    """
    if not 0.5 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [1/2, 1], got {theta}")
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    u = u_prev_plus.coefficients
    F = (1.0 - forms.mu * dt * (1.0 - theta)) * (forms.M @ u)
    if theta < 1.0:
        F -= dt * (1.0 - theta) * (forms.eps * (forms.K @ u) + forms.C @ u + forms.Jmat @ u)
    F += dt * (load_vector(forms.space, f, t_mid) if callable(f) else np.asarray(f))
    F[~forms.space.interior_mask] = 0.0
    return F
