"""Lagrange P1/P2 (triangles) and Q1 (parallelograms) spaces on a :class:`Mesh`.

The reference triangle is ``{xi, eta >= 0, xi + eta <= 1}`` and the reference
square is ``[0, 1]^2``. Local P2 nodes are the three vertices followed by the
midpoints of the edges opposite vertex 0, 1 and 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_jacobi

from .mesh import LOCAL_EDGES, QUADRILATERAL, TRIANGLE, Mesh

P1, P2, Q1 = "P1", "P2", "Q1"
DEGREE = {P1: 1, P2: 2, Q1: 1}
CELL_KIND = {P1: TRIANGLE, P2: TRIANGLE, Q1: QUADRILATERAL}
MAX_QUADRATURE_ORDER = 30
BOUNDARY_TOL = 1e-12


class OutOfDomainError(ValueError):
    """A point handed to :func:`evaluate` is not in any cell."""


# ---------------------------------------------------------------- quadrature

@lru_cache(maxsize=None)
def _quadrature(cell_kind, order):
    if int(order) != order or order < 1 or order > MAX_QUADRATURE_ORDER:
        raise ValueError(f"unsupported quadrature order {order!r} "
                         f"(need 1 <= order <= {MAX_QUADRATURE_ORDER})")
    m = (int(order) + 2) // 2  # Gauss with m points is exact to degree 2m - 1
    g, gw = np.polynomial.legendre.leggauss(m)
    g, gw = (g + 1.0) / 2.0, gw / 2.0
    if cell_kind == QUADRILATERAL:
        X, Y = np.meshgrid(g, g, indexing="ij")
        W = np.outer(gw, gw)
        return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()
    if cell_kind == TRIANGLE:
        # collapsed (conical product) rule: weight (1 - u) absorbed by Gauss-Jacobi
        j, jw = roots_jacobi(m, 1.0, 0.0)
        u, uw = (j + 1.0) / 2.0, jw / 4.0
        U, V = np.meshgrid(u, g, indexing="ij")
        W = np.outer(uw, gw)
        pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
        return pts, W.ravel()
    raise ValueError(f"unknown cell kind {cell_kind!r}")


def quadrature(cell_kind: str, order: int):
    """Points and weights on the reference cell, exact for polynomials of degree ``order``.

    For the square, ``order`` is the degree in each variable separately.
    """
    pts, w = _quadrature(cell_kind, order)
    return pts.copy(), w.copy()


def line_quadrature(order: int):
    """Gauss-Legendre rule on [0, 1] exact to degree ``order``."""
    if order < 1:
        raise ValueError("order must be >= 1")
    g, gw = np.polynomial.legendre.leggauss((int(order) + 2) // 2)
    return (g + 1.0) / 2.0, gw / 2.0


# ------------------------------------------------------------ reference bases

def reference_basis(kind: str, pts: np.ndarray):
    """Values ``(nq, nloc)`` and reference gradients ``(nq, nloc, 2)`` at ``pts``."""
    x, y = pts[:, 0], pts[:, 1]
    one, zero = np.ones_like(x), np.zeros_like(x)
    if kind == P1:
        val = np.column_stack([1.0 - x - y, x, y])
        grad = np.stack([np.column_stack([-one, -one]),
                         np.column_stack([one, zero]),
                         np.column_stack([zero, one])], axis=1)
    elif kind == P2:
        l0, l1, l2 = 1.0 - x - y, x, y
        dl = (np.array([-1.0, -1.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        lam = (l0, l1, l2)
        val = np.column_stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                               4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1])
        grads = [(4 * lam[i] - 1)[:, None] * dl[i] for i in range(3)]
        for i, j in ((1, 2), (2, 0), (0, 1)):
            grads.append(4 * (lam[i][:, None] * dl[j] + lam[j][:, None] * dl[i]))
        grad = np.stack(grads, axis=1)
    elif kind == Q1:
        val = np.column_stack([(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y])
        grad = np.stack([np.column_stack([-(1 - y), -(1 - x)]),
                         np.column_stack([1 - y, -x]),
                         np.column_stack([y, x]),
                         np.column_stack([-y, 1 - x])], axis=1)
    else:
        raise ValueError(f"unknown element kind {kind!r}")
    return val, grad


def reference_nodes(kind: str) -> np.ndarray:
    if kind == P1:
        return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    if kind == P2:
        return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0],
                         [0.5, 0.5], [0.0, 0.5], [0.5, 0.0]])
    if kind == Q1:
        return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    raise ValueError(f"unknown element kind {kind!r}")


# ------------------------------------------------------------------- spaces

@dataclass(frozen=True, eq=False)
class FeSpace:
    mesh: Mesh
    kind: str
    dof_coords: np.ndarray
    cell_dofs: np.ndarray
    interior_mask: np.ndarray

    @property
    def degree(self) -> int:
        return DEGREE[self.kind]

    @property
    def num_dofs(self) -> int:
        return len(self.dof_coords)

    @property
    def interior_dofs(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask)

    def geometry(self):
        """Per-cell affine data: origin ``x0``, Jacobian ``B``, ``|det B|`` and ``B^{-T}``."""
        x0, B = self.mesh.affine_maps()
        det = B[:, 0, 0] * B[:, 1, 1] - B[:, 0, 1] * B[:, 1, 0]
        invT = np.empty_like(B)
        invT[:, 0, 0] = B[:, 1, 1] / det
        invT[:, 0, 1] = -B[:, 1, 0] / det
        invT[:, 1, 0] = -B[:, 0, 1] / det
        invT[:, 1, 1] = B[:, 0, 0] / det
        return x0, B, np.abs(det), invT

    def tabulate(self, ref_pts: np.ndarray):
        """Basis values ``(nq, nloc)``, physical gradients ``(nc, nq, nloc, 2)``,
        physical points ``(nc, nq, 2)`` and ``|det B|`` per cell."""
        x0, B, det, invT = self.geometry()
        val, rgrad = reference_basis(self.kind, ref_pts)
        grad = np.einsum("cab,qib->cqia", invT, rgrad)
        xq = x0[:, None, :] + np.einsum("cab,qb->cqa", B, ref_pts)
        return val, grad, xq, det

    def cell_quadrature(self, order: int):
        return quadrature(self.mesh.cell_kind, order)


@dataclass(eq=False)
class FeFunction:
    """Coefficient vector over all dofs of ``space`` (boundary dofs included)."""

    space: FeSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.num_dofs,):
            raise ValueError(f"expected {self.space.num_dofs} coefficients, "
                             f"got shape {self.coefficients.shape}")

    def copy(self) -> "FeFunction":
        return FeFunction(self.space, self.coefficients.copy())


def build_space(mesh: Mesh, kind: str) -> FeSpace:
    if kind not in CELL_KIND:
        raise ValueError(f"unknown element kind {kind!r}")
    if CELL_KIND[kind] != mesh.cell_kind:
        raise ValueError(f"{kind} elements need a {CELL_KIND[kind]} mesh, "
                         f"got {mesh.cell_kind}")
    coords = mesh.vertices
    cell_dofs = mesh.cells
    if kind == P2:
        # edges of a triangle mesh are its facets; edge e gets dof nv + e
        mid = 0.5 * (mesh.vertices[mesh.facets[:, 0]] + mesh.vertices[mesh.facets[:, 1]])
        coords = np.vstack([mesh.vertices, mid])
        cell_dofs = np.hstack([mesh.cells, mesh.num_vertices + mesh.cell_facets])
    on_bdry = np.any((np.abs(coords) <= BOUNDARY_TOL) | (np.abs(coords - 1.0) <= BOUNDARY_TOL),
                     axis=1)
    coords = np.array(coords, dtype=float)
    cell_dofs = np.array(cell_dofs, dtype=np.int64)
    interior = ~on_bdry
    for a in (coords, cell_dofs, interior):
        a.setflags(write=False)
    return FeSpace(mesh, kind, coords, cell_dofs, interior)


def interpolate(space: FeSpace, g: Callable, t: float = 0.0) -> FeFunction:
    """Nodal interpolant; ``g(x, y, t)`` is called with arrays of dof coordinates."""
    x, y = space.dof_coords[:, 0], space.dof_coords[:, 1]
    vals = np.broadcast_to(np.asarray(g(x, y, t), dtype=float), x.shape)
    return FeFunction(space, np.array(vals))


# --------------------------------------------------------------- evaluation

class _CellLocator:
    """Uniform bucket grid over cell bounding boxes."""

    def __init__(self, space: FeSpace):
        mesh = space.mesh
        self.x0, B, _, invT = space.geometry()
        self.Binv = np.transpose(invT, (0, 2, 1))
        p = mesh.vertices[mesh.cells]
        lo, hi = p.min(axis=1), p.max(axis=1)
        self.nb = max(1, int(np.sqrt(mesh.num_cells / 2)))
        pad = 1e-12
        ilo = np.clip(np.floor((lo - pad) * self.nb).astype(int), 0, self.nb - 1)
        ihi = np.clip(np.floor((hi + pad) * self.nb).astype(int), 0, self.nb - 1)
        buckets = [[] for _ in range(self.nb * self.nb)]
        for c in range(mesh.num_cells):
            for bx in range(ilo[c, 0], ihi[c, 0] + 1):
                for by in range(ilo[c, 1], ihi[c, 1] + 1):
                    buckets[by * self.nb + bx].append(c)
        self.buckets = [np.array(b, dtype=np.int64) for b in buckets]
        self.triangle = mesh.cell_kind == TRIANGLE

    def locate(self, pt, tol=1e-12):
        if np.any(pt < -tol) or np.any(pt > 1.0 + tol):
            raise OutOfDomainError(f"point {tuple(pt)} lies outside the unit square")
        b = np.clip(np.floor(pt * self.nb).astype(int), 0, self.nb - 1)
        cand = self.buckets[b[1] * self.nb + b[0]]
        xi = np.einsum("cab,cb->ca", self.Binv[cand], pt - self.x0[cand])
        if self.triangle:
            inside = (xi[:, 0] >= -tol) & (xi[:, 1] >= -tol) & (xi.sum(axis=1) <= 1 + tol)
        else:
            inside = np.all((xi >= -tol) & (xi <= 1 + tol), axis=1)
        hit = np.flatnonzero(inside)
        if len(hit) == 0:
            raise OutOfDomainError(f"point {tuple(pt)} is not inside any cell")
        return cand[hit[0]], np.clip(xi[hit[0]], 0.0, 1.0)


def evaluate(u: FeFunction, points) -> np.ndarray:
    """Point values of ``u``; the first cell (in cell order) containing a point wins."""
    space = u.space
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    loc = getattr(space, "_locator", None)
    if loc is None:
        loc = _CellLocator(space)
        object.__setattr__(space, "_locator", loc)
    cells = np.empty(len(pts), dtype=np.int64)
    xis = np.empty((len(pts), 2))
    for k, p in enumerate(pts):
        cells[k], xis[k] = loc.locate(p)
    val, _ = reference_basis(space.kind, xis)
    return np.einsum("pi,pi->p", val, u.coefficients[space.cell_dofs[cells]])
