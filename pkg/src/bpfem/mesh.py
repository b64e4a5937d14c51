"""Structured meshes of the unit square and the nodal mesh function."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TRIANGLE = "triangle"
QUADRILATERAL = "quadrilateral"

# local edges of each cell kind, as pairs of local vertex indices
LOCAL_EDGES = {
    TRIANGLE: ((1, 2), (2, 0), (0, 1)),
    QUADRILATERAL: ((0, 1), (1, 2), (2, 3), (3, 0)),
}


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming 2D mesh made of triangles or of parallelograms.

    Cells are stored counterclockwise. Facets are unique vertex pairs
    ``(a, b)`` with ``a < b``; ``facet_cells[f, 1] == -1`` marks a boundary
    facet.
    """

    vertices: np.ndarray
    cells: np.ndarray
    cell_kind: str
    facets: np.ndarray = field(init=False)
    facet_cells: np.ndarray = field(init=False)
    cell_facets: np.ndarray = field(init=False)
    cell_diameter: np.ndarray = field(init=False)
    facet_diameter: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.cell_kind not in LOCAL_EDGES:
            raise ValueError(f"unknown cell kind {self.cell_kind!r}")
        verts = _frozen(self.vertices, float)
        cells = np.array(self.cells, dtype=np.int64)
        nloc = 3 if self.cell_kind == TRIANGLE else 4
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise ValueError("vertices must have shape (nv, 2)")
        if cells.ndim != 2 or cells.shape[1] != nloc:
            raise ValueError(f"{self.cell_kind} cells need {nloc} vertices each")

        # orient every cell counterclockwise
        p = verts[cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, -1] - p[:, 0]
        signed = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(signed == 0.0):
            raise ValueError("degenerate cell")
        cw = signed < 0
        cells[cw] = cells[cw][:, ::-1]
        if self.cell_kind == QUADRILATERAL:
            p = verts[cells]
            if not np.allclose(p[:, 0] + p[:, 2], p[:, 1] + p[:, 3], rtol=0, atol=1e-12):
                raise ValueError("only parallelogram (affine) quadrilaterals are supported")

        local = LOCAL_EDGES[self.cell_kind]
        pairs = np.sort(np.stack([cells[:, [a, b]] for a, b in local], axis=1), axis=2)
        flat = pairs.reshape(-1, 2)
        facets, inverse = np.unique(flat, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        cell_facets = inverse.reshape(len(cells), len(local))

        facet_cells = np.full((len(facets), 2), -1, dtype=np.int64)
        owner = np.repeat(np.arange(len(cells)), len(local))
        count = np.zeros(len(facets), dtype=np.int64)
        for f, c in zip(inverse, owner):
            if count[f] >= 2:
                raise ValueError("non-conforming mesh: facet shared by more than two cells")
            facet_cells[f, count[f]] = c
            count[f] += 1

        pc = verts[cells]
        diffs = pc[:, :, None, :] - pc[:, None, :, :]
        diam = np.sqrt((diffs ** 2).sum(axis=-1)).max(axis=(1, 2))
        flen = np.linalg.norm(verts[facets[:, 1]] - verts[facets[:, 0]], axis=1)

        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "cells", _frozen(cells, np.int64))
        object.__setattr__(self, "facets", _frozen(facets, np.int64))
        object.__setattr__(self, "facet_cells", _frozen(facet_cells, np.int64))
        object.__setattr__(self, "cell_facets", _frozen(cell_facets, np.int64))
        object.__setattr__(self, "cell_diameter", _frozen(diam, float))
        object.__setattr__(self, "facet_diameter", _frozen(flen, float))

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def interior_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] >= 0)

    @property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(self.facet_cells[:, 1] < 0)

    @property
    def h(self) -> float:
        return float(self.cell_diameter.max())

    def cell_areas(self) -> np.ndarray:
        p = self.vertices[self.cells]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, -1] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        return det / 2.0 if self.cell_kind == TRIANGLE else det

    def affine_maps(self):
        """Return ``(x0, B)`` such that ``x = x0 + B @ xi`` maps the reference cell onto each cell."""
        p = self.vertices[self.cells]
        x0 = p[:, 0]
        B = np.stack([p[:, 1] - x0, p[:, -1] - x0], axis=2)
        return x0, B

    def vertex_cells(self) -> list[np.ndarray]:
        """Cells incident to each vertex."""
        order = np.argsort(self.cells.ravel(), kind="stable")
        sorted_v = self.cells.ravel()[order]
        cell_of = order // self.cells.shape[1]
        bounds = np.searchsorted(sorted_v, np.arange(self.num_vertices + 1))
        return [cell_of[bounds[i]:bounds[i + 1]] for i in range(self.num_vertices)]


@dataclass(frozen=True, eq=False)
class MeshFunction:
    """Continuous piecewise-linear field of averaged cell diameters, stored at vertices."""

    mesh: Mesh
    value_at_vertex: np.ndarray


def _lattice(n):
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x, indexing="xy")
    return np.column_stack([X.ravel(), Y.ravel()])


def _check_n(n):
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n!r}")
    return int(n)


def build_structured_triangular(n: int, variant: str = "delaunay") -> Mesh:
    """Uniform ``n x n`` lattice of (0,1)^2 with every square cut into two triangles.

    ``variant="delaunay"`` cuts every square along the same diagonal, giving the
    three-directional mesh. ``variant="non_delaunay"`` alternates the diagonal in
    a checkerboard pattern and shifts every interior vertex by
    ``(0.15/n, -0.1/n)``, which makes the cells next to the boundary violate the
    empty-circumcircle property.
    """
    n = _check_n(n)
    if variant not in ("delaunay", "non_delaunay"):
        raise ValueError(f"unknown variant {variant!r}")
    verts = _lattice(n)
    idx = lambda i, j: j * (n + 1) + i  # noqa: E731
    cells = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            if variant == "delaunay" or (i + j) % 2 == 0:
                cells += [(a, b, c), (a, c, d)]
            else:
                cells += [(a, b, d), (b, c, d)]
    if variant == "non_delaunay":
        inner = np.all((verts > 0.5 / n) & (verts < 1.0 - 0.5 / n), axis=1)
        verts[inner] += np.array([0.15, -0.1]) / n
    return Mesh(verts, np.array(cells), TRIANGLE)


def build_structured_quadrilateral(n: int) -> Mesh:
    """Uniform ``n x n`` lattice of axis-aligned squares of side ``1/n``."""
    n = _check_n(n)
    verts = _lattice(n)
    j, i = np.divmod(np.arange(n * n), n)
    a = j * (n + 1) + i
    cells = np.column_stack([a, a + 1, a + n + 2, a + n + 1])
    return Mesh(verts, cells, QUADRILATERAL)


def build_mesh(kind: str, n: int) -> Mesh:
    """Dispatch on the mesh names used in run configurations."""
    if kind in ("delaunay", "triangular"):
        return build_structured_triangular(n, "delaunay")
    if kind == "non_delaunay":
        return build_structured_triangular(n, "non_delaunay")
    if kind in ("quadrilateral", "quad"):
        return build_structured_quadrilateral(n)
    raise ValueError(f"unknown mesh kind {kind!r}")


def compute_mesh_function(mesh: Mesh) -> MeshFunction:
    """Average of the diameters of the cells around each vertex."""
    nv = mesh.num_vertices
    total = np.zeros(nv)
    count = np.zeros(nv)
    for k in range(mesh.cells.shape[1]):
        np.add.at(total, mesh.cells[:, k], mesh.cell_diameter)
        np.add.at(count, mesh.cells[:, k], 1.0)
    if np.any(count == 0):
        raise ValueError("mesh has vertices not attached to any cell")
    return MeshFunction(mesh, _frozen(total / count, float))
