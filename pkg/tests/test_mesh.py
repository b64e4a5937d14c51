import math
from collections import Counter

import numpy as np
import pytest

from bpfem.mesh import (Mesh, TRIANGLE, build_mesh, build_structured_quadrilateral,
                        build_structured_triangular, compute_mesh_function)
from oracles import circumcircle_violations

ALL_MESHES = [("delaunay", 5), ("non_delaunay", 5), ("quadrilateral", 5), ("delaunay", 2),
              ("non_delaunay", 7), ("quadrilateral", 3)]


def test_counts_delaunay():
    m = build_structured_triangular(5, "delaunay")
    assert m.num_vertices == 36
    assert m.num_cells == 50


def test_n2_diameters_and_mesh_function():
    m = build_structured_triangular(2)
    np.testing.assert_allclose(m.cell_diameter, math.sqrt(2) / 2, rtol=0, atol=1e-15)
    hf = compute_mesh_function(m)
    np.testing.assert_allclose(hf.value_at_vertex, math.sqrt(2) / 2, rtol=0, atol=1e-15)
    assert len(hf.value_at_vertex) == 9


def test_quadrilateral_geometry():
    m = build_structured_quadrilateral(5)
    assert m.num_cells == 25
    np.testing.assert_allclose(m.cell_diameter, math.sqrt(2) / 5, atol=1e-15)
    assert abs(build_structured_quadrilateral(2).cell_areas().sum() - 1) <= 1e-15


def _facet_oracle(mesh):
    """Count edge occurrences over cell boundaries, independently of the mesh's facet table."""
    cnt = Counter()
    for cell in mesh.cells:
        k = len(cell)
        for a in range(k):
            e = tuple(sorted((int(cell[a]), int(cell[(a + 1) % k]))))
            cnt[e] += 1
    return sum(1 for v in cnt.values() if v == 1), sum(1 for v in cnt.values() if v == 2), cnt


def test_quadrilateral_n3_facets():
    m = build_structured_quadrilateral(3)
    nb, ni, _ = _facet_oracle(m)
    assert (len(m.boundary_facets), len(m.interior_facets)) == (nb, ni)
    # 4 sides of 3 edges each on the boundary; 2 * 3 * 2 interior lines
    assert (nb, ni) == (12, 12)


@pytest.mark.parametrize("kind,n", ALL_MESHES)
def test_mesh_invariants(kind, n):
    m = build_mesh(kind, n)
    assert abs(m.cell_areas().sum() - 1.0) <= 1e-12
    assert np.all(m.cell_areas() > 0)
    nb, ni, cnt = _facet_oracle(m)
    assert max(cnt.values()) <= 2
    assert len(m.facets) == len(cnt)
    assert set(map(tuple, m.facets.tolist())) == set(cnt)
    interior = m.facet_cells[:, 1] >= 0
    assert interior.sum() == ni and (~interior).sum() == nb
    # every interior facet's two cells both contain the facet vertices
    for f in m.interior_facets:
        for c in m.facet_cells[f]:
            assert set(m.facets[f]) <= set(m.cells[c])
    # h_K is the largest pairwise vertex distance
    P = m.vertices[m.cells]
    d = np.linalg.norm(P[:, :, None, :] - P[:, None, :, :], axis=-1).max(axis=(1, 2))
    np.testing.assert_allclose(m.cell_diameter, d, atol=1e-15)


@pytest.mark.parametrize("kind,n", ALL_MESHES)
def test_mesh_function_is_local_mean(kind, n):
    m = build_mesh(kind, n)
    hv = compute_mesh_function(m).value_at_vertex
    for v in range(m.num_vertices):
        hs = [m.cell_diameter[c] for c in range(m.num_cells) if v in m.cells[c]]
        assert hv[v] == pytest.approx(sum(hs) / len(hs), abs=1e-15)
        assert min(hs) - 1e-15 <= hv[v] <= max(hs) + 1e-15


def test_uniform_mesh_function():
    np.testing.assert_allclose(compute_mesh_function(build_mesh("delaunay", 5)).value_at_vertex,
                               math.sqrt(2) / 5, atol=1e-15)
    np.testing.assert_allclose(compute_mesh_function(build_mesh("quadrilateral", 4)).value_at_vertex,
                               math.sqrt(2) / 4, atol=1e-15)


def test_graded_mesh_interface_vertex():
    # conforming lattice: coarse columns of width 1/2 left of x = 1/2, width 1/4 right of it
    xs, ys = [0.0, 0.5, 0.75, 1.0], [0.0, 0.25, 0.5, 0.75, 1.0]
    verts = np.array([(x, y) for y in ys for x in xs])
    idx = lambda i, j: j * len(xs) + i  # noqa: E731
    cells = []
    for j in range(len(ys) - 1):
        for i in range(len(xs) - 1):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            cells += [(a, b, c), (a, c, d)]
    mesh = Mesh(verts, np.array(cells), TRIANGLE)
    v = idx(1, 2)  # the vertex (0.5, 0.5) on the interface
    incident = [c for c in range(mesh.num_cells) if v in mesh.cells[c]]
    h_big, h_small = math.hypot(0.5, 0.25), math.hypot(0.25, 0.25)
    diam = [mesh.cell_diameter[c] for c in incident]
    n_big = sum(1 for d in diam if abs(d - h_big) < 1e-12)
    n_small = sum(1 for d in diam if abs(d - h_small) < 1e-12)
    assert n_big > 0 and n_small > 0 and n_big + n_small == len(incident)
    hv = compute_mesh_function(mesh).value_at_vertex[v]
    assert hv == pytest.approx((n_big * h_big + n_small * h_small) / len(incident), abs=1e-15)


def test_mesh_function_permutation_invariance():
    m = build_mesh("non_delaunay", 6)
    perm = np.random.default_rng(3).permutation(m.num_cells)
    m2 = Mesh(m.vertices, m.cells[perm], m.cell_kind)
    np.testing.assert_allclose(compute_mesh_function(m).value_at_vertex,
                               compute_mesh_function(m2).value_at_vertex, atol=1e-15)


@pytest.mark.parametrize("n", [2, 5, 8])
def test_delaunay_variant_passes_circumcircle(n):
    assert circumcircle_violations(build_structured_triangular(n, "delaunay")) == []


@pytest.mark.parametrize("n", [5, 8])
def test_non_delaunay_variant_fails_circumcircle(n):
    assert len(circumcircle_violations(build_structured_triangular(n, "non_delaunay"))) >= 1


@pytest.mark.parametrize("builder", [lambda n: build_structured_triangular(n),
                                     build_structured_quadrilateral,
                                     lambda n: build_mesh("non_delaunay", n)])
@pytest.mark.parametrize("n", [1, 0, -3])
def test_small_n_rejected(builder, n):
    with pytest.raises(ValueError):
        builder(n)


def test_unknown_variant_rejected():
    with pytest.raises(ValueError):
        build_mesh("hexagonal", 4)


def test_mesh_is_immutable():
    m = build_mesh("delaunay", 3)
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 1.0
