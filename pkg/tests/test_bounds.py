import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from bpfem.bounds import BoundSpec, clip, is_admissible, split
from bpfem.fe_space import P1, FeFunction, build_space, interpolate
from bpfem.forms import assemble_mass
from bpfem.mesh import build_mesh

SPACE = build_space(build_mesh("delaunay", 3), P1)
N = SPACE.num_dofs
values = arrays(np.float64, N, elements=st.floats(-5, 5, allow_nan=False))
UNIT = BoundSpec.constant(1.0)


def fn(c):
    return FeFunction(SPACE, np.asarray(c, dtype=float))


def test_split_example():
    s = build_space(build_mesh("delaunay", 2), P1)
    c = np.zeros(s.num_dofs)
    c[:3] = [-0.3, 0.4, 1.7]
    plus, minus = split(FeFunction(s, c), UNIT, 0.0)
    np.testing.assert_allclose(plus.coefficients[:3], [0.0, 0.4, 1.0])
    np.testing.assert_allclose(minus.coefficients[:3], [-0.3, 0.0, 0.7], atol=1e-16)


def test_admissible_examples():
    assert is_admissible(fn(np.zeros(N)), UNIT, 0.0)
    c = np.zeros(N)
    c[2] = 1 + 1e-6
    assert not is_admissible(fn(c), UNIT, 0.0)


@settings(max_examples=200, deadline=None)
@given(values, st.floats(-1, 1), st.floats(0.1, 3))
def test_split_invariants(c, lo, width):
    b = BoundSpec.constant(lo + width, lo)
    u = fn(c)
    plus, minus = split(u, b, 0.0)
    np.testing.assert_allclose(plus.coefficients + minus.coefficients, u.coefficients,
                               rtol=0, atol=1e-15)
    assert np.all(plus.coefficients >= lo) and np.all(plus.coefficients <= lo + width)
    assert is_admissible(plus, b, 0.0)
    moved = minus.coefficients != 0
    assert np.all(np.isin(plus.coefficients[moved], [lo, lo + width]))
    again = split(plus, b, 0.0)
    assert not again.minus.coefficients.any()


@settings(max_examples=200, deadline=None)
@given(values)
def test_admissible_unchanged(c):
    c = np.clip(c, 0, 1)
    plus, minus = split(fn(c), UNIT, 0.0)
    np.testing.assert_array_equal(plus.coefficients, c)
    assert not minus.coefficients.any()


@settings(max_examples=200, deadline=None)
@given(values, values)
def test_clip_nodally_one_lipschitz(v, w):
    d = np.abs(clip(v, 0.0, 1.0) - clip(w, 0.0, 1.0))
    assert np.all(d <= np.abs(v - w))


def test_time_dependent_bound():
    b = BoundSpec(upper=math.exp)
    assert b.at(1.0) == (0.0, math.e)
    assert is_admissible(fn(np.full(N, 2.5)), b, 1.0)
    assert not is_admissible(fn(np.full(N, 2.5)), b, 0.0)


def test_empty_interval_rejected():
    with pytest.raises(ValueError):
        BoundSpec.constant(0.0, 0.0).at(0.0)


def test_plus_norm_bounded_by_interpolated_bound():
    s = build_space(build_mesh("delaunay", 6), P1)
    M = assemble_mass(s)
    kappa = 1.7
    ref = interpolate(s, lambda x, y, t: kappa + 0 * x).coefficients
    bound = math.sqrt(ref @ (M @ ref))
    rng = np.random.default_rng(3)
    for _ in range(100):
        plus = split(FeFunction(s, rng.normal(0, 3, s.num_dofs)), BoundSpec.constant(kappa), 0).plus
        p = plus.coefficients
        assert math.sqrt(p @ (M @ p)) <= bound + 1e-12
