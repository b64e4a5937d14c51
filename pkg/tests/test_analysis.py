import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bpfem.analysis import (ErrorAccumulator, MassHistory, StabilityMonitor,
                            accumulate_energy_error, convergence_slope, cross_section, default_error_order,
                            energy_error_term, field_l2_norm, h1_seminorm_error, l2_error,
                            relative_mass, total_mass)
from bpfem.fe_space import P1, P2, FeFunction, build_space, interpolate
from bpfem.forms import assemble_cip, assemble_mass, assemble_stiffness
from bpfem.mesh import build_mesh
from bpfem.problems import preset, rotation_initial
from bpfem.stepper import SchemeConfig, run
from oracles import dense_cip, dense_forms, dense_integral

SINE = lambda x, y, t: np.sin(np.pi * x) * np.sin(np.pi * y)  # noqa: E731


def test_l2_error_zero():
    s = build_space(build_mesh("delaunay", 3), P1)
    assert l2_error(FeFunction(s, np.zeros(s.num_dofs)), lambda x, y, t: 0 * x, 0.0) == 0.0


@pytest.mark.parametrize("kind", [P1, P2])
def test_l2_interpolation_error_against_oracle(kind):
    s = build_space(build_mesh("delaunay", 8), kind)
    u = interpolate(s, SINE)
    oracle = math.sqrt(dense_integral(s, u.coefficients, SINE))
    assert l2_error(u, SINE, 0.0) == pytest.approx(oracle, abs=1e-10)
    assert l2_error(u, SINE, 0.0, order=2 * default_error_order(s.degree)) == pytest.approx(
        l2_error(u, SINE, 0.0), abs=1e-10)


def test_l2_triangle_inequality():
    s = build_space(build_mesh("non_delaunay", 4), P2)
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rng.normal(size=(2, s.num_dofs))
        ua = FeFunction(s, a)
        ub = interpolate(s, lambda x, y, t: 0 * x)
        ub.coefficients[:] = b
        g = lambda x, y, t: np.cos(3 * x) * y  # noqa: E731
        # ||a - g|| <= ||a - b|| + ||b - g||, with ||a - b|| as the error of a against b
        bfun = lambda x, y, t: _eval(ub, x, y)  # noqa: E731
        assert l2_error(ua, g, 0) <= l2_error(ua, bfun, 0) + l2_error(ub, g, 0) + 1e-12


def _eval(u, x, y):
    from bpfem.fe_space import evaluate
    pts = np.column_stack([np.ravel(x), np.ravel(y)])
    return evaluate(u, pts).reshape(np.shape(x))


def test_h1_seminorm_of_interpolant_against_stiffness():
    s = build_space(build_mesh("delaunay", 4), P2)
    u = interpolate(s, lambda x, y, t: x * x + x * y)
    zero_grad = lambda x, y, t: (0 * x, 0 * x)  # noqa: E731
    K = assemble_stiffness(s)
    c = u.coefficients
    assert h1_seminorm_error(u, zero_grad, 0.0) ** 2 == pytest.approx(c @ (K @ c), rel=1e-12)


def test_accumulator_basic_cases():
    s = build_space(build_mesh("delaunay", 2), P1)
    J = assemble_cip(s, 0.0, lambda x, y, t: (1 + 0 * x, 0 * x), 0.0)
    K, M = assemble_stiffness(s), assemble_mass(s)
    acc = ErrorAccumulator()
    accumulate_energy_error(acc, FeFunction(s, np.zeros(s.num_dofs)), 1.0, 1.0, 0.1, J, K, M)
    assert acc.total == 0.0
    e = FeFunction(s, np.random.default_rng(1).normal(size=s.num_dofs))
    accumulate_energy_error(acc, e, 0.0, 0.0, 0.1, J, K, M)
    assert acc.total == 0.0
    with pytest.raises(ValueError):
        acc.add(-1.0)


def test_accumulator_single_term_dense_oracle():
    s = build_space(build_mesh("delaunay", 2), P1)
    beta = lambda x, y, t: (2 + 0 * x, 1 + 0 * x)  # noqa: E731
    eps, mu, dt, gamma = 0.3, 2.0, 0.1, 0.7
    e = FeFunction(s, np.random.default_rng(2).normal(size=s.num_dofs))
    acc = accumulate_energy_error(ErrorAccumulator(), e, eps, mu, dt,
                                  assemble_cip(s, gamma, beta, 0), assemble_stiffness(s),
                                  assemble_mass(s))
    Mo, Ko, _ = dense_forms(s, beta)
    Jo = dense_cip(s, gamma, beta)
    c = e.coefficients
    assert acc.total == pytest.approx(dt * (eps * c @ Ko @ c + mu * c @ Mo @ c + c @ Jo @ c),
                                      abs=1e-12)


def test_energy_accumulator_is_sum_of_terms():
    p = preset("smooth")
    s = build_space(build_mesh("delaunay", 4), P1)
    cfg = SchemeConfig(theta=1.0, dt=0.02, T=0.1, gamma=0.05)
    from bpfem.analysis import EnergyErrorObserver
    obs = EnergyErrorObserver(p, cfg.dt)
    terms = []
    run(p, s.mesh, s, cfg, observers=[obs, lambda snap: terms.append(energy_error_term(
        snap.u_plus, p.exact, p.exact_grad, snap.t, p.eps, p.mu, cfg.dt, snap.forms.Jmat))])
    assert obs.acc.total == pytest.approx(math.fsum(terms), abs=1e-12)
    assert len(obs.acc.records) == cfg.num_steps + 1
    assert obs.acc.energy_norm() >= obs.acc.final_l2 > 0


# ------------------------------------------------------------------- slopes

def test_slopes_exact():
    assert convergence_slope([(1, 1), (0.5, 0.25), (0.25, 0.0625)]) == pytest.approx(2.0)
    assert convergence_slope([(1, 1), (0.5, 0.5)]) == pytest.approx(1.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_slope_noisy_quadratic(seed):
    rng = np.random.default_rng(seed)
    h = 2.0 ** -np.arange(2, 8)
    err = 3 * h ** 2 * np.exp(rng.uniform(-0.02, 0.02, size=h.size))
    assert abs(convergence_slope(list(zip(h, err))) - 2.0) <= 0.05


@pytest.mark.parametrize("pairs", [[(1, 1)], [(1, 0), (0.5, 1)], [(-1, 1), (0.5, 1)],
                                   [(0.5, 1), (0.5, 2)]])
def test_slope_rejects_bad_input(pairs):
    with pytest.raises(ValueError):
        convergence_slope(pairs)


# ------------------------------------------------------------ cross section

def test_cross_section_affine_and_zero():
    s = build_space(build_mesh("non_delaunay", 5), P1)
    x, v = cross_section(interpolate(s, lambda x, y, t: x), 0.37, 101)
    np.testing.assert_allclose(v, x, atol=1e-14)
    _, v = cross_section(FeFunction(s, np.zeros(s.num_dofs)), 0.75, 50)
    assert not v.any()
    with pytest.raises(ValueError):
        cross_section(FeFunction(s, np.zeros(s.num_dofs)), 1.5, 10)
    with pytest.raises(ValueError):
        cross_section(FeFunction(s, np.zeros(s.num_dofs)), 0.5, 1)


def test_cross_section_through_slotted_cylinder():
    # the slot is resolved by a mesh with nodes every 1/400 on the line
    s = build_space(build_mesh("delaunay", 400), P1)
    u = interpolate(s, rotation_initial)
    x, v = cross_section(u, 0.75, 10000)
    r = np.abs(x - 0.5)
    plateau = (r > 0.0225 + 1 / 400) & (r < 0.15 - 1 / 400)
    slot = r < 0.0225 - 1 / 400
    np.testing.assert_allclose(v[plateau], 1.0, atol=1e-12)
    np.testing.assert_allclose(v[slot], 0.0, atol=1e-12)
    assert np.all(v[r > 0.15 + 1 / 400] == 0.0)


# ------------------------------------------------------------------- mass

def test_relative_mass_cases():
    s = build_space(build_mesh("delaunay", 6), P2)
    u = interpolate(s, SINE)
    M0 = total_mass(u)
    assert relative_mass(u, M0) == pytest.approx(1.0, abs=1e-15)
    assert relative_mass(FeFunction(s, 2 * u.coefficients), M0) == pytest.approx(2.0, abs=1e-14)
    with pytest.raises(ValueError):
        relative_mass(u, 0.0)
    # the sine integrates to 4 / pi^2
    fine = build_space(build_mesh("delaunay", 32), P2)
    assert total_mass(interpolate(fine, SINE)) == pytest.approx(4 / math.pi ** 2, abs=1e-6)


def test_rotation_mass_positive_and_stability_monitor():
    p = preset("rotation")
    s = build_space(build_mesh("delaunay", 16), P1)
    cfg = SchemeConfig(theta=1.0, dt=0.05, T=0.5, gamma=0.001, omega=0.12)
    mass = MassHistory()
    mon = StabilityMonitor(p.eps, p.mu, cfg.dt, cfg.T, lambda t: field_l2_norm(s, p.f, t))
    run(p, s.mesh, s, cfg, observers=[mass, mon])
    assert all(m > 0 for _, m in mass.records)
    assert mon.holds() and len(mon.lhs) == cfg.num_steps
