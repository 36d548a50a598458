import math

import numpy as np
import pytest

from sedsim.constants import PhysicalConstants
from sedsim.dynamics import (PhaseState, apsides, bundle, coulomb_force, force_gradient_dot,
                             orbit_elements, orbit_geometry, orbit_radius, orbital_period,
                             orbital_wavenumber, physical_state, rhs_mixed_gc, rhs_newton,
                             rhs_pure_gc, rhs_s_form, state_from_physical, state_neglecting_beta)
from sedsim.integrator import rk4


def test_beta_for_hydrogen():
    c = PhysicalConstants(Z=1)
    assert 1 / c.beta == pytest.approx(1964.71, rel=5e-6)
    assert PhysicalConstants(Z=3).beta == pytest.approx(3 * c.beta, rel=1e-14)
    assert PhysicalConstants(Z=3, coupling=0.0).beta == 0.0
    with pytest.raises(ValueError):
        PhysicalConstants(Z=0)


def test_coulomb_examples():
    assert np.array_equal(coulomb_force([1.0, 0, 0]), [-1.0, 0, 0])
    assert np.allclose(coulomb_force([0, 2.0, 0]), [0, -0.25, 0], rtol=1e-15)


def test_inverse_square_law_random():
    r = np.random.default_rng(0).normal(size=(100, 3)) * 3
    f = coulomb_force(r)
    assert np.allclose(np.linalg.norm(f, axis=1) * np.linalg.norm(r, axis=1) ** 2, 1.0, rtol=1e-14)


def test_coulomb_singular():
    with pytest.raises(ValueError):
        coulomb_force([0.0, 0.0, 0.0])


def test_force_gradient_matches_finite_difference():
    r = np.array([0.7, -0.4, 0.3])
    v = np.array([0.2, 0.9, -0.5])
    h = 1e-6
    fd = (coulomb_force(r + h * v) - coulomb_force(r - h * v)) / (2 * h)
    assert np.allclose(force_gradient_dot(r, v), fd, rtol=1e-7)


def test_elements_circular():
    el = orbit_elements([1.0, 0, 0], [0, 1.0, 0])
    assert el.energy == -0.5 and np.array_equal(el.L_vec, [0, 0, 1.0])
    assert el.eps == 0.0 and el.R == 2.0 and el.kappa == 1.0


def test_elements_eccentric_hand_values():
    el = orbit_elements([2.0, 0, 0], [0, 0.5, 0])
    assert el.energy == pytest.approx(-3 / 8, abs=1e-15)
    assert el.L == pytest.approx(1.0, abs=1e-15)
    assert el.eps == pytest.approx(0.5, abs=1e-15)


def test_elements_identity_and_orthogonality():
    rng = np.random.default_rng(1)
    for _ in range(200):
        r, p = rng.normal(size=3), rng.normal(size=3) * 0.8
        el = orbit_elements(r, p)
        assert el.eps**2 - (1 + 2 * el.energy * el.L**2) == pytest.approx(0, abs=1e-10)
        assert abs(el.L_vec @ el.eps_vec) < 1e-10
        if el.bound:
            assert 0 <= el.kappa <= 1 + 1e-12 and el.eps < 1


def test_unbound_elements_mark_R_absent():
    el = orbit_elements([1.0, 0, 0], [0, 2.0, 0])
    assert el.energy > 0 and el.R is None and el.kappa is None
    assert el.eps > 1 and not el.bound


def test_elements_singular():
    with pytest.raises(ValueError):
        orbit_elements([0, 0, 0], [1, 0, 0])


def test_wavenumber_examples():
    assert orbital_wavenumber(-0.5) == 1.0
    assert orbital_period(-0.5) == pytest.approx(2 * math.pi, rel=1e-15)
    assert orbital_wavenumber(-1 / 3) ** 3 == pytest.approx((2 / 3) ** 1.5, rel=1e-14)
    assert orbital_wavenumber(-1 / 3) ** 3 == pytest.approx(0.5443, abs=5e-5)
    assert orbital_wavenumber(-2.0) == 2.0 and orbital_wavenumber(-2.0) ** 3 == 8.0
    with pytest.raises(ValueError):
        orbital_wavenumber(0.0)


def test_geometry_examples():
    for phi in (0.0, 1.0, 2.5):
        assert orbit_radius(3.0, 0.0, phi) == pytest.approx(1.5, rel=1e-15)
    assert apsides(2.0, 0.5) == (0.5, 1.5)
    assert orbit_radius(2.0, 0.5, 0.0) == pytest.approx(0.5, rel=1e-15)
    assert orbit_radius(2.0, 0.5, math.pi) == pytest.approx(1.5, rel=1e-15)
    el = orbit_elements([2.0, 0, 0], [0, 0.5, 0])
    assert orbit_geometry(el, math.pi) == pytest.approx(2.0, rel=1e-12)


def test_geometry_two_forms_agree():
    rng = np.random.default_rng(2)
    for R, eps, phi in zip(rng.uniform(0.1, 10, 50), rng.uniform(0, 0.99, 50), rng.uniform(0, 6.3, 50)):
        L2 = (1 - eps**2) * R / 2
        assert orbit_radius(R, eps, phi) == pytest.approx(L2 / (1 + eps * math.cos(phi)), rel=1e-13)


def _integrate(f, y0, dt, n):
    y = np.array(y0, dtype=float)
    for i in range(n):
        y = rk4(f, i * dt, y, dt)
    return y


def test_newton_kepler_circular_orbit():
    y0 = np.array([1.0, 0, 0, 0, 1.0, 0])
    dy = rhs_newton(y0, np.zeros(3), 0.0)
    assert np.allclose(dy, [0, 1, 0, -1, 0, 0])
    y = _integrate(lambda t, y: rhs_newton(y, np.zeros(3), 0.0), y0, 2 * math.pi / 4000, 4000)
    e0, e1 = orbit_elements(y0[:3], y0[3:]), orbit_elements(y[:3], y[3:])
    assert abs(e1.energy / e0.energy - 1) < 1e-8 and abs(e1.L / e0.L - 1) < 1e-8
    assert np.allclose(y[:3], y0[:3], atol=1e-8)


def test_newton_far_field_is_nearly_straight_line():
    y0 = np.array([1e8, 0, 0, 0, 1.0, 0])
    y = _integrate(lambda t, y: rhs_newton(y, np.zeros(3), 0.0), y0, 0.1, 100)
    assert np.allclose(y[:3], [1e8, 10.0, 0], rtol=1e-12, atol=1e-10)


def test_field_enters_newton_as_negative_force():
    y = np.array([1.0, 0, 0, 0, 1.0, 0])
    base = rhs_newton(y, np.zeros(3), 0.1)
    kicked = rhs_newton(y, np.array([0, 0, 2.0]), 0.1)
    assert np.allclose(kicked[3:] - base[3:], [0, 0, -0.2])


def test_formulations_coincide_without_coupling():
    y0 = np.array([1.0, 0.0, 0.0, 0.0, 1.1, 0.1])
    C = np.array([0.3, -0.2, 0.5])  # irrelevant at beta = 0
    n, dt = 1000, 2 * math.pi / 1000
    newton = _integrate(lambda t, y: rhs_newton(y, np.zeros(3), 0.0), y0, dt, n)
    sform = _integrate(lambda t, y: rhs_s_form(y, C, 0.0), y0, dt, n)
    pq0 = np.concatenate([y0[3:], y0[:3]])
    pure = _integrate(lambda t, y: rhs_pure_gc(y, C, 0.0), pq0, dt, n)
    mixed = _integrate(lambda t, y: rhs_mixed_gc(y, C, C, 0.0), pq0, dt, n)
    assert np.allclose(sform, newton, atol=1e-13)
    assert np.allclose(pure[3:], newton[:3], atol=1e-13)
    assert np.allclose(mixed[3:], newton[:3], atol=1e-13)


def test_s_form_with_zero_field_is_damped_newton():
    beta = 0.05
    r0, v0 = np.array([1.0, 0, 0]), np.array([0, 1.0, 0.1])
    zero = bundle()
    s0 = state_from_physical("s_form", r0, v0, zero, beta).y
    dt, n = 2 * math.pi / 2000, 2000
    s = _integrate(lambda t, y: rhs_s_form(y, np.zeros(3), beta), s0, dt, n)
    newton = _integrate(lambda t, y: rhs_newton(y, np.zeros(3), beta), np.concatenate([r0, v0]), dt, n)
    r_s, v_s = physical_state(PhaseState("s_form", s), zero, beta)
    assert np.allclose(r_s, newton[:3], atol=1e-9)
    assert np.allclose(v_s, newton[3:], atol=1e-9)


@pytest.mark.parametrize("form", ["newton", "pure_gc", "mixed_gc", "s_form"])
def test_physical_round_trip(form):
    rng = np.random.default_rng(3)
    F = rng.normal(size=(5, 3))
    dA, dC = rng.normal(size=3), rng.normal(size=3)
    r, v = np.array([0.8, -0.3, 0.4]), np.array([0.1, 1.0, -0.2])
    st = state_from_physical(form, r, v, F, 0.02, dA, dC)
    r2, v2 = physical_state(st, F, 0.02, dA, dC)
    assert np.allclose(r2, r, rtol=0, atol=1e-15) and np.allclose(v2, v, rtol=0, atol=1e-15)


def test_s_form_position_reconstruction():
    beta = 0.03
    y = np.array([0.9, 0.1, 0.0, 0.05, 1.0, 0.0])
    C = np.array([0.2, -0.1, 0.4])
    r, _ = physical_state(PhaseState("s_form", y), bundle(C_high=C), beta)
    assert np.allclose(r, y[:3] + beta * C + beta**2 * y[3:], atol=1e-15)


def test_neglect_beta_initial_state():
    st = state_neglecting_beta("pure_gc", [1, 2, 3], [4, 5, 6])
    assert np.array_equal(st.y, [4, 5, 6, 1, 2, 3])
    st = state_neglecting_beta("s_form", [1, 2, 3], [4, 5, 6])
    assert np.array_equal(st.y, [1, 2, 3, 4, 5, 6])


def test_mixed_split_independence_one_orbit():
    from sedsim.field import FieldWindow, FrequencyGrid, build_field
    from sedsim.integrator import FieldSource, rk4_step

    f = build_field(7, FrequencyGrid(40, 200), 0.01)
    beta = PhysicalConstants(Z=1).beta
    r0, v0 = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    ends = []
    for split in (20, 60):
        src = FieldSource(f, (split, 200), interpolate=False)
        st = state_from_physical("mixed_gc", r0, v0, src.bundle(0.0), beta)
        dt = 2 * math.pi / 2000
        for _ in range(2000):
            st = rk4_step(st, dt, src, beta)
        ends.append(physical_state(st, src.bundle(st.t), beta)[0])
    assert np.max(np.abs(ends[0] - ends[1])) < 1e-8


def test_unknown_formulation():
    with pytest.raises(ValueError):
        PhaseState("lagrangian", np.zeros(6))
