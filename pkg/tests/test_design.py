import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import expm

from etdf.design import (
    GainDesign,
    Gating,
    ImpulseProfile,
    assign_spectrum_exp,
    ball_indicator,
    controllability,
    controllable_subspace,
    design_gains,
    is_controllable,
    match_spectra,
    section_time,
    smoothstep,
    state_gate,
)
from etdf.errors import AssignmentImpossible, DeterminantObstruction, SectionProjectionFailed

from conftest import REPORTED_GAINS

A_HOPF = np.diag([1.0, np.exp(np.pi)])
B_HOPF = np.array([1.0, 1.0])


def _spec_error(A, b, K, targets):
    ev = np.linalg.eigvals(A @ expm(np.outer(b, K)))
    return match_spectra(np.asarray(targets, dtype=complex), ev)[2].max()


# controllability

def test_hopf_krylov_determinant():
    M, det = controllability(A_HOPF, B_HOPF)
    np.testing.assert_allclose(M, [[1, 1], [1, np.exp(np.pi)]])
    assert det == pytest.approx(np.exp(np.pi) - 1, rel=1e-12)
    assert det == pytest.approx(22.1407, abs=1e-4)


def test_identity_monodromy_is_uncontrollable():
    _, det = controllability(np.eye(2), np.array([0.3, -1.1]))
    assert det == 0.0
    assert not is_controllable(np.eye(2), np.array([0.3, -1.1]))


def test_scalar_krylov():
    M, det = controllability(np.array([[2.0]]), np.array([3.0]))
    np.testing.assert_array_equal(M, [[3.0]])
    assert det == pytest.approx(3.0, rel=1e-15)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        controllability(np.eye(2), np.ones(3))


def test_controllable_subspace_of_block_system():
    P = np.diag([2.0, 0.5, 3.0])
    b = np.array([1.0, 1.0, 0.0])
    Q = controllable_subspace(P, b)
    assert Q.shape == (3, 2)
    np.testing.assert_allclose(Q[2], 0.0, atol=1e-14)


# spectrum assignment

def test_hopf_gains_match_reported_values():
    K0 = -assign_spectrum_exp(A_HOPF, B_HOPF, [0.5j, -0.5j])
    assert np.all(np.abs(K0 - REPORTED_GAINS) < 1e-3)


def test_design_gains_sign_convention():
    K0 = design_gains(A_HOPF, B_HOPF, [0.5j, -0.5j])
    ev = np.linalg.eigvals(A_HOPF @ expm(-np.outer(B_HOPF, K0)))
    assert match_spectra(np.array([0.5j, -0.5j]), ev)[2].max() < 1e-9


def test_targets_equal_to_spectrum_give_zero_gain():
    A = np.array([[1.2, 0.3], [-0.4, 0.9]])
    b = np.array([1.0, 0.5])
    targets = np.linalg.eigvals(A)
    K = assign_spectrum_exp(A, b, targets)
    assert np.linalg.norm(K) < 1e-9
    assert _spec_error(A, b, K, targets) < 1e-9


def _random_instance(rng):
    A = rng.normal(size=(3, 3))
    if np.linalg.det(A) < 0:
        A[0] *= -1
    b = rng.normal(size=3)
    z = rng.uniform(0.2, 1.5) * np.exp(1j * rng.uniform(0.1, 3.0))
    return A, b, [rng.uniform(0.2, 2.0), z, np.conj(z)]


def test_random_3x3_assignments_verified_independently():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        A, b, targets = _random_instance(rng)
        K = assign_spectrum_exp(A, b, targets)
        assert np.isrealobj(K)
        # independent check: eigenvalues of the matrix exponential via scipy
        ev = np.linalg.eigvals(A @ expm(np.outer(b, K)))
        err = match_spectra(np.asarray(targets), ev)[2]
        assert np.all(err <= 1e-9 * np.maximum(1.0, np.abs(targets)) * max(1.0, np.linalg.norm(A, 2)))


def test_determinant_identity_and_target_scaling():
    rng = np.random.default_rng(7)
    for _ in range(20):
        A, b, targets = _random_instance(rng)
        K = assign_spectrum_exp(A, b, targets)
        lhs = np.linalg.det(A @ expm(np.outer(b, K)))
        assert lhs == pytest.approx(np.linalg.det(A) * np.exp(K @ b), rel=1e-9)
        alpha = 1.3
        K2 = assign_spectrum_exp(A, b, [alpha * z for z in targets])
        assert np.exp(K2 @ b) / np.exp(K @ b) == pytest.approx(alpha**3, rel=1e-9)


def test_uncontrollable_pair_raises():
    with pytest.raises(AssignmentImpossible):
        assign_spectrum_exp(np.eye(2), np.array([1.0, 1.0]), [0.5j, -0.5j])


def test_negative_target_product_raises():
    with pytest.raises(DeterminantObstruction):
        assign_spectrum_exp(A_HOPF, B_HOPF, [0.5, -0.5])


def test_negative_determinant_of_A_raises():
    with pytest.raises(DeterminantObstruction):
        assign_spectrum_exp(np.diag([1.0, -2.0]), B_HOPF, [0.5j, -0.5j])


def test_targets_must_be_conjugate_closed():
    with pytest.raises(ValueError):
        assign_spectrum_exp(A_HOPF, B_HOPF, [0.5j, 0.5])


def test_wrong_number_of_targets():
    with pytest.raises(ValueError):
        assign_spectrum_exp(A_HOPF, B_HOPF, [0.5])


def test_partial_assignment_keeps_uncontrollable_block():
    P = np.diag([2.0, 0.5, 3.0])
    b = np.array([1.0, 1.0, 0.0])
    K0 = design_gains(P, b, [0.3, 0.2], partial=True)
    ev = np.sort(np.linalg.eigvals(P @ expm(-np.outer(b, K0))).real)
    np.testing.assert_allclose(ev, [0.2, 0.3, 3.0], atol=1e-10)


# impulse profile

def test_impulse_interior_and_exterior():
    T, d = 2 * np.pi, 2 * np.pi / 500
    prof = ImpulseProfile(d, T)
    assert prof(d / 2) == pytest.approx(1 / d)
    assert prof(T / 2) == 0.0


def test_regularised_ramp_value():
    T, d = 2 * np.pi, 0.05
    prof = ImpulseProfile(d, T, regularised=True)
    assert prof(d + d * d / 2) == pytest.approx(smoothstep(0.5) / d, rel=1e-9)
    assert smoothstep(0.5) == 0.5


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 20.0), st.sampled_from([False, True]))
def test_impulse_periodic_and_bounded(t, reg):
    T, d = 2.0, 0.05
    prof = ImpulseProfile(d, T, regularised=reg)
    assert prof(t) == pytest.approx(prof(t + T), abs=1e-9)
    assert 0.0 <= prof(t) <= 1 / d


def test_impulse_integrals():
    T, d = 2.0, 0.05
    sharp = ImpulseProfile(d, T)
    smooth = ImpulseProfile(d, T, regularised=True)
    assert quad(sharp, 0, T, points=[d], limit=200)[0] == pytest.approx(1.0, abs=1e-10)
    val = quad(smooth, 0, T, points=[d, d + d * d, T - d * d], limit=200)[0]
    assert val == pytest.approx(smooth.integral(), abs=1e-10)
    assert abs(val - 1.0) <= 2 * d


def test_regularised_and_sharp_agree_outside_ramps():
    T, d = 2.0, 0.05
    sharp = ImpulseProfile(d, T)
    smooth = ImpulseProfile(d, T, regularised=True)
    t = np.linspace(0, T, 4001)
    outside = ~(((t > d) & (t < d + d * d)) | (t > T - d * d))
    np.testing.assert_array_equal(sharp(t)[outside], smooth(t)[outside])


def test_regularisation_must_fit_in_period():
    with pytest.raises(ValueError):
        ImpulseProfile(0.9, 1.0, regularised=True)
    with pytest.raises(ValueError):
        ImpulseProfile(1.5, 1.0)


def test_gain_design_validation(hopf):
    with pytest.raises(ValueError):
        GainDesign([1.0, 0.0], 0.01, 1.5)
    with pytest.raises(DeterminantObstruction):
        GainDesign([1.0, 0.0], 0.01, 0.1, targets=(0.5, -0.5))
    d = GainDesign([1.0, 0.0], 0.01, 0.1).resolved(hopf[1])
    assert d.rho == pytest.approx(0.1, rel=1e-3)  # 10 % of the diameter 1


# section and state gate

def test_section_time_on_section(hopf):
    orbit = hopf[1]
    assert section_time(orbit.x0, orbit) == 0.0


def test_section_time_small_shift(hopf):
    orbit = hopf[1]
    t = section_time(orbit.x_star(0.01), orbit)
    assert abs(t - 0.01) < 1e-4


def test_section_time_orthogonal_offset(hopf):
    orbit = hopf[1]
    v = orbit.xdot0
    w = np.array([-v[1], v[0]])
    assert section_time(orbit.x0 + 0.07 * w, orbit) == 0.0


def test_implicit_section_recovers_orbit_time(hopf):
    orbit = hopf[1]
    for s in (0.01, -0.2, 0.4):
        assert section_time(orbit.x_star(s), orbit, variant="implicit") == pytest.approx(s, abs=1e-12)


def test_implicit_section_failure(hopf):
    orbit = hopf[1]
    with pytest.raises(SectionProjectionFailed):
        section_time(orbit.x_star(1.0) + 0.3, orbit, variant="implicit", maxiter=1)


def test_state_gate_outside_ball(hopf, state_design):
    orbit = hopf[1]
    x = orbit.x0 + np.array([2.5 * state_design.rho, 0.0])
    assert state_gate(x, orbit, state_design) == 0.0
    assert state_gate(orbit.x_star(orbit.T / 2), orbit, state_design.replace(rho=0.05)) == 0.0


def test_state_gate_reproduces_time_gate_on_orbit(hopf, state_design):
    orbit = hopf[1]
    d = state_design.delta
    prof = ImpulseProfile(d, orbit.T, regularised=True)
    assert state_gate(orbit.x_star(d / 2), orbit, state_design) == pytest.approx(prof(d / 2))
    # with the exact section time the identity holds along the whole orbit
    ts = np.concatenate([np.linspace(-2 * d * d, d + 2 * d * d, 201), np.linspace(0.1, orbit.T - 0.1, 50)])
    for t in ts:
        g = state_gate(orbit.x_star(t), orbit, state_design, variant="implicit")
        assert g == pytest.approx(prof(t), abs=1e-9 / d)


def test_state_gate_requires_state_gating(hopf, time_design):
    with pytest.raises(ValueError):
        state_gate(hopf[1].x0, hopf[1], time_design)


def test_ball_indicator_shape():
    c = np.zeros(2)
    assert ball_indicator(np.array([0.5, 0.0]), c, 1.0) == 1.0
    assert ball_indicator(np.array([2.5, 0.0]), c, 1.0) == 0.0
    assert 0.0 < ball_indicator(np.array([1.5, 0.0]), c, 1.0) < 1.0
    assert Gating("state") is Gating.STATE
