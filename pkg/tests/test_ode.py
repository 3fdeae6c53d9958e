import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from etdf.design import GainDesign, Gating
from etdf.errors import InconsistentMonodromy
from etdf.models import hopf_monodromy, hopf_system
from etdf.ode import (
    Linearization,
    fundamental_matrix,
    integrate,
    monodromy_parametrized,
    monodromy_uncontrolled,
)
from etdf import ode


# integrate

def test_zero_field_gives_constant_trajectory():
    v = np.array([1.5, -2.0, 0.25])
    tr = integrate(lambda t, x: np.zeros_like(x), 0.0, 3.0, v)
    np.testing.assert_array_equal(tr(np.linspace(0, 3, 7)).T, np.tile(v, (7, 1)))


def test_exponential_growth():
    tr = integrate(lambda t, x: x, 0.0, 1.0, [1.0], tol=1e-10)
    assert abs(tr(1.0)[0] - np.e) < 1e-9


def test_hopf_orbit_returns_after_one_period(hopf):
    system, orbit, _ = hopf
    tol = 1e-10
    tr = integrate(lambda t, x: system.rhs(x, 0.0), 0.0, orbit.T, orbit.x0, tol=tol)
    assert np.max(np.abs(tr(orbit.T) - orbit.x0)) <= 10 * tol


def test_breakpoints_become_step_points():
    bps = [0.3, 0.7]
    tr = integrate(lambda t, x: np.where(t < 0.3, 1.0, -1.0) * x, 0.0, 1.0, [1.0], breakpoints=bps)
    for b in bps:
        assert np.any(np.isclose(tr.times, b, rtol=0, atol=1e-15))
    # piecewise exact solution: e^{0.3} e^{-0.7}
    assert abs(tr(1.0)[0] - np.exp(-0.4)) < 1e-9


def test_complex_data_are_realified():
    tr = integrate(lambda t, z: 1j * z, 0.0, 1.0, np.array([1.0 + 0j]))
    assert abs(tr(1.0)[0] - np.exp(1j)) < 1e-9


def test_terminal_event_stops_integration():
    def ev(t, x):
        return x[0] - 2.0
    ev.terminal = True
    tr = integrate(lambda t, x: x, 0.0, 5.0, [1.0], events=[ev])
    assert tr.event == 0
    assert abs(tr.t1 - np.log(2.0)) < 1e-8


def test_integrate_rejects_reversed_interval():
    with pytest.raises(ValueError):
        integrate(lambda t, x: x, 1.0, 0.0, [1.0])


def test_evaluation_outside_range_raises():
    tr = integrate(lambda t, x: -x, 0.0, 1.0, [1.0])
    with pytest.raises(ValueError):
        tr(1.5)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=4), st.floats(0.1, 3.0))
def test_trajectory_invariants(x0, t1):
    n = len(x0)
    M = np.diag(np.linspace(-1, 1, n))
    tr = integrate(lambda t, x: M @ x, 0.0, t1, np.array(x0))
    assert np.all(np.diff(tr.times) > 0)
    assert tr.states.shape == (len(tr.times), n)
    for t in np.linspace(0.0, t1, 5):
        assert tr(t).shape == (n,)


# fundamental matrices

def test_zero_generator_gives_identity():
    Y = fundamental_matrix(lambda t: np.zeros((3, 3)), 0.0, 2.0)
    np.testing.assert_allclose(Y, np.eye(3), atol=1e-14)


def test_constant_diagonal_generator():
    d = np.array([0.3, -1.2, 0.05])
    Y = fundamental_matrix(lambda t: np.diag(d), 0.0, 2.0)
    np.testing.assert_allclose(Y, np.diag(np.exp(2.0 * d)), rtol=1e-9)


def test_hopf_monodromy_eigenvalues(hopf):
    lin = hopf[2]
    ev = np.sort(np.linalg.eigvals(fundamental_matrix(lin.A, 0.0, lin.T)).real)
    np.testing.assert_allclose(ev, [1.0, np.exp(np.pi)], rtol=1e-8)


def test_real_generator_through_complex_path_stays_real(hopf):
    lin = hopf[2]
    Y = fundamental_matrix(lambda t: lin.A(t).astype(complex), 0.0, lin.T)
    assert np.iscomplexobj(Y)
    assert np.max(np.abs(Y.imag)) < 1e-14


def test_composition_over_half_periods(hopf):
    lin = hopf[2]
    tol = 1e-10
    full = fundamental_matrix(lin.A, 0.0, lin.T, tol=tol)
    first = fundamental_matrix(lin.A, 0.0, lin.T / 2, tol=tol)
    second = fundamental_matrix(lin.A, lin.T / 2, lin.T, tol=tol)
    assert np.max(np.abs(full - second @ first)) <= 10 * tol * np.linalg.norm(full)


# monodromy

@pytest.mark.parametrize("p", [-0.25, -0.1])
def test_uncontrolled_monodromy_closed_form(p):
    _, _, lin = hopf_system(p)
    np.testing.assert_allclose(monodromy_uncontrolled(lin), hopf_monodromy(p), atol=1e-8 * np.exp(-4 * np.pi * p))


def test_zero_coefficients_give_identity_monodromy():
    lin = Linearization(1.0, lambda t: np.zeros((2, 2)), lambda t: np.ones(2))
    np.testing.assert_allclose(monodromy_uncontrolled(lin), np.eye(2), atol=1e-14)


def test_nonpositive_determinant_flags_failed_integration(monkeypatch):
    monkeypatch.setattr(ode, "fundamental_matrix", lambda *a, **k: np.diag([-1.0, 1.0]))
    lin = Linearization(1.0, lambda t: np.zeros((2, 2)), lambda t: np.ones(2))
    with pytest.raises(InconsistentMonodromy):
        monodromy_uncontrolled(lin)


def test_linearization_is_periodic(hopf):
    lin = hopf[2]
    for t in (0.0, 0.7, 2.5):
        np.testing.assert_allclose(lin.A(t + lin.T), lin.A(t), atol=1e-12)
        np.testing.assert_allclose(lin.b(t + lin.T), lin.b(t), atol=1e-12)


def test_parametrized_monodromy_at_mu_zero_is_P0(hopf, P0, time_design):
    P = monodromy_parametrized(hopf[2], 0.0, time_design)
    np.testing.assert_allclose(P, P0, rtol=0, atol=1e-9 * np.linalg.norm(P0))


def test_zero_gains_leave_monodromy_unchanged(hopf, P0, time_design):
    d = time_design.replace(K0=np.zeros(2), targets=())
    for mu in (0.5, 1.0, 1.5 - 0.5j):
        np.testing.assert_allclose(monodromy_parametrized(hopf[2], mu, d), P0, rtol=0,
                                   atol=1e-9 * np.linalg.norm(P0))


def test_parametrized_monodromy_near_delta_limit(hopf, P0, time_design):
    lin = hopf[2]
    limit = P0 @ expm(-np.outer(lin.b(0.0), time_design.K0))
    err = np.linalg.norm(monodromy_parametrized(lin, 1.0, time_design) - limit, 2)
    # O(delta) with a moderate constant
    assert err < 50 * time_design.delta * np.linalg.norm(limit, 2)


@pytest.mark.parametrize("mu", [1.0, 2.0, -1.5 + 0.8j])
def test_delta_halving_halves_limit_error(hopf, P0, time_design, mu):
    lin = hopf[2]
    limit = P0 @ expm(-mu * np.outer(lin.b(0.0), time_design.K0))
    errs = [np.linalg.norm(monodromy_parametrized(lin, mu, time_design.replace(delta=lin.T / k)) - limit, 2)
            for k in (250, 500, 1000)]
    for a, b in zip(errs, errs[1:]):
        assert 0.35 <= b / a <= 0.65


def test_mu_bound_is_enforced(hopf, time_design):
    with pytest.raises(ValueError):
        monodromy_parametrized(hopf[2], 5.0, time_design, mu_bound=4.0)


def _rk4_monodromy(lin, mu, K0, delta, steps_per_delta=64, steps_rest=20000):
    # fixed-step RK4 with the sharp impulse, stepping exactly onto t = delta
    n = lin.n
    K0 = np.asarray(K0)

    def gen(t, active):
        G = lin.A(t).astype(complex)
        if active:
            G = G - mu * np.outer(lin.b(t), K0) / delta
        return G

    Y = np.eye(n, dtype=complex)
    for (a, b, m, active) in ((0.0, delta, steps_per_delta, True), (delta, lin.T, steps_rest, False)):
        h = (b - a) / m
        t = a
        for _ in range(m):
            k1 = gen(t, active) @ Y
            k2 = gen(t + h / 2, active) @ (Y + h / 2 * k1)
            k3 = gen(t + h / 2, active) @ (Y + h / 2 * k2)
            k4 = gen(t + h, active) @ (Y + h * k3)
            Y = Y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
    return Y


def test_parametrized_monodromy_matches_independent_rk4(hopf, time_design):
    """Sharp impulse (no ramps) against a fixed-step RK4 oracle."""
    lin = hopf[2]
    d = time_design.replace(regularised=False)
    for mu in (1.0, 0.6 + 0.3j):
        P = monodromy_parametrized(lin, mu, d)
        # fourth-order Richardson step over two RK4 resolutions
        Q1 = _rk4_monodromy(lin, mu, d.K0, d.delta)
        Q2 = _rk4_monodromy(lin, mu, d.K0, d.delta, 128, 40000)
        Q = Q2 + (Q2 - Q1) / 15
        np.testing.assert_allclose(P, Q, rtol=1e-8, atol=1e-8)


def test_gain_design_constant_gate_monodromy_matches_expm():
    # constant coefficients: y' = (A - mu b K^T) y exactly
    A = np.array([[0.1, 1.0], [-1.0, 0.2]])
    b = np.array([0.0, 1.0])
    K = np.array([0.3, 0.4])
    lin = Linearization(2.0, lambda t: A, lambda t: b)
    d = GainDesign(K, 0.1, 0.1, gating=Gating.CONSTANT)
    P = monodromy_parametrized(lin, 0.7, d)
    np.testing.assert_allclose(P, expm(2.0 * (A - 0.7 * np.outer(b, K))), rtol=1e-9)
