import numpy as np
import pytest

from etdf import models
from etdf.design import GainDesign, Gating, design_gains
from etdf.errors import ConfigError, NoPeriodicOrbit, OrbitNotFound
from etdf.floquet import operator_spectrum
from etdf.models import (
    PENDULUM_SEED,
    expression_system,
    find_orbit_shooting,
    hopf_monodromy,
    hopf_system,
    linearize_along_orbit,
    pendulum_system,
)
from etdf.ode import integrate, monodromy_uncontrolled

HOPF_EQS = ["p*x1 - x2 + x1*(x1^2 + x2^2) + u", "x1 + p*x2 + x2*(x1^2 + x2^2) + u"]


# Hopf normal form

def test_hopf_orbit_and_period(hopf):
    _, orbit, _ = hopf
    assert orbit.T == pytest.approx(2 * np.pi)
    t = np.linspace(0, orbit.T, 9)
    np.testing.assert_allclose(orbit.x_star(t), [0.5 * np.sin(t), -0.5 * np.cos(t)], atol=1e-15)
    assert np.linalg.norm(orbit.x_star(orbit.T) - orbit.x0) < 1e-12
    assert np.linalg.norm(orbit.xdot0) > 0


def test_hopf_unstable_exponent(P0):
    assert np.log(np.max(np.linalg.eigvals(P0).real)) / (2 * np.pi) == pytest.approx(0.5, abs=1e-9)


def test_hopf_input_direction_is_constant(hopf):
    lin = hopf[2]
    for t in np.linspace(0, 2 * np.pi, 7):
        np.testing.assert_array_equal(lin.b(t), [1.0, 1.0])


def test_hopf_linearization_matches_hand_derivation(hopf):
    # on the orbit x1 = r sin t, x2 = -r cos t with r^2 = -p, so p + r^2 = 0 and
    # A(t) = [[2 r^2 sin^2 t, -1 - 2 r^2 sin t cos t], [1 - 2 r^2 sin t cos t, 2 r^2 cos^2 t]]
    lin = hopf[2]
    r2 = 0.25
    for t in np.linspace(0, 2 * np.pi, 11):
        s, c = np.sin(t), np.cos(t)
        A = np.array([[2 * r2 * s * s, -1 - 2 * r2 * s * c], [1 - 2 * r2 * s * c, 2 * r2 * c * c]])
        np.testing.assert_allclose(lin.A(t), A, atol=1e-8)
    np.testing.assert_allclose(lin.A(0.0), lin.A(lin.T), atol=1e-10)


@pytest.mark.parametrize("p", [0.0, 0.2])
def test_hopf_needs_negative_p(p):
    with pytest.raises(NoPeriodicOrbit):
        hopf_system(p)


@pytest.mark.parametrize("p", [-0.05, -0.1, -0.25, -0.5])
def test_computed_monodromy_matches_closed_form(p):
    _, _, lin = hopf_system(p)
    P0 = monodromy_uncontrolled(lin)
    scale = np.exp(-4 * np.pi * p)
    assert np.max(np.abs(P0 - hopf_monodromy(p))) <= 1e-7 * scale


def test_jacobians_agree_with_finite_differences(hopf):
    system = hopf[0]
    rng = np.random.default_rng(3)
    for _ in range(5):
        assert system.jacobian_mismatch(rng.normal(size=2), rng.normal()) < 1e-5


# shooting

def test_shooting_recovers_hopf_orbit():
    system, _, _ = hopf_system(-0.25)
    orbit = find_orbit_shooting(system, 6.0, np.array([0.0, -0.45]))
    assert orbit.T == pytest.approx(2 * np.pi, abs=1e-8)
    r = np.linalg.norm(orbit.x_star(np.linspace(0, orbit.T, 50)), axis=0)
    np.testing.assert_allclose(r, 0.5, atol=1e-8)


def test_shooting_from_exact_seed_needs_few_iterations(monkeypatch):
    system, orbit, _ = hopf_system(-0.25)
    calls = []
    real = models._flow_with_variational

    def counting(*a, **k):
        calls.append(1)
        return real(*a, **k)

    monkeypatch.setattr(models, "_flow_with_variational", counting)
    find_orbit_shooting(system, orbit.T, orbit.x0)
    # initial residual plus at most two Newton steps
    assert len(calls) <= 3


def test_shooting_from_equilibrium_fails():
    system, _, _ = hopf_system(-0.25)
    with pytest.raises(OrbitNotFound):
        find_orbit_shooting(system, 6.0, np.zeros(2))


def test_shooting_orbit_feeds_pipeline_like_analytic_orbit(hopf, P0):
    system, orbit, lin = hopf
    sh = find_orbit_shooting(system, orbit.T, orbit.x0)
    lin_sh = linearize_along_orbit(system, sh)
    P0_sh = monodromy_uncontrolled(lin_sh)
    K_an = design_gains(P0, lin.b(0.0), [0.5j, -0.5j])
    K_sh = design_gains(P0_sh, lin_sh.b(0.0), [0.5j, -0.5j])
    np.testing.assert_allclose(K_sh, K_an, atol=1e-6)
    d = GainDesign(K_an, orbit.T / 500, 0.04, gating=Gating.TIME)
    a = operator_spectrum(lin, d, N=64).values
    b = operator_spectrum(lin_sh, d.replace(K0=K_sh), N=64).values
    big = a[np.abs(a) > 0.9]
    for z in big:
        assert np.min(np.abs(b - z)) < 1e-6


# pendulum

def test_pendulum_hanging_position_without_forcing():
    system = pendulum_system({"a": 0.0})
    x = np.array([0.0, 0.0, 1.0, 0.0])
    f = system.rhs(x, 0.0)
    np.testing.assert_array_equal(f[:2], 0.0)
    # the appended phase oscillator keeps rotating on its unit circle
    assert f[3] == pytest.approx(system.params["Omega"])


def test_pendulum_period_two_orbit():
    system = pendulum_system()
    orbit = find_orbit_shooting(system, PENDULUM_SEED["T"], np.array(PENDULUM_SEED["x"]))
    assert orbit.T == pytest.approx(2 * (2 * np.pi / system.params["Omega"]), rel=1e-8)
    tr = integrate(lambda t, x: system.rhs(x, 0.0), 0.0, orbit.T, orbit.x0, tol=1e-12, atol=1e-14)
    assert np.linalg.norm(tr(orbit.T) - orbit.x0) < 1e-8
    assert abs(orbit.x0[2] ** 2 + orbit.x0[3] ** 2 - 1) < 1e-8


def test_pendulum_jacobians():
    system = pendulum_system()
    rng = np.random.default_rng(5)
    for _ in range(5):
        x = rng.normal(size=4)
        assert system.jacobian_mismatch(x, rng.normal()) < 1e-5


# systems from expressions

def test_expression_system_reproduces_hopf(hopf):
    expr = expression_system(HOPF_EQS, {"p": -0.25})
    rng = np.random.default_rng(8)
    for _ in range(5):
        x, u = rng.normal(size=2), rng.normal()
        np.testing.assert_allclose(expr.rhs(x, u), hopf[0].rhs(x, u), rtol=1e-14, atol=1e-14)
        np.testing.assert_allclose(expr.jac_x(x, u), hopf[0].jac_x(x, u), rtol=1e-14, atol=1e-14)
        np.testing.assert_allclose(expr.jac_u(x, u), [1.0, 1.0])
        assert expr.jacobian_mismatch(x, u) < 1e-5


def test_expression_system_broadcasts():
    expr = expression_system(["x2", "-sin(x1) + u"])
    X = np.random.default_rng(1).normal(size=(2, 6))
    out = expr.rhs(X, 0.0)
    assert out.shape == (2, 6)
    np.testing.assert_allclose(out[1], -np.sin(X[0]))


@pytest.mark.parametrize("bad", ["__import__('os')", "x1.real", "foo(x1)", "x3 + 1", "'a'", "x1 if x2 else 0"])
def test_expression_rejects_unsafe_or_unknown(bad):
    with pytest.raises(ConfigError):
        expression_system([bad, "x1"])


def test_expression_parameter_clash():
    with pytest.raises(ConfigError):
        expression_system(["x1", "x2"], {"u": 1.0})
