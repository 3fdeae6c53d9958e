import numpy as np
import pytest

from etdf.design import Gating
from etdf.simulate import HistoryState, estimate_decay, phase_align, radial_offset, simulate


# history data

def test_history_rejects_bad_mesh(hopf):
    orbit = hopf[1]
    mesh = np.linspace(-orbit.T, 0, 300)
    x = orbit.x_star(mesh).T
    with pytest.raises(ValueError):
        HistoryState(mesh[::-1] ** 2, x, x)
    with pytest.raises(ValueError):
        HistoryState(mesh, x, x[:-1])


def test_consistent_start_has_no_defect(hopf):
    orbit = hopf[1]
    h = HistoryState.perturbed(orbit, 1e-3, memory="same")
    assert h.compatibility_defect(0.04) == pytest.approx(0.0, abs=1e-15)


def test_orbit_memory_defect_is_reported(hopf, P0, time_design):
    system, orbit, _ = hopf
    h = HistoryState.perturbed(orbit, 1e-3, memory="orbit")
    assert h.compatibility_defect(0.04) == pytest.approx(0.04 * 1e-3, rel=1e-6)
    res = simulate(system, orbit, time_design, h, 1)
    assert res.diagnostics.compatibility_defect > 0
    assert any("compatibility" in m for m in res.diagnostics.messages)


def test_radial_offset_has_requested_size(hopf):
    orbit = hopf[1]
    off = radial_offset(orbit, 1e-3)
    for t in (0.0, 1.0, 4.0):
        assert np.linalg.norm(off(t)) == pytest.approx(1e-3)
        assert np.dot(off(t), orbit.x_star(t)) > 0


def test_unknown_memory_mode(hopf):
    with pytest.raises(ValueError):
        HistoryState.perturbed(hopf[1], 1e-3, memory="zero")


# simulation

def test_on_orbit_start_is_noninvasive(hopf, time_design):
    system, orbit, _ = hopf
    tol = 1e-11
    res = simulate(system, orbit, time_design, HistoryState.from_orbit(orbit), 5, tol=tol)
    d = res.diagnostics
    # the impulse amplifies integration error by |K0| / delta
    scale = tol * np.linalg.norm(time_design.K0) / time_design.delta
    assert np.all(d.max_u <= 10 * scale)
    assert np.all(d.distance < 1e-9)
    assert d.diverged_at is None


def test_difference_relation_fidelity(hopf, time_design):
    system, orbit, _ = hopf
    res = simulate(system, orbit, time_design, HistoryState.perturbed(orbit, 1e-3), 4)
    assert np.all(res.diagnostics.fidelity <= 1e-10)


def test_zero_gain_diverges_at_floquet_rate(hopf, time_design):
    system, orbit, _ = hopf
    d = time_design.replace(K0=np.zeros(2), targets=())
    res = simulate(system, orbit, d, HistoryState.perturbed(orbit, 1e-5), 20)
    diag = res.diagnostics
    assert diag.diverged_at is not None
    assert not diag.converged
    assert diag.decay_rate > 1
    # linear regime: one period multiplies the radial offset by about e^pi
    growth = diag.distance[1] / diag.distance[0]
    assert growth == pytest.approx(np.exp(np.pi), rel=0.1)
    assert len(res.t) == len(res.x)


def test_time_and_state_gating_share_the_contraction(hopf, time_design, state_design):
    system, orbit, _ = hopf
    rates = []
    for d in (time_design, state_design):
        res = simulate(system, orbit, d, HistoryState.perturbed(orbit, 1e-5), 150)
        assert res.diagnostics.converged
        rates.append(res.diagnostics.decay_rate)
    assert abs(rates[0] - rates[1]) <= 0.05 * rates[1]


def test_perturbed_gain_still_stabilises_the_same_orbit(hopf, time_design):
    system, orbit, _ = hopf
    d = time_design.replace(K0=1.01 * time_design.K0)
    res = simulate(system, orbit, d, HistoryState.perturbed(orbit, 1e-5), 150)
    diag = res.diagnostics
    assert diag.converged
    assert diag.max_u[-1] < 1e-2 * diag.max_u[0]
    assert diag.distance[-1] < 1e-3 * diag.distance[0]


def test_constant_gating_is_not_simulated(hopf, time_design):
    system, orbit, _ = hopf
    with pytest.raises(ValueError):
        simulate(system, orbit, time_design.replace(gating=Gating.CONSTANT), HistoryState.from_orbit(orbit), 1)


def test_history_must_match_period_and_resolution(hopf, time_design):
    system, orbit, _ = hopf
    with pytest.raises(ValueError):
        simulate(system, orbit, time_design, HistoryState.from_orbit(orbit, N=50), 1)
    mesh = np.linspace(-1.0, 0.0, 300)
    x = np.zeros((300, 2))
    with pytest.raises(ValueError):
        simulate(system, orbit, time_design, HistoryState(mesh, x, x), 1)


# phase alignment

def _segment(orbit, shift, noise=0.0, seed=0):
    t = np.linspace(0, orbit.T, 400, endpoint=False)
    x = orbit.x_star(t + shift).T
    if noise:
        x = x + noise * np.random.default_rng(seed).normal(size=x.shape)
    return t, x


def test_phase_align_exact_shift(hopf):
    orbit = hopf[1]
    assert phase_align(_segment(orbit, 0.3), orbit) == pytest.approx(0.3, abs=1e-4)


def test_phase_align_identity(hopf):
    orbit = hopf[1]
    s = phase_align(_segment(orbit, 0.0), orbit)
    assert min(s, orbit.T - s) < 1e-6


def test_phase_align_with_noise(hopf):
    orbit = hopf[1]
    assert phase_align(_segment(orbit, 2.0, noise=1e-4, seed=4), orbit) == pytest.approx(2.0, abs=1e-3)


def test_phase_align_accepts_trajectory(hopf):
    system, orbit, _ = hopf
    from etdf.ode import integrate
    x0 = orbit.x_star(1.1)
    tr = integrate(lambda t, x: system.rhs(x, 0.0), 0.0, orbit.T, x0, tol=1e-11)
    assert phase_align(tr, orbit) == pytest.approx(1.1, abs=1e-6)


# decay estimate

def test_decay_of_geometric_sequence():
    d = 0.9 ** np.arange(40)
    assert estimate_decay(d) == pytest.approx(0.9, abs=1e-6)


def test_decay_fit_stops_at_floor():
    d = np.concatenate([0.5 ** np.arange(30), np.full(30, 1e-15)])
    assert estimate_decay(d, start=0, floor=1e-13) == pytest.approx(0.5, abs=1e-9)


def test_decay_of_diverging_sequence():
    assert estimate_decay(1.2 ** np.arange(20)) > 1


def test_decay_needs_enough_points():
    with pytest.raises(ValueError):
        estimate_decay(np.array([1.0, 0.5, 0.25]))
