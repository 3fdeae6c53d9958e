"""Nonlinear closed-loop simulation of ETDF control by the method of steps.

The delay equals the period, so each period ``[kT, (k+1)T]`` is integrated as an
ODE in ``x`` forced by the memory ``x~`` of that period.  ``x~`` is stored on a
fixed set of nodes (relative to the period start) together with its time
derivative and interpolated by cubic Hermite splines.  After a period is done,
the difference relation

    x~_{k+1}(s) = (1 - eps) x~_k(s) + eps x_k(s)

is applied node by node, values and derivatives alike.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.optimize import minimize_scalar

from .design import GainDesign, Gating, ImpulseProfile, ball_indicator
from .errors import ETDFError
from .ode import integrate

log = logging.getLogger(__name__)

DIST_FLOOR = 1e-13


@dataclass
class HistoryState:
    """Initial segments of ``x`` and ``x~`` on a uniform mesh over ``[-T, 0]``.

    Sampled data are interpolated by cubic splines.  Histories built from an
    orbit also carry exact callables ``(t, nu) -> value or nu-th derivative``,
    which take precedence, so that an on-orbit start is exact.
    """

    mesh: np.ndarray
    x_hist: np.ndarray  # (N, n)
    xtilde_hist: np.ndarray  # (N, n)
    x_fn: Callable | None = None
    xtilde_fn: Callable | None = None

    def __post_init__(self):
        self.mesh = np.asarray(self.mesh, dtype=float)
        self.x_hist = np.asarray(self.x_hist, dtype=float)
        self.xtilde_hist = np.asarray(self.xtilde_hist, dtype=float)
        if self.x_hist.shape != self.xtilde_hist.shape or self.x_hist.shape[0] != self.mesh.size:
            raise ValueError("history arrays do not match the mesh")
        h = np.diff(self.mesh)
        if not np.allclose(h, h[0], rtol=1e-9, atol=0) or abs(self.mesh[-1]) > 1e-12 * abs(self.mesh[0]):
            raise ValueError("history mesh must be uniform on [-T, 0]")

    @property
    def T(self):
        return -self.mesh[0]

    @property
    def N(self):
        return self.mesh.size

    def compatibility_defect(self, epsilon):
        """``|x~(0) - (1-eps) x~(-T) - eps x(-T)|``; nonzero data is allowed."""
        r = self.xtilde_hist[-1] - (1 - epsilon) * self.xtilde_hist[0] - epsilon * self.x_hist[0]
        return float(np.linalg.norm(r))

    def interpolants(self):
        """Pair of callables ``(t, nu) -> (len(t), n)`` for ``x`` and ``x~``."""
        out = []
        for fn, data in ((self.x_fn, self.x_hist), (self.xtilde_fn, self.xtilde_hist)):
            if fn is None:
                spl = CubicSpline(self.mesh, data)
                fn = (lambda t, nu=0, spl=spl: spl(t, nu))
            out.append(fn)
        return tuple(out)

    @classmethod
    def from_orbit(cls, orbit, N=400, offset: Callable | None = None, xtilde_offset: Callable | None = None):
        """History ``x(t) = x*(t) + offset(t)``; ``x~`` defaults to the same segment.

        Offsets are sampled on the mesh and spline-interpolated; the orbit
        part is evaluated exactly.
        """
        mesh = np.linspace(-orbit.T, 0.0, N)

        def exact(off):
            spl = None if off is None else CubicSpline(mesh, np.asarray([off(t) for t in mesh]))

            def fn(t, nu=0):
                base = (orbit.x_star(t) if nu == 0 else orbit.velocity(t)).T
                return base if spl is None else base + spl(t, nu)
            return fn

        x_fn = exact(offset)
        xt_fn = x_fn if xtilde_offset is None else exact(xtilde_offset)
        return cls(mesh, x_fn(mesh), xt_fn(mesh), x_fn, xt_fn)

    @classmethod
    def perturbed(cls, orbit, amplitude, N=400, memory="orbit"):
        """Radially displaced ``x`` history.

        ``memory="orbit"`` keeps ``x~`` on the orbit, so the first impulse
        already acts on the displacement; ``memory="same"`` copies the
        displaced ``x`` segment into ``x~`` (the consistent start).
        """
        off = radial_offset(orbit, amplitude)
        if memory == "orbit":
            return cls.from_orbit(orbit, N, offset=off, xtilde_offset=lambda t: np.zeros(orbit.n))
        if memory == "same":
            return cls.from_orbit(orbit, N, offset=off)
        raise ValueError(f"unknown memory initialisation {memory!r}")


def radial_offset(orbit, amplitude, center=None):
    """Offset of size ``amplitude`` pointing away from the orbit's centroid."""
    if center is None:
        ts = np.linspace(0, orbit.T, 256, endpoint=False)
        center = orbit.x_star(ts).mean(axis=1)
    center = np.asarray(center, dtype=float)

    def off(t):
        d = orbit.x_star(t) - center
        return amplitude * d / np.linalg.norm(d)

    return off


@dataclass
class SimDiagnostics:
    max_u: np.ndarray
    distance: np.ndarray
    phase: np.ndarray
    fidelity: np.ndarray  # difference-relation residual on the nodes, per period
    compatibility_defect: float = 0.0
    diverged_at: int | None = None
    decay_rate: float = np.nan
    messages: list = field(default_factory=list)

    @property
    def n_periods(self):
        return len(self.distance)

    @property
    def converged(self):
        return self.diverged_at is None and np.isfinite(self.decay_rate) and self.decay_rate < 1.0

    def to_dict(self):
        return {
            "max_u": [float(v) for v in self.max_u],
            "distance": [float(v) for v in self.distance],
            "phase": [float(v) for v in self.phase],
            "compatibility_defect": self.compatibility_defect,
            "diverged_at": self.diverged_at,
            "decay_rate": None if not np.isfinite(self.decay_rate) else float(self.decay_rate),
            "converged": self.converged,
            "messages": list(self.messages),
        }


@dataclass
class SimResult:
    """Sampled trajectory (uniform per period) plus diagnostics."""

    t: np.ndarray
    x: np.ndarray  # (len(t), n)
    xtilde: np.ndarray
    u: np.ndarray
    diagnostics: SimDiagnostics


def _nodes(T, N, gate_zones, h_fine):
    pts = [np.linspace(0.0, T, N + 1)]
    for a, b in gate_zones:
        a, b = max(a, 0.0), min(b, T)
        if b > a:
            pts.append(np.linspace(a, b, max(2, int(np.ceil((b - a) / h_fine)) + 1)))
    s = np.unique(np.concatenate(pts))
    # drop near-duplicates that would make the Hermite spline ill-posed
    keep = np.concatenate([[True], np.diff(s) > 1e-12 * T])
    return s[keep]


class _Controller:
    """``u = gate * K0^T (x~ - x)`` for either gating mode."""

    def __init__(self, orbit, design: GainDesign):
        self.orbit = orbit
        self.design = design
        self.K0 = design.K0
        self.T = orbit.T
        if design.gating is Gating.TIME:
            self.prof = design.gate(orbit.T)
        elif design.gating is Gating.STATE:
            self.prof = ImpulseProfile(design.delta, orbit.T, regularised=True)
            self.rho = design.rho
            self.x0 = np.asarray(orbit.x0, dtype=float)
            self.v = np.asarray(orbit.xdot0, dtype=float)
            self.vv = float(self.v @ self.v)
        else:
            raise ValueError("simulation supports time or state gating only")

    def section(self, x):
        return self.v @ (x - (self.x0[:, None] if x.ndim == 2 else self.x0)) / self.vv

    def gate(self, t, x):
        if self.design.gating is Gating.TIME:
            return self.prof(t)
        return ball_indicator(x, self.x0, self.rho) * self.prof(self.section(x))


def simulate(system, orbit, design: GainDesign, init: HistoryState, n_periods: int,
             tol=1e-11, atol=1e-13, escape_radius=None, fine_pad=None, fine_per_delta=16,
             min_mesh=200, samples_per_period=None) -> SimResult:
    """Integrate the ETDF closed loop for ``n_periods`` periods.

    Divergence (state norm beyond ``escape_radius``, default ten orbit
    diameters around the orbit centroid) ends the run early and is recorded
    in the diagnostics rather than raised.
    """
    design = design.resolved(orbit)
    T, eps, delta = orbit.T, design.epsilon, design.delta
    if init.N < min_mesh:
        raise ValueError(f"history mesh needs at least {min_mesh} points per period, got {init.N}")
    if abs(init.T - T) > 1e-9 * T:
        raise ValueError("history length differs from the orbit period")
    ctrl = _Controller(orbit, design)
    if design.gating is Gating.STATE and 2 * design.rho / np.sqrt(ctrl.vv) >= T / 2:
        raise ValueError("gate radius too large: the section strip would wrap around the period")

    ts_orbit = np.linspace(0, T, 256, endpoint=False)
    xs_orbit = orbit.x_star(ts_orbit)
    centroid = xs_orbit.mean(axis=1)
    diam = orbit.diameter()
    if escape_radius is None:
        escape_radius = 10.0 * diam

    d2 = delta * delta
    pad = fine_pad if fine_pad is not None else 5.0 * (delta + 2 * d2)
    zones = [(0.0, delta + d2 + pad), (T - d2 - pad, T)]
    nodes = _nodes(T, init.N, zones, delta / fine_per_delta)
    m = samples_per_period or init.N
    s_samp = np.linspace(0.0, T, m, endpoint=False)

    # x~ on [0, T] from the history
    xs, xts = init.interpolants()
    X_prev = xs(nodes - T)
    dX_prev = xs(nodes - T, 1)
    Xt = (1 - eps) * xts(nodes - T) + eps * X_prev
    dXt = (1 - eps) * xts(nodes - T, 1) + eps * dX_prev

    diag = SimDiagnostics(max_u=np.empty(0), distance=np.empty(0), phase=np.empty(0),
                          fidelity=np.empty(0),
                          compatibility_defect=init.compatibility_defect(eps))
    if diag.compatibility_defect > 1e-12 * max(1.0, diam):
        diag.messages.append(f"initial data violates the x~ compatibility relation by "
                             f"{diag.compatibility_defect:.3e}")
    max_u, dist, phase, fid = [], [], [], []
    T_out, X_out, Xt_out, U_out = [], [], [], []

    x = np.asarray(init.x_hist[-1], dtype=float).copy()
    K0 = design.K0
    for k in range(n_periods):
        t0 = k * T
        xt_spl = CubicHermiteSpline(t0 + nodes, Xt, dXt)

        def rhs(t, y, xt_spl=xt_spl):
            g = ctrl.gate(t, y)
            if g == 0.0:
                return system.rhs(y, 0.0)
            return system.rhs(y, g * (K0 @ (xt_spl(t) - y)))

        try:
            if design.gating is Gating.TIME:
                bps = ctrl.prof.breakpoints(t0, t0 + T)
                traj = integrate(rhs, t0, t0 + T, x, tol=tol, atol=atol, breakpoints=bps)
                pieces = [traj]
            else:
                pieces = _state_gated_period(system, ctrl, rhs, t0, T, x, tol, atol)
        except ETDFError as exc:
            diag.messages.append(f"diverged at period {k}: {exc}")
            diag.diverged_at = k
            break

        def x_of(t, pieces=pieces):
            t = np.atleast_1d(t)
            out = np.empty((len(x), t.size))
            edges = np.array([p.t0 for p in pieces])
            idx = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(pieces) - 1)
            for i in np.unique(idx):
                sel = idx == i
                out[:, sel] = pieces[i](np.clip(t[sel], pieces[i].t0, pieces[i].t1))
            return out

        Xk = x_of(t0 + nodes).T
        Uk = ctrl.gate(t0 + nodes, Xk.T) * ((Xt - Xk) @ K0)
        dXk = np.asarray(system.rhs(Xk.T, Uk)).T
        x = x_of(t0 + T)[:, 0]

        max_u.append(float(np.max(np.abs(Uk))))
        xs_k = x_of(t0 + s_samp).T
        s_star = phase_align((s_samp, xs_k), orbit)
        dist.append(float(np.max(np.linalg.norm(xs_k - orbit.x_star(s_samp + s_star).T, axis=1))))
        phase.append(s_star)
        T_out.append(t0 + s_samp)
        X_out.append(xs_k)
        Xt_samp = xt_spl(t0 + s_samp)
        Xt_out.append(Xt_samp)
        U_out.append(ctrl.gate(t0 + s_samp, xs_k.T) * ((Xt_samp - xs_k) @ K0))

        Xt_new = (1 - eps) * Xt + eps * Xk
        fid.append(float(np.max(np.abs(Xt_new - (1 - eps) * Xt - eps * Xk))))
        Xt, dXt = Xt_new, (1 - eps) * dXt + eps * dXk

        if not np.all(np.isfinite(x)) or np.max(np.linalg.norm(xs_k - centroid, axis=1)) > escape_radius:
            diag.messages.append(f"diverged at period {k}")
            diag.diverged_at = k
            break

    diag.max_u = np.asarray(max_u)
    diag.distance = np.asarray(dist)
    diag.phase = np.asarray(phase)
    diag.fidelity = np.asarray(fid)
    # the distance stalls at a level set by the integration tolerance
    floor = max(DIST_FLOOR, 50.0 * tol * max(1.0, diam))
    try:
        if diag.diverged_at is not None:
            diag.decay_rate = estimate_decay(diag, start=0, floor=floor, min_points=2)
        else:
            diag.decay_rate = estimate_decay(diag, floor=floor)
    except ValueError as exc:
        diag.messages.append(f"decay rate not estimated: {exc}")
    n = len(x)
    cat = (lambda arrs, shape: np.concatenate(arrs) if arrs else np.empty(shape))
    return SimResult(cat(T_out, (0,)), cat(X_out, (0, n)), cat(Xt_out, (0, n)), cat(U_out, (0,)), diag)


def _state_gated_period(system, ctrl, rhs, t0, T, x, tol, atol):
    """One period of the autonomous closed loop, split at gate transitions.

    Outside the gate support the uncontrolled vector field is integrated with
    a terminal event on entry into the section strip; inside, events stop the
    step sequence at every kink of the gate so each piece is smooth.
    """
    d = ctrl.design.delta
    d2 = d * d
    rho = ctrl.rho
    lo, hi = -d2, d + d2
    kinks = np.array([0.0, d])
    guard = 1e-12
    t_end = t0 + T
    pieces = []
    t = t0
    max_free = T / 16
    while t < t_end - 1e-14 * T:
        s = float(ctrl.section(x))
        r = float(np.linalg.norm(x - ctrl.x0))
        inside = (lo - guard <= s < hi - guard) and r < 2 * rho
        if not inside:
            def enter(tt, y):
                return ctrl.section(y) - lo
            enter.terminal, enter.direction = True, 1.0
            evs = [enter] if s < lo - guard else []
            if not evs:
                # past the strip or outside the ball: run free until the section
                # value is safely below the strip again
                def rearm(tt, y):
                    return ctrl.section(y) - (lo - 10 * guard - d)
                rearm.terminal, rearm.direction = True, -1.0
                evs = [rearm]
            traj = integrate(lambda tt, y: system.rhs(y, 0.0), t, t_end, x, tol=tol, atol=atol,
                             max_step=max_free, events=evs)
        else:
            evs = []
            for kv in kinks[kinks > s + guard]:
                def kink(tt, y, kv=kv):
                    return ctrl.section(y) - kv
                kink.terminal, kink.direction = True, 1.0
                evs.append(kink)

            def leave(tt, y):
                return ctrl.section(y) - hi
            leave.terminal, leave.direction = True, 1.0
            evs.append(leave)
            for radius in (rho, 2 * rho):
                if abs(r - radius) > guard:
                    def ring(tt, y, radius=radius):
                        return np.linalg.norm(y - ctrl.x0) - radius
                    ring.terminal, ring.direction = True, 0.0
                    evs.append(ring)
            traj = integrate(rhs, t, t_end, x, tol=tol, atol=atol, events=evs)
        pieces.append(traj)
        x = traj.states[-1]
        t_new = traj.t1
        if t_new <= t and traj.event is not None:
            # event located at the start point; take one unevented step to get past it
            step = min(d2, t_end - t)
            traj = integrate(rhs, t, t + step, x, tol=tol, atol=atol)
            pieces.append(traj)
            x = traj.states[-1]
            t_new = traj.t1
        t = t_new
    return pieces


def phase_align(traj_segment, orbit, n_scan=64) -> float:
    """Shift ``s*`` in ``[0, T)`` minimising the mean square of ``x(t) - x*(t+s)``.

    ``traj_segment`` is a ``(times, states)`` pair covering one period with
    ``states`` of shape ``(len(times), n)``, or a callable trajectory with
    ``t0``/``t1`` attributes.
    """
    T = orbit.T
    if callable(traj_segment):
        times = np.linspace(traj_segment.t0, traj_segment.t0 + T, 257)[:-1]
        states = traj_segment(times).T
    else:
        times, states = traj_segment
        times = np.asarray(times, dtype=float)
        states = np.asarray(states, dtype=float)

    def cost(s):
        return float(np.mean(np.sum((states - orbit.x_star(times + s).T) ** 2, axis=1)))

    grid = np.arange(n_scan) * T / n_scan
    vals = np.array([cost(s) for s in grid])
    i = int(np.argmin(vals))
    h = T / n_scan
    a, c = grid[i] - h, grid[i] + h
    if cost(a) > vals[i] and cost(c) > vals[i]:
        res = minimize_scalar(cost, bracket=(a, grid[i], c), method="golden", tol=1e-12)
    else:
        res = minimize_scalar(cost, bounds=(a, c), method="bounded", options={"xatol": 1e-12})
    s = float(np.mod(res.x, T))
    return 0.0 if np.isclose(s, T, rtol=0, atol=1e-12 * T) else s


def estimate_decay(diag, start=None, stop=None, floor=DIST_FLOOR, min_points=5) -> float:
    """Empirical per-period contraction factor from the orbit distances.

    The fit uses periods ``[start, stop)`` (default: skip the first fifth as
    transient) and stops at the first distance below ``floor``.
    """
    d = np.asarray(diag.distance if hasattr(diag, "distance") else diag, dtype=float)
    if start is None:
        start = len(d) // 5
    stop = len(d) if stop is None else stop
    idx = np.arange(start, stop)
    below = np.nonzero(d[idx] < floor)[0]
    if below.size:
        idx = idx[: below[0]]
    if idx.size < min_points:
        raise ValueError(f"need at least {min_points} post-transient periods above the noise floor")
    slope = np.polyfit(idx, np.log(d[idx]), 1)[0]
    rate = float(np.exp(slope))
    if rate > 1.0:
        log.info("diverging run: empirical multiplier %.4f", rate)
    return rate
