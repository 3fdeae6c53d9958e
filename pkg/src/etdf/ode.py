"""Time stepping of linear and nonlinear ODEs, fundamental and monodromy matrices.

All integration goes through :func:`integrate`, a thin segmenting layer over
``scipy.integrate.solve_ivp`` (Dormand-Prince 8(5,3) by default) that restarts
exactly at declared breakpoints, so that piecewise-defined impulse gains do not
degrade the formal order of the method.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InconsistentMonodromy, IntegrationError

RTOL = 1e-10
ATOL = 1e-12


class Trajectory:
    """Dense-output solution assembled from breakpoint-delimited segments.

    ``times``/``states`` hold the accepted step points (states has shape
    ``(len(times), n)``); calling the trajectory evaluates the dense output.
    """

    def __init__(self, segments, times, states, order=7):
        self._segments = segments  # list of (t_start, t_end, OdeSolution)
        self._edges = np.array([s[0] for s in segments] + [segments[-1][1]])
        self.times = np.asarray(times)
        self.states = np.asarray(states)
        self.order = order

    @property
    def t0(self):
        return self._edges[0]

    @property
    def t1(self):
        return self._edges[-1]

    @property
    def dim(self):
        return self.states.shape[1]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        if np.any(tt < self.t0 - 1e-12 * max(1.0, abs(self.t0))) or np.any(
            tt > self.t1 + 1e-12 * max(1.0, abs(self.t1))
        ):
            raise ValueError("evaluation time outside trajectory range")
        idx = np.clip(np.searchsorted(self._edges, tt, side="right") - 1, 0, len(self._segments) - 1)
        out = np.empty((self.dim, tt.size), dtype=self.states.dtype)
        for k in np.unique(idx):
            sel = idx == k
            out[:, sel] = self._segments[k][2](tt[sel]).reshape(self.dim, -1)
        return out[:, 0] if scalar else out


def _segment_edges(t0, t1, breakpoints):
    bp = np.asarray(sorted(breakpoints), dtype=float) if len(breakpoints) else np.empty(0)
    span = t1 - t0
    inner = bp[(bp > t0 + 1e-14 * span) & (bp < t1 - 1e-14 * span)]
    return np.concatenate([[t0], inner, [t1]])


def integrate(
    rhs: Callable,
    t0: float,
    t1: float,
    x0,
    tol: float = RTOL,
    atol: float | None = None,
    breakpoints: Sequence[float] = (),
    method: str = "DOP853",
    max_step: float = np.inf,
    events=None,
) -> Trajectory:
    """Integrate ``x' = rhs(t, x)`` from ``t0`` to ``t1`` with dense output.

    Integration is restarted at every breakpoint inside ``(t0, t1)``.  Complex
    initial data are realified to twice the dimension internally.  When a
    terminal event in ``events`` fires, the trajectory ends there and
    ``Trajectory.event`` holds the index of that event (else ``None``).
    """
    if not t1 > t0:
        raise ValueError("integrate requires t1 > t0")
    x0 = np.asarray(x0)
    if atol is None:
        atol = ATOL
    complex_mode = np.iscomplexobj(x0)
    if complex_mode:
        n = x0.size
        y0 = np.concatenate([x0.real, x0.imag]).astype(float)

        def f(t, y):
            z = rhs(t, y[:n] + 1j * y[n:])
            return np.concatenate([np.real(z), np.imag(z)])
    else:
        y0 = x0.astype(float).ravel()
        f = rhs

    edges = _segment_edges(t0, t1, breakpoints)
    segments, times, states = [], [t0], [y0]
    y = y0
    hit = None
    for a, b in zip(edges[:-1], edges[1:]):
        sol = solve_ivp(f, (a, b), y, method=method, rtol=tol, atol=atol,
                        dense_output=True, max_step=max_step, events=events)
        if sol.status == -1:
            raise IntegrationError(
                f"stiffness/discontinuity failure at t={sol.t[-1]:.17g}: {sol.message}", t=sol.t[-1]
            )
        if sol.t[-1] > a:
            segments.append((a, sol.t[-1], sol.sol))
            times.extend(sol.t[1:])
            states.extend(sol.y[:, 1:].T)
        y = sol.y[:, -1]
        if sol.status == 1:
            hit = next(i for i, te in enumerate(sol.t_events) if len(te))
            break
    if not segments:
        segments.append((t0, t0, lambda t, y=y: np.repeat(y[:, None], np.size(t), axis=1)))

    states = np.asarray(states)
    if complex_mode:
        n = x0.size
        states = states[:, :n] + 1j * states[:, n:]
        segments = [(a, b, _ComplexView(s, n)) for a, b, s in segments]
    traj = Trajectory(segments, times, states)
    traj.event = hit
    return traj


class _ComplexView:
    def __init__(self, sol, n):
        self.sol, self.n = sol, n

    def __call__(self, t):
        y = self.sol(t)
        return y[: self.n] + 1j * y[self.n:]


def fundamental_matrix(gen, t0, t1, tol=RTOL, atol=None, breakpoints=(), method="DOP853"):
    """Solution ``Y(t1)`` of ``Y' = gen(t) Y``, ``Y(t0) = I``.

    ``gen`` may return real or complex matrices; the complex case is integrated
    in realified form (dimension ``2n``).  All columns are advanced together.
    """
    G0 = np.asarray(gen(t0))
    n = G0.shape[0]
    if np.iscomplexobj(G0):
        # realification: [Yr; Yi]' = [[Gr, -Gi], [Gi, Gr]] [Yr; Yi]
        def rhs(t, y):
            G = gen(t)
            Y = y.reshape(2 * n, n)
            Yr, Yi = Y[:n], Y[n:]
            Gr, Gi = G.real, G.imag
            return np.concatenate([Gr @ Yr - Gi @ Yi, Gi @ Yr + Gr @ Yi]).ravel()

        y0 = np.concatenate([np.eye(n), np.zeros((n, n))]).ravel()
        traj = integrate(rhs, t0, t1, y0, tol=tol, atol=atol, breakpoints=breakpoints, method=method)
        Y = traj.states[-1].reshape(2 * n, n)
        return Y[:n] + 1j * Y[n:]

    def rhs(t, y):
        return (gen(t) @ y.reshape(n, n)).ravel()

    traj = integrate(rhs, t0, t1, np.eye(n).ravel(), tol=tol, atol=atol,
                     breakpoints=breakpoints, method=method)
    return traj.states[-1].reshape(n, n)


@dataclass(frozen=True)
class Linearization:
    """T-periodic coefficients ``A(t) = d_x f(x*(t), 0)``, ``b(t) = d_u f(x*(t), 0)``.

    The callables are evaluated at ``t mod T``, so any real ``t`` is accepted.
    """

    T: float
    A_fn: Callable
    b_fn: Callable
    n: int = field(default=0)

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("period must be positive")
        if self.n == 0:
            object.__setattr__(self, "n", np.atleast_2d(self.A_fn(0.0)).shape[0])

    def A(self, t):
        return np.asarray(self.A_fn(t % self.T), dtype=float)

    def b(self, t):
        return np.asarray(self.b_fn(t % self.T), dtype=float).reshape(self.n)


def monodromy_uncontrolled(lin: Linearization, tol=RTOL):
    """Monodromy matrix ``P0`` of ``y' = A(t) y`` over one period."""
    P0 = fundamental_matrix(lin.A, 0.0, lin.T, tol=tol)
    d = np.linalg.det(P0)
    if not d > 0:
        raise InconsistentMonodromy(f"det P0 = {d:.3e} <= 0; the integration failed")
    return P0


class MonodromyFamily:
    """``mu -> P(mu; delta, K0)`` for a fixed linearisation and gain design.

    The monodromy is assembled as a product of fundamental matrices over the
    gate's active windows and the gate-free remainder of the period.  The
    remainder does not depend on ``mu`` and is computed once.
    """

    def __init__(self, lin: Linearization, gate, K0, tol=RTOL):
        self.lin = lin
        self.gate = gate
        self.K0 = np.asarray(K0, dtype=float)
        self.tol = tol
        T = lin.T
        self._pieces = []  # (a, b, active)
        edges = [0.0]
        for a, b in gate.windows():
            if a > edges[-1]:
                self._pieces.append((edges[-1], a, False))
            self._pieces.append((a, b, True))
            edges.append(b)
        if edges[-1] < T:
            self._pieces.append((edges[-1], T, False))
        self._free = {}
        for a, b, active in self._pieces:
            if not active:
                self._free[(a, b)] = fundamental_matrix(lin.A, a, b, tol=tol)

    def _active(self, a, b, mu):
        lin, gate, K0 = self.lin, self.gate, self.K0
        if mu == 0 or not np.any(K0):
            return fundamental_matrix(lin.A, a, b, tol=self.tol, breakpoints=gate.breakpoints(a, b))
        mu = complex(mu)

        def gen(t):
            return lin.A(t) - mu * gate(t) * np.outer(lin.b(t), K0)

        return fundamental_matrix(gen, a, b, tol=self.tol, breakpoints=gate.breakpoints(a, b))

    def __call__(self, mu):
        n = self.lin.n
        P = np.eye(n, dtype=complex)
        for a, b, active in self._pieces:
            M = self._active(a, b, mu) if active else self._free[(a, b)]
            P = M @ P
        return P


def monodromy_parametrized(lin: Linearization, mu, design, tol=RTOL, mu_bound=None):
    """Monodromy of ``y' = [A(t) - mu b(t) Delta(t) K0^T] y`` over ``[0, T]``.

    ``design`` is a :class:`etdf.design.GainDesign`; its gate profile (impulse,
    regularised impulse or constant) supplies ``Delta``.
    """
    if mu_bound is not None and abs(mu) > mu_bound:
        raise ValueError(f"|mu| = {abs(mu):.3g} exceeds declared bound {mu_bound}")
    return MonodromyFamily(lin, design.gate(lin.T), design.K0, tol=tol)(mu)
