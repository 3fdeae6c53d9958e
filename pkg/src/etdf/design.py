"""Gain design: controllability, exponential spectrum assignment, impulse gates.

The impulse gain concentrates the feedback into a short window of width
``delta`` once per period.  :func:`assign_spectrum_exp` finds ``K`` with a
prescribed spectrum of ``A exp(b K^T)``; :func:`design_gains` applies it to the
uncontrolled monodromy so that ``P0 exp(-b0 K0^T)`` carries the targets.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import expm
from scipy.optimize import linear_sum_assignment

from .errors import (
    AssignmentImpossible,
    DeterminantObstruction,
    IllConditionedAssignment,
    SectionProjectionFailed,
)


class Gating(str, Enum):
    TIME = "time"
    STATE = "state"
    CONSTANT = "constant"  # Delta == 1, used for the constant-gain experiments


def smoothstep(s):
    """C^1 ramp ``3s^2 - 2s^3`` clamped to [0, 1]."""
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


class ImpulseProfile:
    """T-periodic near-impulse ``Delta_delta`` of height ``1/delta``.

    With ``regularised=True`` the two edges are replaced by smoothstep ramps
    of width ``delta**2`` on ``(delta, delta+delta^2)`` and ``(T-delta^2, T)``.
    """

    def __init__(self, delta, T, regularised=False, ramp=smoothstep):
        if not 0 < delta < T:
            raise ValueError("delta must lie in (0, T)")
        if regularised and not 2 * delta**2 + delta < T:
            raise ValueError("regularised impulse needs 2 delta^2 + delta < T")
        self.delta = float(delta)
        self.T = float(T)
        self.regularised = bool(regularised)
        self.ramp = ramp

    def __call__(self, t):
        d, T = self.delta, self.T
        tau = np.mod(t, T)
        out = np.where(tau <= d, 1.0 / d, 0.0)
        if self.regularised:
            d2 = d * d
            up = (tau > d) & (tau < d + d2)
            out = np.where(up, self.ramp((d + d2 - tau) / d2) / d, out)
            down = tau > T - d2
            out = np.where(down, self.ramp((tau - T + d2) / d2) / d, out)
        return out if np.ndim(out) else float(out)

    def _offsets(self):
        d = self.delta
        if self.regularised:
            return np.array([0.0, d, d + d * d, self.T - d * d])
        return np.array([0.0, d])

    def windows(self):
        """Active intervals inside ``[0, T]``."""
        d = self.delta
        if self.regularised:
            return [(0.0, d + d * d), (self.T - d * d, self.T)]
        return [(0.0, d)]

    def breakpoints(self, t0, t1):
        """Kinks of the profile strictly inside ``(t0, t1)``."""
        T = self.T
        ks = np.arange(np.floor(t0 / T) - 1, np.ceil(t1 / T) + 2)
        pts = (ks[:, None] * T + self._offsets()[None, :]).ravel()
        return np.sort(pts[(pts > t0) & (pts < t1)])

    def integral(self):
        # each ramp contributes delta^2 * int_0^1 m / delta = delta / 2
        return 1.0 + (self.delta if self.regularised else 0.0)


class ConstantGate:
    """``Delta == 1``: plain constant-gain feedback."""

    regularised = False

    def __init__(self, T):
        self.T = float(T)

    def __call__(self, t):
        return np.ones_like(t, dtype=float) if np.ndim(t) else 1.0

    def windows(self):
        return [(0.0, self.T)]

    def breakpoints(self, t0, t1):
        return np.empty(0)

    def integral(self):
        return self.T


@dataclass(frozen=True, eq=False)
class GainDesign:
    """Gains and gate parameters of an ETDF controller.

    ``rho=None`` means "10 % of the orbit diameter", resolved by
    :meth:`resolved`.
    """

    K0: np.ndarray
    delta: float
    epsilon: float
    rho: float | None = None
    targets: tuple = ()
    gating: Gating = Gating.TIME
    regularised: bool = True

    def __post_init__(self):
        object.__setattr__(self, "K0", np.asarray(self.K0, dtype=float).ravel())
        object.__setattr__(self, "gating", Gating(self.gating))
        object.__setattr__(self, "targets", tuple(complex(z) for z in self.targets))
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.targets:
            check_targets(self.targets)

    def gate(self, T):
        if self.gating is Gating.CONSTANT:
            return ConstantGate(T)
        regularised = self.regularised or self.gating is Gating.STATE
        return ImpulseProfile(self.delta, T, regularised=regularised)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def resolved(self, orbit):
        if self.rho is not None:
            return self
        return self.replace(rho=0.1 * orbit.diameter())


def check_targets(targets, tol=1e-12):
    """Validate a target multiplier set; returns the (real) product."""
    z = np.asarray(targets, dtype=complex)
    if len(z) and not np.allclose(np.sort_complex(z), np.sort_complex(z.conj()), atol=1e-12, rtol=1e-12):
        raise ValueError("targets must be closed under complex conjugation")
    prod = np.prod(z)
    if abs(prod.imag) > tol * max(1.0, abs(prod)):
        raise ValueError("product of targets is not real")
    if not prod.real > 0:
        raise DeterminantObstruction(
            f"product of targets is {prod.real:.6g}; the spectrum of A exp(b K^T) has positive determinant"
        )
    return prod.real


def match_spectra(a, b):
    """Optimal one-to-one pairing of two equally long point sets.

    Returns ``(a_sorted, b_matched, distances)`` ordered like ``a``.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    order = np.argsort(rows)
    rows, cols = rows[order], cols[order]
    return a[rows], b[cols], cost[rows, cols]


def controllability(P0, b0):
    """Krylov matrix ``[b0, P0 b0, ..., P0^{n-1} b0]`` and its determinant."""
    P0 = np.atleast_2d(np.asarray(P0, dtype=float))
    b0 = np.asarray(b0, dtype=float).ravel()
    n = P0.shape[0]
    if P0.shape != (n, n) or b0.shape != (n,):
        raise ValueError("dimension mismatch between P0 and b0")
    cols = [b0]
    for _ in range(n - 1):
        cols.append(P0 @ cols[-1])
    M = np.column_stack(cols)
    return M, float(np.linalg.det(M))


def is_controllable(P0, b0, rel=1e-10):
    M, det = controllability(P0, b0)
    scale = np.prod(np.linalg.norm(M, axis=0))
    return abs(det) > rel * scale


def krylov_condition(P0, b0):
    M, _ = controllability(P0, b0)
    return float(np.linalg.cond(M))


def _ackermann(A, B, coeffs):
    # gain F with spec(A - B F) = roots of the monic polynomial ``coeffs``
    n = A.shape[0]
    C, _ = controllability(A, B)
    phi = np.zeros_like(A)
    Ak = np.eye(n)
    for c in coeffs[::-1]:
        phi += c * Ak
        Ak = Ak @ A
    en = np.zeros(n)
    en[-1] = 1.0
    return np.linalg.solve(C.T, en) @ phi


def assign_spectrum_exp(A, b, targets, tol=1e-9, rel_controllable=1e-10):
    """Real ``K`` with ``spec(A exp(b K^T)) = targets``.

    Uses ``exp(b K^T) = I + sigma(c) b K^T`` (``c = K^T b``), which turns the
    problem into rank-one pole placement for the pair ``(A, A b)``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    n = A.shape[0]
    if len(targets) != n:
        raise ValueError(f"need {n} targets, got {len(targets)}")
    target_prod = check_targets(targets)
    detA = np.linalg.det(A)
    if not detA > 0:
        raise DeterminantObstruction(f"det A = {detA:.6g} must be positive")
    if not is_controllable(A, b, rel=rel_controllable):
        raise AssignmentImpossible("assignment impossible: (A, b) is not controllable")

    coeffs = np.poly(np.asarray(targets, dtype=complex))
    if np.max(np.abs(coeffs.imag)) > 1e-9 * np.max(np.abs(coeffs)):
        raise ValueError("targets do not define a real characteristic polynomial")
    L = -_ackermann(A, A @ b, coeffs.real)

    beta = L @ b
    one_plus_beta = 1.0 + beta
    if not one_plus_beta > 0:
        # 1 + beta = prod(targets) / det A up to rounding
        raise IllConditionedAssignment(
            f"1 + L^T b = {one_plus_beta:.3e} (expected {target_prod / detA:.3e})"
        )
    c = np.log(one_plus_beta)
    sig = 1.0 if abs(c) < 1e-12 else np.expm1(c) / c
    K = L / sig

    achieved = np.linalg.eigvals(A @ expm(np.outer(b, K)))
    _, _, dist = match_spectra(np.asarray(targets, dtype=complex), achieved)
    scale = np.maximum(1.0, np.abs(np.asarray(targets)))
    if np.any(dist > tol * scale * max(1.0, np.linalg.norm(A, 2))):
        raise IllConditionedAssignment(
            f"ill-conditioned assignment: max error {dist.max():.3e}", achieved=achieved
        )
    return K


def controllable_subspace(P0, b0, rel=1e-9):
    """Orthonormal basis of the Krylov space of ``(P0, b0)``."""
    M, _ = controllability(P0, b0)
    M = M / np.linalg.norm(M, axis=0)
    U, sv, _ = np.linalg.svd(M)
    r = int(np.sum(sv > rel * sv[0]))
    return U[:, :r]


def design_gains(P0, b0, targets, partial=False, **kw):
    """Gains ``K0`` with ``spec(P0 exp(-b0 K0^T)) = targets``.

    With ``partial=True`` and fewer targets than states, only the multipliers
    on the controllable subspace are moved (one target per dimension of that
    subspace); the remaining multipliers of ``P0`` are kept.
    """
    if not partial or len(targets) == np.shape(P0)[0]:
        return -assign_spectrum_exp(P0, b0, targets, **kw)
    Q = controllable_subspace(P0, b0)
    if Q.shape[1] != len(targets):
        raise ValueError(f"controllable subspace has dimension {Q.shape[1]}, got {len(targets)} targets")
    # the Krylov space is P0-invariant and contains b0, so the restriction is exact
    Kc = assign_spectrum_exp(Q.T @ P0 @ Q, Q.T @ b0, targets, **kw)
    return -(Q @ Kc)


def section_time(x, orbit, variant="linear", maxiter=20, tol=1e-13):
    """Time along the orbit reconstructed from a state near ``x*(0)``.

    ``linear`` projects onto ``xdot*(0)``; ``implicit`` solves
    ``xdot*(0)^T (x - x*(t)) = 0`` for ``t`` near 0 by Newton's method.
    Columns of a 2-D ``x`` are treated as separate states (linear only).
    """
    v = np.asarray(orbit.xdot0, dtype=float)
    x0 = np.asarray(orbit.x0, dtype=float)
    x = np.asarray(x, dtype=float)
    dx = x - (x0[:, None] if x.ndim == 2 else x0)
    t_lin = v @ dx / (v @ v)
    if variant == "linear":
        return t_lin
    if variant != "implicit":
        raise ValueError(f"unknown section variant {variant!r}")
    if x.ndim != 1:
        return np.array([section_time(col, orbit, "implicit", maxiter, tol) for col in x.T])
    t = float(t_lin)
    for _ in range(maxiter):
        g = v @ (x - orbit.x_star(t))
        dg = -v @ orbit.velocity(t)
        if dg == 0:
            break
        step = g / dg
        t -= step
        if abs(step) < tol * max(1.0, abs(t)):
            return t
    raise SectionProjectionFailed(f"section projection failed for x={x}")


def ball_indicator(x, center, rho):
    """Smooth bump: 1 inside radius ``rho``, 0 outside ``2 rho``."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(center, dtype=float)
    d = np.linalg.norm(x - (c[:, None] if x.ndim == 2 else c), axis=0)
    return smoothstep((2.0 * rho - d) / rho)


def state_gate(x, orbit, design: GainDesign, variant="linear"):
    """Autonomous gate ``J_rho(x) Delta_delta(t~(x))`` with regularised ``Delta``."""
    if design.gating is not Gating.STATE:
        raise ValueError("state_gate requires a state-gated design")
    rho = design.resolved(orbit).rho
    prof = ImpulseProfile(design.delta, orbit.T, regularised=True)
    return ball_indicator(x, orbit.x0, rho) * prof(section_time(x, orbit, variant))
