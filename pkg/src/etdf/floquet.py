"""Floquet spectrum of the linearised ETDF closed loop.

Two independent routes are provided:

* :func:`spectrum_char` finds roots of
  ``h(lambda) = det[lambda I - P(1 - eps / (lambda - 1 + eps))]`` by seeded
  Newton iteration;
* :func:`operator_spectrum` assembles a finite-dimensional approximation of
  the time-T map of the delay system and computes its eigenvalues.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .design import ImpulseProfile, match_spectra
from .errors import DegenerateNormalization, DegenerateTrivialMultiplier, PoleProximity
from .ode import RTOL, Linearization, MonodromyFamily, fundamental_matrix, integrate, monodromy_uncontrolled

log = logging.getLogger(__name__)


class MultiplierClass(str, Enum):
    ASSIGNED = "assigned"
    DELAY = "delay_induced"
    TRIVIAL = "trivial"


class Method(str, Enum):
    CHAR_FN = "char_fn"
    OPERATOR = "operator"
    ASYMPTOTIC = "asymptotic"
    CLASSICAL = "classical"


_CLASS_ORDER = {MultiplierClass.TRIVIAL: 0, MultiplierClass.ASSIGNED: 1, MultiplierClass.DELAY: 2}


@dataclass(frozen=True)
class Multiplier:
    value: complex
    cls: MultiplierClass
    residual: float = float("nan")
    index: int | None = None  # ell for delay-induced roots


@dataclass
class FloquetSpectrum:
    multipliers: list
    method: Method
    params: dict = field(default_factory=dict)
    unresolved: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    trivial_tol: float = 1e-6  # how close to 1 the computed trivial multiplier is expected

    @property
    def values(self):
        return np.array([m.value for m in self.multipliers], dtype=complex)

    def of_class(self, cls):
        return np.array([m.value for m in self.multipliers if m.cls == MultiplierClass(cls)], dtype=complex)

    def trivial_index(self, tol=None):
        tol = self.trivial_tol if tol is None else tol
        vals = self.values
        if not len(vals):
            return None
        k = int(np.argmin(np.abs(vals - 1.0)))
        return k if abs(vals[k] - 1.0) <= tol else None

    def nontrivial(self, tol=None):
        tol = self.trivial_tol if tol is None else tol
        k = self.trivial_index(tol)
        return np.delete(self.values, k) if k is not None else self.values

    def max_nontrivial_modulus(self, tol=None):
        tol = self.trivial_tol if tol is None else tol
        rest = self.nontrivial(tol)
        return float(np.max(np.abs(rest))) if len(rest) else 0.0

    def stable(self, tol=None):
        """One multiplier at 1 (within ``tol``) and every other inside the unit circle."""
        tol = self.trivial_tol if tol is None else tol
        vals = self.values
        near_one = np.sum(np.abs(vals - 1.0) <= tol)
        return bool(near_one == 1 and self.max_nontrivial_modulus(tol) < 1.0)


def sigma(mu, c):
    """``(exp(mu c) - 1) / c``, with the limit ``mu`` for vanishing ``c``."""
    if abs(c) < 1e-12:
        return mu
    return np.expm1(mu * c) / c


def mu_of_lambda(lam, epsilon):
    return 1.0 - epsilon / (lam - (1.0 - epsilon))


class CharacteristicFunction:
    """``lambda -> det[lambda I - P(1 - eps/(lambda - (1-eps)); delta, K0)]``."""

    def __init__(self, lin: Linearization, design, tol=RTOL, family=None, mu_bound=None):
        self.lin = lin
        self.design = design
        self.epsilon = design.epsilon
        self.family = family or MonodromyFamily(lin, design.gate(lin.T), design.K0, tol=tol)
        self.mu_bound = mu_bound
        self.n = lin.n

    def __call__(self, lam):
        lam = complex(lam)
        if abs(lam - (1.0 - self.epsilon)) < 1e-8:
            raise PoleProximity(f"lambda = {lam} is within 1e-8 of the pole 1 - eps")
        mu = mu_of_lambda(lam, self.epsilon)
        if self.mu_bound is not None and abs(mu) > self.mu_bound:
            raise ValueError(f"|mu| = {abs(mu):.3g} exceeds bound {self.mu_bound}")
        return complex(np.linalg.det(lam * np.eye(self.n) - self.family(mu)))


def char_fn(lam, lin, design, tol=RTOL):
    return CharacteristicFunction(lin, design, tol=tol)(lam)


@dataclass(frozen=True)
class KappaRoots:
    roots: dict  # ell -> kappa
    c: float
    l_max: float

    @property
    def ells(self):
        return sorted(self.roots)


def kappa_roots(K0, b0, margin=2):
    """Limit roots ``kappa_l = 1 + 2 pi i l / (K0^T b0)`` for seeding."""
    c = float(np.dot(K0, b0))
    if abs(c) < 1e-12:
        return KappaRoots({0: 1.0 + 0j}, c, 0.0)
    l_max = np.sqrt(3.0) / (2 * np.pi) * abs(c)
    L = int(np.floor(l_max)) + margin
    roots = {ell: 1.0 + 2j * np.pi * ell / c for ell in range(-L, L + 1)}
    roots[0] = 1.0 + 0j
    return KappaRoots(roots, c, l_max)


def asymptotic_delay_multipliers(K0, b0, epsilon, margin=0):
    """Small-(eps, delta) limit of the delay-induced multipliers, ordered by ``ell``.

    They lie on the circle of radius ``eps/2`` about ``1 - eps/2``;
    ``ell = 0`` gives exactly 1.
    """
    kr = kappa_roots(K0, b0, margin=margin)
    c = kr.c
    out = []
    for ell in kr.ells:
        if ell == 0:
            out.append(1.0 + 0j)
        else:
            w = 2j * np.pi * ell
            out.append(1.0 - epsilon / 2 + epsilon / 2 * (c - w) / (c + w))
    return np.array(out, dtype=complex)


def _newton(h, lam, maxiter=50, tol=1e-11, fd_rel=1e-6):
    step = np.inf
    for it in range(maxiter):
        s = fd_rel * max(abs(lam), 1e-3)
        d = (h(lam + s) - h(lam - s)) / (2 * s)
        if d == 0 or not np.isfinite(d):
            return None
        step = h(lam) / d
        lam = lam - step
        if not np.isfinite(lam):
            return None
        if abs(step) <= tol * max(1.0, abs(lam)):
            return lam
    # noise-limited convergence still counts if the last step is tiny
    return lam if abs(step) <= 1e-8 * max(1.0, abs(lam)) else None


def scan_seeds(h, epsilon, c1=0.5, n_mod=10, n_arg=64):
    """Local minima of ``|h|`` on the image of ``c1 <= |kappa| <= 2``.

    Diagnostic fallback; uses ``lambda = 1 - eps + eps/kappa``.
    """
    mods = np.linspace(c1, 2.0, n_mod)
    args = np.linspace(-np.pi, np.pi, n_arg, endpoint=False)
    vals = np.full((n_mod, n_arg), np.inf)
    for i, r in enumerate(mods):
        for j, a in enumerate(args):
            lam = 1 - epsilon + epsilon / (r * np.exp(1j * a))
            try:
                vals[i, j] = abs(h(lam))
            except Exception:  # noqa: BLE001 - guarded points simply drop out
                pass
    seeds = []
    for i in range(n_mod):
        for j in range(n_arg):
            nb = [vals[ii, (j + dj) % n_arg] for ii in (i - 1, i, i + 1) if 0 <= ii < n_mod
                  for dj in (-1, 0, 1) if (ii, dj) != (i, 0)]
            if np.isfinite(vals[i, j]) and vals[i, j] <= min(nb):
                seeds.append(1 - epsilon + epsilon / (mods[i] * np.exp(1j * args[j])))
    return seeds


def _classify(value, families):
    # the trivial root is decided by distance to 1 before this is called
    best, best_d = None, np.inf
    for cls in (MultiplierClass.DELAY, MultiplierClass.ASSIGNED):
        pts = families.get(cls)
        if pts is None or not len(pts):
            continue
        d = np.min(np.abs(np.asarray(pts) - value))
        if d < best_d:  # strict: ties stay with the delay-induced family
            best, best_d = cls, d
    return best


def _sorted(mults):
    return sorted(mults, key=lambda m: (_CLASS_ORDER[m.cls], m.index if m.index is not None else 0,
                                        round(m.value.real, 12), round(m.value.imag, 12)))


def _deflated(h, roots):
    def g(lam):
        val = h(lam)
        for r in roots:
            val = val / (lam - r)
        return val
    return g


def spectrum_char(lin, design, tol=RTOL, seed_margin=2, mu_bound=4.0, dedupe=1e-8,
                  newton_tol=1e-11, scan=False, trivial_tol=1e-7):
    """Closed-loop multipliers as roots of the characteristic function.

    Newton is started from the eigenvalues of ``P(1)`` (assigned family), from
    the asymptotic delay-induced multipliers and from 1.  Seeds that land on
    a root already found are retried on the deflated function, as is a pair
    of seeds beside 1 where the ``l = 0`` delay root lives.
    """
    eps = design.epsilon
    h = CharacteristicFunction(lin, design, tol=tol, mu_bound=mu_bound)
    b0 = lin.b(0.0)
    P1 = h.family(1.0)
    assigned_seeds = np.linalg.eigvals(P1)
    kr = kappa_roots(design.K0, b0, margin=seed_margin)
    delay_vals = asymptotic_delay_multipliers(design.K0, b0, eps, margin=seed_margin)
    delay_seeds = [(ell, lam) for ell, lam in zip(kr.ells, delay_vals) if ell != 0]

    seeds = [(MultiplierClass.TRIVIAL, None, 1.0 + 0j)]
    seeds += [(MultiplierClass.ASSIGNED, None, complex(z)) for z in assigned_seeds]
    seeds += [(MultiplierClass.DELAY, ell, complex(z)) for ell, z in delay_seeds]
    if scan:
        seeds += [(MultiplierClass.DELAY, None, complex(z)) for z in scan_seeds(h, eps)]

    families = {
        MultiplierClass.ASSIGNED: list(assigned_seeds),
        MultiplierClass.DELAY: [1.0 + 0j] + [z for _, z in delay_seeds],
    }
    roots, unresolved, warns = [], [], []

    def solve(fun, z):
        try:
            # a diverging iterate may overflow the determinant; it is then dropped
            with np.errstate(over="ignore", invalid="ignore"):
                return _newton(fun, z, tol=newton_tol)
        except (PoleProximity, ValueError, ZeroDivisionError):
            return None

    def known(lam):
        return any(abs(lam - m.value) < dedupe * max(1.0, abs(lam)) for m in roots)

    def add(lam, ell):
        if abs(lam - 1) <= trivial_tol and not any(m.cls is MultiplierClass.TRIVIAL for m in roots):
            klass = MultiplierClass.TRIVIAL
        else:
            klass = _classify(lam, families)
        if klass is MultiplierClass.DELAY and ell is None and abs(lam - 1) < abs(eps) / 2:
            ell = 0
        idx = ell if klass is MultiplierClass.DELAY else None
        roots.append(Multiplier(complex(lam), klass, abs(h(lam)), idx))

    retry = []
    for cls, ell, z in seeds:
        lam = solve(h, z)
        if lam is None:
            unresolved.append((cls.value, z))
            continue
        if known(lam):
            retry.append((ell, z))
            continue
        add(lam, ell)
    retry += [(0, 1.0 + eps / 4), (0, 1.0 - eps / 4)]
    for ell, z in retry:
        if not roots:
            break
        lam = solve(_deflated(h, [m.value for m in roots]), z)
        if lam is None or known(lam) or abs(h(lam)) > 1e-6:
            continue
        lam = solve(h, lam) or lam  # polish on the undeflated function
        if not known(lam):
            add(lam, ell)

    n_assigned = sum(m.cls is MultiplierClass.ASSIGNED for m in roots)
    if n_assigned < sum(abs(z - 1) > trivial_tol for z in assigned_seeds):
        warns.append("possible root coalescence")
        warnings.warn(f"spectrum_char: only {n_assigned} assigned roots found (n = {lin.n}); "
                      "possible root coalescence", RuntimeWarning, stacklevel=2)
    spec = FloquetSpectrum(_sorted(roots), Method.CHAR_FN,
                           params={"epsilon": eps, "delta": design.delta}, unresolved=unresolved,
                           warnings=warns)
    k = spec.trivial_index()
    spec.flags["outside_unit_circle"] = [complex(m.value) for i, m in enumerate(spec.multipliers)
                                         if abs(m.value) >= 1 and (k is None or
                                                                   spec.multipliers[k] is not m)]
    return spec


def _support(gate, T):
    """Contiguous interval ``[s0, s1]`` (``s1 - s0 <= T``) carrying the gate."""
    wins = gate.windows()
    if len(wins) == 2 and wins[0][0] == 0.0 and wins[1][1] == T:
        return wins[1][0] - T, wins[0][1]
    if len(wins) != 1:
        raise ValueError("gate windows must form one interval modulo T")
    return wins[0]


def operator_matrix(lin, design, N=256, tol=RTOL):
    """Matrix of the discretised time-T map.

    State: ``x`` at the start ``s0`` of the gate support and the reference
    signal ``x~`` at ``N`` uniform nodes on the support ``[s0, s1]``,
    piecewise-linearly interpolated.  Values of ``x~`` off the support never
    reach ``x`` and only contribute the eigenvalue ``1 - eps``.
    """
    if N < 2:
        raise ValueError("need at least two nodes")
    n, eps, T = lin.n, design.epsilon, lin.T
    K = design.K0
    gate = design.gate(T)
    s0, s1 = _support(gate, T)
    nodes = np.linspace(s0, s1, N)
    hstep = nodes[1] - nodes[0]
    m = n + n * N

    X = np.zeros((n, m))
    X[:, :n] = np.eye(n)
    x_at_nodes = [X.copy()]
    for j in range(N - 1):
        a, b = nodes[j], nodes[j + 1]

        def rhs(t, y, j=j, a=a):
            Xc = y.reshape(n, m)
            A = lin.A(t)
            g = gate(t)
            bt = lin.b(t)
            w = (t - a) / hstep
            r = np.zeros(m)
            r[n + n * j: n + n * (j + 1)] = (1 - w) * K
            r[n + n * (j + 1): n + n * (j + 2)] = w * K
            return (A @ Xc - g * np.outer(bt, K @ Xc - r)).ravel()

        traj = integrate(rhs, a, b, X.ravel(), tol=tol, breakpoints=gate.breakpoints(a, b))
        X = traj.states[-1].reshape(n, m)
        x_at_nodes.append(X.copy())

    free = fundamental_matrix(lin.A, s1, s0 + T, tol=tol) if s1 < s0 + T else np.eye(n)
    M = np.zeros((m, m))
    M[:n] = free @ X
    for j in range(N):
        rows = slice(n + n * j, n + n * (j + 1))
        M[rows] = eps * x_at_nodes[j]
        M[rows, rows] += (1 - eps) * np.eye(n)
    return M


def operator_spectrum(lin, design, N=256, tol=RTOL, keep_all=False, trivial_tol=None):
    """Eigenvalues of the discretised time-T map of the linear delay system.

    Eigenvalues with modulus below ``(1 - eps)/2`` are discarded as
    discretisation artefacts unless ``keep_all``.
    """
    if N < 32:
        raise ValueError("operator_spectrum needs N >= 32")
    M = operator_matrix(lin, design, N=N, tol=tol)
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigensolver failed (cond = {np.linalg.cond(M):.3e})") from exc
    eps = design.epsilon
    if not keep_all:
        ev = ev[np.abs(ev) >= (1 - eps) / 2]
    if trivial_tol is None:
        # the trivial eigenvalue carries the O(h^2) error of the node mesh
        s0, s1 = _support(design.gate(lin.T), lin.T)
        trivial_tol = max(1e-6, 0.05 * ((s1 - s0) / (N - 1)) ** 2)
    b0 = lin.b(0.0)
    fam = MonodromyFamily(lin, design.gate(lin.T), design.K0, tol=tol)
    families = {
        MultiplierClass.ASSIGNED: list(np.linalg.eigvals(fam(1.0))),
        MultiplierClass.DELAY: list(asymptotic_delay_multipliers(design.K0, b0, eps, margin=2)) + [1 - eps],
    }
    k = int(np.argmin(np.abs(ev - 1.0))) if len(ev) else -1
    mults = [Multiplier(complex(z), MultiplierClass.TRIVIAL if (i == k and abs(z - 1) <= trivial_tol)
                        else _classify(z, families)) for i, z in enumerate(ev)]
    return FloquetSpectrum(_sorted(mults), Method.OPERATOR,
                           params={"epsilon": eps, "delta": design.delta, "N": N},
                           trivial_tol=trivial_tol)


def operator_convergence(lin, design, Ns=(64, 128, 256), threshold=None, tol=RTOL, noise=1e-9):
    """Richardson study of operator eigenvalues above ``threshold`` in modulus.

    Returns a dict with the reference eigenvalues (finest mesh), the values on
    each mesh matched to them, the observed orders
    ``log2 |l(N) - l(2N)| / |l(2N) - l(4N)|`` (NaN where the differences are
    below ``noise``) and Richardson-extrapolated values assuming O(N^-2).
    """
    eps = design.epsilon
    threshold = 1 - eps / 2 if threshold is None else threshold
    spectra = [operator_spectrum(lin, design, N=N, tol=tol).values for N in Ns]
    ref = spectra[-1][np.abs(spectra[-1]) > threshold]
    matched = []
    for vals in spectra:
        idx = [int(np.argmin(np.abs(vals - z))) for z in ref]
        matched.append(vals[idx])
    matched = np.array(matched)
    orders = np.full(len(ref), np.nan)
    if len(Ns) >= 3:
        d1 = np.abs(matched[-3] - matched[-2])
        d2 = np.abs(matched[-2] - matched[-1])
        ok = (d1 > noise) & (d2 > noise)
        orders[ok] = np.log2(d1[ok] / d2[ok])
    extrap = matched[-1] + (matched[-1] - matched[-2]) / 3.0
    return {"Ns": tuple(Ns), "reference": ref, "matched": matched, "orders": orders,
            "extrapolated": extrap}


def classical_spectrum(lin, design, tol=RTOL):
    """Eigenvalues of ``P(1; delta, K0)`` (feedback against the known orbit).

    ``flags['etdf_must_fail']`` is set when one lies outside the unit circle:
    then ETDF with the same gains is unstable for all small ``eps``.
    """
    fam = MonodromyFamily(lin, design.gate(lin.T), design.K0, tol=tol)
    ev = np.linalg.eigvals(fam(1.0))
    mults = [Multiplier(complex(z), MultiplierClass.ASSIGNED) for z in ev]
    spec = FloquetSpectrum(_sorted(mults), Method.CLASSICAL, params={"delta": design.delta})
    spec.flags["etdf_must_fail"] = bool(np.any(np.abs(ev) > 1.0))
    return spec


def asymptotic_spectrum(lin, design, margin=0):
    """Limit spectrum: targets (or ``spec P0 exp(-b0 K0^T)``) plus the circle roots."""
    from scipy.linalg import expm

    b0 = lin.b(0.0)
    if design.targets:
        assigned = np.array(design.targets)
    else:
        P0 = monodromy_uncontrolled(lin)
        assigned = np.linalg.eigvals(P0 @ expm(-np.outer(b0, design.K0)))
    kr = kappa_roots(design.K0, b0, margin=margin)
    delay = asymptotic_delay_multipliers(design.K0, b0, design.epsilon, margin=margin)
    mults = [Multiplier(complex(z), MultiplierClass.ASSIGNED) for z in assigned]
    for ell, z in zip(kr.ells, delay):
        cls = MultiplierClass.TRIVIAL if ell == 0 else MultiplierClass.DELAY
        mults.append(Multiplier(complex(z), cls, index=ell))
    return FloquetSpectrum(_sorted(mults), Method.ASYMPTOTIC,
                           params={"epsilon": design.epsilon, "delta": design.delta})


def adjoint_eigenvector(lin, tol=RTOL, xdot0=None, simple_tol=1e-8):
    """Periodic adjoint solution for the trivial multiplier.

    Solves ``y' = -A(t)^T y`` from the left eigenvector of ``P0`` for the
    eigenvalue nearest 1, normalised so that ``y(0)^T v = 1`` where ``v`` is
    ``xdot0`` (or the right eigenvector of ``P0``).
    """
    P0 = monodromy_uncontrolled(lin, tol=tol)
    evl, W = np.linalg.eig(P0.T)
    k = int(np.argmin(np.abs(evl - 1.0)))
    others = np.delete(evl, k)
    if abs(evl[k] - 1.0) > 1e-6 or (len(others) and np.min(np.abs(others - 1.0)) < simple_tol):
        raise DegenerateTrivialMultiplier("degenerate trivial multiplier")
    w = np.real(W[:, k])
    if xdot0 is None:
        evr, V = np.linalg.eig(P0)
        v = np.real(V[:, int(np.argmin(np.abs(evr - 1.0)))])
    else:
        v = np.asarray(xdot0, dtype=float)
    pair = w @ v
    if abs(pair) < 1e-12:
        raise DegenerateNormalization("adjoint and right eigenvector are orthogonal")
    w = w / pair
    traj = integrate(lambda t, y: -lin.A(t).T @ y, 0.0, lin.T, w, tol=tol)
    T = lin.T
    return lambda t: traj(np.mod(t, T))


def constant_gain_criterion(lin, orbit, K, samples=512, tol=RTOL):
    """Ratio ``int xbar^T b K^T xdot dt / int xbar^T xdot dt`` over one period.

    For an orbit with an odd number of multipliers in ``Re z > 1``, constant
    gains can only stabilise for small ``eps`` if the ratio is ``<= 0``.
    """
    K = np.asarray(K, dtype=float)
    T = orbit.T
    xbar = adjoint_eigenvector(lin, tol=tol, xdot0=orbit.xdot0)
    t = np.linspace(0.0, T, samples, endpoint=False)
    Y = xbar(t)
    V = orbit.velocity(t)
    B = np.array([lin.b(s) for s in t]).T
    num = np.mean(np.sum(Y * B, axis=0) * (K @ V)) * T
    den = np.mean(np.sum(Y * V, axis=0)) * T
    if abs(den) < 1e-12:
        raise DegenerateNormalization("degenerate normalization of the adjoint pairing")
    return float(num / den)


def delta_limit_error(lin, design, mu=1.0, tol=RTOL):
    """``||P(mu; delta, K0) - P0 exp(-mu b0 K0^T)||_2``."""
    from scipy.linalg import expm

    P0 = monodromy_uncontrolled(lin, tol=tol)
    fam = MonodromyFamily(lin, design.gate(lin.T), design.K0, tol=tol)
    limit = P0 @ expm(-mu * np.outer(lin.b(0.0), design.K0))
    return float(np.linalg.norm(fam(mu) - limit, 2))
