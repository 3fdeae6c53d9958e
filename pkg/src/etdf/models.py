"""Benchmark systems, periodic orbits and their linearisations."""
from __future__ import annotations

import ast
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp

from .errors import ConfigError, IntegrationError, NoPeriodicOrbit, OrbitNotFound
from .ode import Linearization, integrate

FD_STEP = 1e-6


def _fd_jac_x(f, x, u, h=FD_STEP):
    x = np.asarray(x, dtype=float)
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h * max(1.0, abs(x[j]))
        J[:, j] = (f(x + e, u) - f(x - e, u)) / (2 * e[j])
    return J


def _fd_jac_u(f, x, u, h=FD_STEP):
    e = h * max(1.0, abs(u))
    return (np.asarray(f(x, u + e)) - np.asarray(f(x, u - e))) / (2 * e)


@dataclass(frozen=True, eq=False)
class ControlledSystem:
    """Scalar-input plant ``x' = f(x, u)``.

    ``f`` must broadcast: ``x`` of shape ``(n,)`` or ``(n, m)`` with ``u``
    scalar or of shape ``(m,)``.  Missing Jacobians fall back to central
    differences.
    """

    n: int
    f: Callable
    df_dx: Callable | None = None
    df_du: Callable | None = None
    name: str = "system"
    params: dict = field(default_factory=dict)

    def rhs(self, x, u=0.0):
        return np.asarray(self.f(x, u), dtype=float)

    def jac_x(self, x, u=0.0):
        if self.df_dx is not None:
            return np.asarray(self.df_dx(np.asarray(x, dtype=float), u), dtype=float)
        return _fd_jac_x(self.rhs, x, u)

    def jac_u(self, x, u=0.0):
        if self.df_du is not None:
            return np.asarray(self.df_du(np.asarray(x, dtype=float), u), dtype=float).reshape(self.n)
        return _fd_jac_u(self.rhs, x, u)

    def jacobian_mismatch(self, x, u=0.0):
        """Largest deviation between analytic and finite-difference Jacobians."""
        dx = 0.0 if self.df_dx is None else np.max(np.abs(self.jac_x(x, u) - _fd_jac_x(self.rhs, x, u)))
        du = 0.0 if self.df_du is None else np.max(np.abs(self.jac_u(x, u) - _fd_jac_u(self.rhs, x, u)))
        return max(dx, du)


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    """T-periodic solution ``x*(t)`` of the uncontrolled system.

    ``x_star`` and ``velocity_fn`` are evaluated at ``t mod T``.
    """

    T: float
    x_star_fn: Callable
    velocity_fn: Callable
    source: str = "analytic"
    monodromy: np.ndarray | None = None

    def x_star(self, t):
        return np.asarray(self.x_star_fn(np.mod(t, self.T)), dtype=float)

    def velocity(self, t):
        return np.asarray(self.velocity_fn(np.mod(t, self.T)), dtype=float)

    @property
    def x0(self):
        return self.x_star(0.0)

    @property
    def xdot0(self):
        return self.velocity(0.0)

    @property
    def n(self):
        return self.x0.size

    def diameter(self, samples=512):
        pts = self.x_star(np.linspace(0.0, self.T, samples, endpoint=False))
        d = np.linalg.norm(pts[:, :, None] - pts[:, None, :], axis=0)
        return float(d.max())

    def shifted(self, s):
        """The same orbit re-anchored at ``x*(s)``."""
        return PeriodicOrbit(self.T, lambda t: self.x_star_fn(np.mod(t + s, self.T)),
                             lambda t: self.velocity_fn(np.mod(t + s, self.T)), self.source)


# Hopf normal form with constant rotation speed and input direction b = (1, 1)

def hopf_rhs(p):
    def f(x, u):
        x1, x2 = x[0], x[1]
        R = x1 * x1 + x2 * x2
        return np.array([p * x1 - x2 + x1 * R + u, x1 + p * x2 + x2 * R + u])
    return f


def hopf_system(p):
    """Subcritical Hopf normal form: system, analytic orbit and linearisation."""
    if not p < 0:
        raise NoPeriodicOrbit(f"no periodic orbit for p = {p} (need p < 0)")
    f = hopf_rhs(p)

    def df_dx(x, u):
        x1, x2 = x[0], x[1]
        R = x1 * x1 + x2 * x2
        return np.array([[p + R + 2 * x1 * x1, -1 + 2 * x1 * x2],
                         [1 + 2 * x1 * x2, p + R + 2 * x2 * x2]])

    def df_du(x, u):
        return np.array([1.0, 1.0])

    system = ControlledSystem(2, f, df_dx, df_du, name="hopf", params={"p": p})
    r = np.sqrt(-p)
    orbit = PeriodicOrbit(
        2 * np.pi,
        lambda t: np.array([r * np.sin(t), -r * np.cos(t)]),
        lambda t: np.array([r * np.cos(t), r * np.sin(t)]),
        source="analytic",
        monodromy=hopf_monodromy(p),
    )

    def A(t):
        s, c = np.sin(t), np.cos(t)
        return np.array([[2 * r * r * s * s, -1 - 2 * r * r * s * c],
                         [1 - 2 * r * r * s * c, 2 * r * r * c * c]])

    lin = Linearization(2 * np.pi, A, lambda t: np.array([1.0, 1.0]))
    return system, orbit, lin


def hopf_monodromy(p):
    """Closed-form ``P0 = diag(1, exp(-4 pi p))`` at the anchor ``(0, -r)``."""
    return np.diag([1.0, np.exp(-4 * np.pi * p)])


# Parametrically excited pendulum with an appended phase oscillator

PENDULUM_DEFAULTS = {"gamma": 0.1, "a": 0.6, "Omega": 1.7, "omega0": 1.0, "k_osc": 1.0}
# seed for the unstable period-2 orbit at the defaults (repo-defined values)
PENDULUM_SEED = {"x": [0.044, -0.287, 1.0, 0.0], "T": 4 * np.pi / 1.7}


def pendulum_system(params=None):
    """Pendulum with vertically oscillating pivot, made autonomous.

    States ``(theta, omega, c, s)``; ``(c, s)`` is a phase oscillator with an
    attracting unit circle and frequency ``Omega`` that replaces
    ``cos(Omega t)``.  The scalar input is a torque.
    """
    pr = dict(PENDULUM_DEFAULTS)
    pr.update(params or {})
    g, a, W, w0, k = pr["gamma"], pr["a"], pr["Omega"], pr["omega0"], pr["k_osc"]

    def f(x, u):
        th, om, c, s = x[0], x[1], x[2], x[3]
        q = 1.0 - c * c - s * s
        return np.array([
            om,
            -g * om - w0 * w0 * (1.0 + a * c) * np.sin(th) + u,
            -W * s + k * c * q,
            W * c + k * s * q,
        ])

    def df_dx(x, u):
        th, om, c, s = x
        q = 1.0 - c * c - s * s
        return np.array([
            [0.0, 1.0, 0.0, 0.0],
            [-w0 * w0 * (1 + a * c) * np.cos(th), -g, -w0 * w0 * a * np.sin(th), 0.0],
            [0.0, 0.0, k * (q - 2 * c * c), -W - 2 * k * c * s],
            [0.0, 0.0, W - 2 * k * c * s, k * (q - 2 * s * s)],
        ])

    def df_du(x, u):
        return np.array([0.0, 1.0, 0.0, 0.0])

    return ControlledSystem(4, f, df_dx, df_du, name="pendulum", params=pr)


# Systems defined by arithmetic expressions

_ALLOWED_FUNCS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp}
_ALLOWED_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Add, ast.Sub, ast.Mult, ast.Div,
                  ast.Pow, ast.USub, ast.UAdd, ast.Call, ast.Name, ast.Load, ast.Constant)


def _parse_expression(text, symbols):
    src = text.replace("^", "**")
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(f"disallowed syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_FUNCS or node.keywords:
                raise ConfigError(f"only sin, cos, exp calls are allowed in {text!r}")
        elif isinstance(node, ast.Name) and node.id not in symbols and node.id not in _ALLOWED_FUNCS:
            raise ConfigError(f"unknown symbol {node.id!r} in {text!r}")
        elif isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"non-numeric literal in {text!r}")

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant):
            return sp.Float(node.value) if isinstance(node.value, float) else sp.Integer(node.value)
        if isinstance(node, ast.Name):
            return symbols[node.id]
        if isinstance(node, ast.UnaryOp):
            v = build(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call):
            return _ALLOWED_FUNCS[node.func.id](*[build(a) for a in node.args])
        left, right = build(node.left), build(node.right)
        op = type(node.op)
        if op is ast.Add:
            return left + right
        if op is ast.Sub:
            return left - right
        if op is ast.Mult:
            return left * right
        if op is ast.Div:
            return left / right
        return left ** right

    return build(tree)


def expression_system(equations, params=None, name="expr"):
    """System from strings in ``x1..xn``, ``u`` and named parameters.

    Time dependence has to be expressed through appended states.
    """
    n = len(equations)
    xs = sp.symbols(" ".join(f"x{i + 1}" for i in range(n)), real=True)
    xs = xs if isinstance(xs, tuple) else (xs,)
    u = sp.Symbol("u", real=True)
    params = dict(params or {})
    symbols = {f"x{i + 1}": xs[i] for i in range(n)}
    symbols["u"] = u
    for key, val in params.items():
        if key in symbols or key in _ALLOWED_FUNCS:
            raise ConfigError(f"parameter name {key!r} clashes with a reserved symbol")
        symbols[key] = sp.Float(val)
    exprs = [_parse_expression(e, symbols) for e in equations]
    jx = sp.Matrix(exprs).jacobian(xs)
    ju = sp.Matrix(exprs).diff(u)
    f_l = sp.lambdify((xs, u), exprs, "numpy")
    jx_l = sp.lambdify((xs, u), jx, "numpy")
    ju_l = sp.lambdify((xs, u), ju, "numpy")

    def f(x, uu):
        x = np.asarray(x, dtype=float)
        vals = f_l(tuple(x), uu)
        shape = np.broadcast(*[np.asarray(v) for v in vals], x[0], np.asarray(uu)).shape
        return np.array([np.broadcast_to(v, shape) for v in vals], dtype=float)

    def df_dx(x, uu):
        return np.asarray(jx_l(tuple(x), uu), dtype=float)

    def df_du(x, uu):
        return np.asarray(ju_l(tuple(x), uu), dtype=float).ravel()

    return ControlledSystem(n, f, df_dx, df_du, name=name, params=params)


# Orbits and linearisations

def _flow_with_variational(system, x0, T, tol):
    n = system.n

    def rhs(t, y):
        x = y[:n]
        Phi = y[n:].reshape(n, n)
        return np.concatenate([system.rhs(x, 0.0), (system.jac_x(x, 0.0) @ Phi).ravel()])

    traj = integrate(rhs, 0.0, T, np.concatenate([x0, np.eye(n).ravel()]), tol=tol, atol=tol * 1e-2)
    yT = traj.states[-1]
    return yT[:n], yT[n:].reshape(n, n)


def find_orbit_shooting(system, T_guess, x_guess, tol=1e-10, maxiter=50, int_tol=1e-12):
    """Periodic orbit by Newton shooting with the period as an unknown.

    The phase is fixed by ``f(x_guess)^T (x0 - x_guess) = 0``.
    """
    n = system.n
    x_ref = np.asarray(x_guess, dtype=float).copy()
    v_ref = system.rhs(x_ref, 0.0)
    if np.linalg.norm(v_ref) < 1e-10 * max(1.0, np.linalg.norm(x_ref)):
        raise OrbitNotFound("orbit not found: singular phase condition (seed is an equilibrium)")
    x, T = x_ref.copy(), float(T_guess)

    def residual(x, T):
        xT, Phi = _flow_with_variational(system, x, T, int_tol)
        return np.concatenate([xT - x, [v_ref @ (x - x_ref)]]), xT, Phi

    try:
        F, xT, Phi = residual(x, T)
    except IntegrationError as exc:
        raise OrbitNotFound(f"orbit not found: flow from the seed fails ({exc})") from None
    for _ in range(maxiter):
        if np.linalg.norm(F) <= tol:
            break
        J = np.zeros((n + 1, n + 1))
        J[:n, :n] = Phi - np.eye(n)
        J[:n, n] = system.rhs(xT, 0.0)
        J[n, :n] = v_ref
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise OrbitNotFound("orbit not found: singular shooting Jacobian") from None
        # backtracking on the residual norm
        lam = 1.0
        while True:
            Tn = T + lam * step[n]
            ok = False
            if Tn > 0:
                try:
                    Fn, xTn, Phin = residual(x + lam * step[:n], Tn)
                    ok = True
                except IntegrationError:
                    # a long trial step can leave the basin and blow up in finite time
                    pass
                if ok and (np.linalg.norm(Fn) < (1 - 0.25 * lam) * np.linalg.norm(F) or lam < 1e-3):
                    break
            if not ok and lam < 1e-3:
                raise OrbitNotFound("orbit not found: Newton steps keep leaving the integrable region")
            lam *= 0.5
        x, T, F, xT, Phi = x + lam * step[:n], Tn, Fn, xTn, Phin
    if np.linalg.norm(F) > tol:
        raise OrbitNotFound(f"orbit not found: residual {np.linalg.norm(F):.3e} after {maxiter} iterations")

    traj = integrate(lambda t, y: system.rhs(y, 0.0), 0.0, T, x, tol=int_tol, atol=int_tol * 1e-2)
    return PeriodicOrbit(
        T,
        lambda t: traj(t),
        lambda t: system.rhs(traj(t), 0.0),
        source="shooting",
        monodromy=Phi,
    )


def linearize_along_orbit(system, orbit):
    """``A(t) = d_x f(x*(t), 0)`` and ``b(t) = d_u f(x*(t), 0)``."""
    return Linearization(
        orbit.T,
        lambda t: system.jac_x(orbit.x_star(t), 0.0),
        lambda t: system.jac_u(orbit.x_star(t), 0.0),
        n=system.n,
    )
