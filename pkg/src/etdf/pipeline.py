"""Orchestration shared by the command line, the acceptance suite and the demos.

Everything here works on a resolved configuration mapping (see
:mod:`etdf.config`) and returns plain data.
"""
from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import config as cfgmod
from .design import (
    GainDesign,
    Gating,
    controllability,
    controllable_subspace,
    design_gains,
    is_controllable,
    match_spectra,
)
from .errors import AssignmentImpossible, ConfigError, ETDFError
from .floquet import (
    MultiplierClass,
    asymptotic_spectrum,
    operator_spectrum,
    spectrum_char,
)
from .models import (
    PENDULUM_SEED,
    expression_system,
    find_orbit_shooting,
    hopf_system,
    linearize_along_orbit,
    pendulum_system,
)
from .ode import monodromy_uncontrolled
from .simulate import HistoryState, simulate


@dataclass
class Setup:
    cfg: dict
    system: object
    orbit: object
    lin: object
    P0: np.ndarray
    design: GainDesign
    report: dict = field(default_factory=dict)

    @property
    def b0(self):
        return self.lin.b(0.0)


def build_model(cfg):
    """``(system, orbit, linearisation)`` for the configured model."""
    m = cfg["model"]
    tol = cfg["tolerances"]
    if m["name"] == "hopf":
        p = float(m["params"]["p"])
        if p == 0:
            raise AssignmentImpossible("uncontrollable at Hopf point (p = 0): the orbit collapses and P0 = I")
        return hopf_system(p)
    if m["name"] == "pendulum":
        system = pendulum_system(m["params"])
        seed_T = m["orbit"].get("T_guess") or PENDULUM_SEED["T"]
        seed_x = m["orbit"].get("x_guess") or PENDULUM_SEED["x"]
    else:
        system = expression_system(m["equations"], m["params"])
        seed_T, seed_x = m["orbit"]["T_guess"], m["orbit"]["x_guess"]
    orbit = find_orbit_shooting(system, float(seed_T), np.asarray(seed_x, dtype=float),
                                int_tol=min(1e-12, tol["rtol"]))
    return system, orbit, linearize_along_orbit(system, orbit)


def build_design(cfg, orbit, lin, P0):
    """Gain design from targets (or explicit gains) and the gate parameters."""
    d = cfg["design"]
    n = lin.n
    b0 = lin.b(0.0)
    T = orbit.T
    delta = cfgmod.parse_delta(d["delta"], T)
    targets = ()
    if d["gains"] is not None:
        K0 = np.asarray(d["gains"], dtype=float)
        if K0.shape != (n,):
            raise ConfigError(f"design.gains needs {n} entries, got {K0.size}")
    else:
        tg = cfgmod.parse_targets(d["targets"])
        if len(tg) > n or not tg:
            raise ConfigError(f"need between 1 and {n} targets, got {len(tg)}")
        if not is_controllable(P0, b0):
            r = controllable_subspace(P0, b0).shape[1]
            if len(tg) != r:
                raise AssignmentImpossible(
                    f"assignment impossible: (P0, b0) is not controllable; the controllable "
                    f"subspace has dimension {r}, so give {r} targets")
        elif len(tg) != n:
            raise ConfigError(f"(P0, b0) is controllable: give {n} targets")
        K0 = design_gains(P0, b0, tg, partial=len(tg) < n)
        targets = tuple(tg) if len(tg) == n else ()
    design = GainDesign(K0, delta, float(d["epsilon"]), rho=d["rho"], targets=targets,
                        gating=Gating(d["gating"]), regularised=bool(d["regularised"]))
    return design.resolved(orbit)


def design_report(P0, b0, K0, targets):
    M, det = controllability(P0, b0)
    achieved = np.linalg.eigvals(P0 @ expm(-np.outer(b0, K0)))
    rep = {
        "controllability_det": det,
        "krylov_condition": float(np.linalg.cond(M)),
        "K0": [float(k) for k in K0],
        "achieved": [complex(z) for z in np.sort_complex(achieved)],
    }
    if targets:
        tg, ach, dist = match_spectra(np.asarray(targets, dtype=complex), achieved)
        rep["targets"] = [complex(z) for z in tg]
        rep["residuals"] = [float(x) for x in dist]
        rep["max_residual"] = float(dist.max())
    return rep


def setup(cfg):
    cfgmod.validate(cfg)
    system, orbit, lin = build_model(cfg)
    P0 = monodromy_uncontrolled(lin, tol=cfg["tolerances"]["rtol"])
    design = build_design(cfg, orbit, lin, P0)
    targets = cfgmod.parse_targets(cfg["design"]["targets"]) if cfg["design"]["gains"] is None else ()
    rep = design_report(P0, lin.b(0.0), design.K0, targets)
    rep.update({"T": orbit.T, "delta": design.delta, "epsilon": design.epsilon, "rho": design.rho,
                "gating": design.gating.value})
    return Setup(cfg, system, orbit, lin, P0, design, rep)


def run_spectrum(st: Setup, methods=None, mesh=None):
    """Spectra by the requested methods plus a stability verdict.

    The verdict comes from the characteristic function for impulse gates and
    from the operator discretisation for constant gains, where the root
    seeding of the characteristic function does not apply.
    """
    sc = st.cfg["spectrum"]
    methods = list(methods or sc["methods"])
    mesh = int(mesh or sc["mesh"])
    tol = st.cfg["tolerances"]["rtol"]
    notes = []
    if st.design.gating is Gating.CONSTANT:
        for m in ("char_fn", "asymptotic"):
            if m in methods:
                methods.remove(m)
                notes.append(f"{m} skipped for constant gains")
        if "operator" not in methods:
            methods.append("operator")
    out = {}
    for m in methods:
        if m == "char_fn":
            out[m] = spectrum_char(st.lin, st.design, tol=tol, mu_bound=float(sc["mu_bound"]))
        elif m == "operator":
            out[m] = operator_spectrum(st.lin, st.design, N=mesh, tol=tol)
        elif m == "asymptotic":
            out[m] = asymptotic_spectrum(st.lin, st.design, margin=0)
    source = "char_fn" if "char_fn" in out else ("operator" if "operator" in out else None)
    verdict = {"source": source, "notes": notes}
    if source:
        sp = out[source]
        verdict.update({"stable": sp.stable(), "max_nontrivial_modulus": sp.max_nontrivial_modulus()})
        verdict["warnings"] = list(sp.warnings)
        verdict["unresolved"] = [[c, [z.real, z.imag]] for c, z in sp.unresolved]
    return out, verdict


def run_simulation(st: Setup):
    s = st.cfg["simulate"]
    init = HistoryState.perturbed(st.orbit, float(s["perturbation"]), N=int(s["history_mesh"]),
                                  memory=s["memory"])
    return simulate(st.system, st.orbit, st.design, init, int(s["n_periods"]), tol=float(s["tol"]),
                    samples_per_period=int(s["samples_per_period"]))


def sweep_points(cfg):
    """Grid points in deterministic order (p outermost, then epsilon, then delta)."""
    sw = cfg["sweep"]
    axes = []
    for key in ("p", "epsilon", "delta"):
        g = cfgmod.grid(sw[key])
        if g is not None:
            if key == "p" and cfg["model"]["name"] != "hopf":
                raise ConfigError("a p sweep needs the hopf model")
            axes.append([(key, v) for v in g])
    if not axes:
        return []
    return [dict(combo) for combo in itertools.product(*axes)]


def model_dim(cfg):
    m = cfg["model"]
    return {"hopf": 2, "pendulum": 4}.get(m["name"]) or len(m["equations"])


def sweep_columns(cfg):
    n = model_dim(cfg)
    return (["p", "epsilon", "delta"] + [f"K{i + 1}" for i in range(n)]
            + ["gain_norm", "stable", "max_nontrivial_modulus", "delay_radius", "error"])


def sweep_point(cfg, point):
    """One sweep row; failures are recorded, not raised."""
    c = cfgmod.validate(_with_point(cfg, point))
    row = {"p": c["model"]["params"].get("p", np.nan), "epsilon": c["design"]["epsilon"],
           "delta": np.nan, "error": ""}
    try:
        st = setup(c)
        row["delta"] = st.design.delta
        for i, k in enumerate(st.design.K0):
            row[f"K{i + 1}"] = float(k)
        row["gain_norm"] = float(np.linalg.norm(st.design.K0))
        method = c["sweep"]["method"]
        if method != "none":
            if method == "operator" or st.design.gating is Gating.CONSTANT:
                sp = operator_spectrum(st.lin, st.design, N=int(c["sweep"]["mesh"]),
                                       tol=c["tolerances"]["rtol"])
            else:
                sp = spectrum_char(st.lin, st.design, tol=c["tolerances"]["rtol"],
                                   mu_bound=float(c["spectrum"]["mu_bound"]))
            row["stable"] = sp.stable()
            row["max_nontrivial_modulus"] = sp.max_nontrivial_modulus()
            row["delay_radius"] = _delay_radius(sp, st.design.epsilon)
    except ETDFError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    except (ValueError, np.linalg.LinAlgError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _delay_radius(sp, eps):
    """Distance of the leading delay-induced multiplier from ``1 - eps/2``."""
    vals = [m.value for m in sp.multipliers
            if m.cls is MultiplierClass.DELAY and abs(m.value - (1 - eps)) > 1e-6]
    if not vals:
        return np.nan
    lead = max(vals, key=abs)
    return float(abs(lead - (1 - eps / 2)))


def _with_point(cfg, point):
    c = copy.deepcopy(cfg)
    if "p" in point:
        c["model"]["params"]["p"] = float(point["p"])
    if "epsilon" in point:
        c["design"]["epsilon"] = float(point["epsilon"])
    if "delta" in point:
        c["design"]["delta"] = point["delta"]
    return c
