"""Run configuration: YAML schema, defaults, flag overrides and provenance hash.

A configuration is a nested mapping with the sections ``model``, ``design``,
``spectrum``, ``simulate``, ``sweep``, ``tolerances`` and ``output``.  Missing
keys take the values in :data:`DEFAULTS`; unknown keys are rejected.
"""
from __future__ import annotations

import copy
import hashlib
import json
import re
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError

DEFAULTS = {
    "model": {
        "name": "hopf",  # hopf | pendulum | expression
        "params": {"p": -0.25},
        "equations": None,  # expression models only
        "orbit": {"T_guess": None, "x_guess": None},  # shooting seed; pendulum has its own
    },
    "design": {
        "targets": ["0+0.5i", "0-0.5i"],
        "gains": None,  # explicit K0, bypasses the assignment
        "epsilon": 0.04,
        "delta": "T/500",
        "rho": None,  # None: 10 % of the orbit diameter
        "gating": "state",
        "regularised": True,
    },
    "spectrum": {
        "methods": ["char_fn", "operator", "asymptotic"],
        "mesh": 256,
        "mu_bound": 4.0,
    },
    "simulate": {
        "n_periods": 500,
        "perturbation": 1e-3,
        "memory": "orbit",  # orbit | same
        "history_mesh": 400,
        "samples_per_period": 64,
        "tol": 1e-11,
    },
    "sweep": {
        "p": None,  # list, or {start, stop, num}
        "epsilon": None,
        "delta": None,
        "method": "operator",  # operator | char_fn | none
        "mesh": 64,
    },
    "tolerances": {"rtol": 1e-10, "atol": 1e-12},
    "output": {"dir": "etdf_out", "format": "csv"},
}

MODELS = ("hopf", "pendulum", "expression")
GATINGS = ("time", "state", "constant")
METHODS = ("char_fn", "operator", "asymptotic")
FORMATS = ("csv", "json")


def parse_complex(text):
    """``"0+0.5i"``, ``"-0.5i"``, ``"0.2"`` or a number -> complex."""
    if isinstance(text, (int, float, complex)) and not isinstance(text, bool):
        return complex(text)
    s = str(text).strip().replace(" ", "").replace("I", "j").replace("i", "j")
    try:
        return complex(s)
    except ValueError:
        raise ConfigError(f"cannot parse target {text!r} as a complex number") from None


def parse_targets(text):
    if isinstance(text, str):
        items = [t for t in text.split(",") if t.strip()]
    else:
        items = list(text)
    return [parse_complex(t) for t in items]


def parse_delta(value, T):
    """Impulse width: a number, or ``"T/<k>"`` relative to the period."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    m = re.fullmatch(r"\s*T\s*/\s*([0-9.eE+]+)\s*", str(value))
    if m:
        return T / float(m.group(1))
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"delta must be a number or 'T/<k>', got {value!r}") from None


def grid(spec):
    """Sweep grid from a list or ``{start, stop, num}``; ``None`` means not swept."""
    if spec is None:
        return None
    if isinstance(spec, dict):
        try:
            return [float(v) for v in np.linspace(float(spec["start"]), float(spec["stop"]), int(spec["num"]))]
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"grid needs start, stop and num: {spec!r}") from None
    if isinstance(spec, (list, tuple)):
        return list(spec)
    raise ConfigError(f"cannot interpret grid {spec!r}")


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict) and key not in ("params", "orbit"):
            if not isinstance(val, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], val, where)
        elif isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            merged = dict(base[key]) if key == "orbit" else {}
            merged.update(val)
            out[key] = merged
        else:
            out[key] = val
    return out


def packaged_config(name):
    """Path-like handle of a configuration shipped with the package."""
    fname = name if name.endswith(".yaml") else name + ".yaml"
    ref = resources.files("etdf") / "configs" / fname
    if not ref.is_file():
        raise ConfigError(f"no packaged configuration named {name!r}")
    return ref


def list_packaged():
    root = resources.files("etdf") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load(path=None):
    """Read a YAML file (or a packaged config by name) merged over the defaults."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    p = Path(path)
    if p.is_file():
        text = p.read_text()
    else:
        text = packaged_config(str(path)).read_text()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("configuration file must contain a mapping")
    # a file that does not name a model keeps the default model, but not its parameters
    base = copy.deepcopy(DEFAULTS)
    if "model" in data and "name" in data["model"] and data["model"]["name"] != "hopf":
        base["model"]["params"] = {}
    return _merge(base, data)


def apply_overrides(cfg, args):
    """Command-line flags win over file values."""
    cfg = copy.deepcopy(cfg)
    if getattr(args, "model", None):
        if args.model != cfg["model"]["name"]:
            cfg["model"]["params"] = {}
        cfg["model"]["name"] = args.model
    if getattr(args, "p", None) is not None:
        cfg["model"]["params"]["p"] = args.p
    if getattr(args, "targets", None):
        cfg["design"]["targets"] = [t.strip() for t in args.targets.split(",") if t.strip()]
        cfg["design"]["gains"] = None
    for key in ("epsilon", "rho", "gating"):
        val = getattr(args, key, None)
        if val is not None:
            cfg["design"][key] = val
    if getattr(args, "delta", None) is not None:
        cfg["design"]["delta"] = args.delta
    if getattr(args, "mesh", None) is not None:
        cfg["spectrum"]["mesh"] = args.mesh
        cfg["sweep"]["mesh"] = args.mesh
    if getattr(args, "out", None):
        cfg["output"]["dir"] = args.out
    if getattr(args, "format", None):
        cfg["output"]["format"] = args.format
    return cfg


def validate(cfg):
    """Type and range checks that do not need the model."""
    m, d = cfg["model"], cfg["design"]
    if m["name"] not in MODELS:
        raise ConfigError(f"model.name must be one of {MODELS}, got {m['name']!r}")
    if m["name"] == "hopf":
        if "p" not in m["params"]:
            raise ConfigError("hopf model needs params.p")
        _number(m["params"]["p"], "model.params.p")
    if m["name"] == "expression":
        eqs = m["equations"]
        if not isinstance(eqs, list) or not eqs or not all(isinstance(e, str) for e in eqs):
            raise ConfigError("expression model needs a non-empty list of equations")
        o = m["orbit"]
        if o.get("T_guess") is None or o.get("x_guess") is None:
            raise ConfigError("expression model needs orbit.T_guess and orbit.x_guess")
        if len(o["x_guess"]) != len(eqs):
            raise ConfigError("orbit.x_guess length differs from the number of equations")
    if d["gains"] is None:
        parse_targets(d["targets"])
    else:
        if not isinstance(d["gains"], list):
            raise ConfigError("design.gains must be a list of numbers")
        for g in d["gains"]:
            _number(g, "design.gains")
    eps = _number(d["epsilon"], "design.epsilon")
    if not 0 < eps < 1:
        raise ConfigError("design.epsilon must lie in (0, 1)")
    if d["rho"] is not None and not _number(d["rho"], "design.rho") > 0:
        raise ConfigError("design.rho must be positive")
    if d["gating"] not in GATINGS:
        raise ConfigError(f"design.gating must be one of {GATINGS}")
    parse_delta(d["delta"], 1.0)
    s = cfg["spectrum"]
    bad = set(s["methods"]) - set(METHODS)
    if bad:
        raise ConfigError(f"unknown spectrum methods {sorted(bad)}")
    if int(s["mesh"]) < 32:
        raise ConfigError("spectrum.mesh must be at least 32")
    sim = cfg["simulate"]
    if int(sim["history_mesh"]) < 200:
        raise ConfigError("simulate.history_mesh must be at least 200")
    if sim["memory"] not in ("orbit", "same"):
        raise ConfigError("simulate.memory must be 'orbit' or 'same'")
    if int(sim["n_periods"]) < 1:
        raise ConfigError("simulate.n_periods must be positive")
    sw = cfg["sweep"]
    for key in ("p", "epsilon", "delta"):
        grid(sw[key])
    if sw["method"] not in ("operator", "char_fn", "none"):
        raise ConfigError("sweep.method must be operator, char_fn or none")
    if cfg["output"]["format"] not in FORMATS:
        raise ConfigError(f"output.format must be one of {FORMATS}")
    return cfg


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number, got {v!r}")
    return float(v)


def canonical(cfg):
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(cfg):
    """Short SHA-256 of the resolved configuration.

    The output directory is left out: it does not change any result.
    """
    cfg = copy.deepcopy(cfg)
    cfg.get("output", {}).pop("dir", None)
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()[:16]
