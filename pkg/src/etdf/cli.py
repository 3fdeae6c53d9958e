"""Command-line entry point ``etdf``.

Usage::

    etdf design   --p -0.25 --targets 0+0.5i,0-0.5i
    etdf spectrum --config hopf_benchmark
    etdf simulate --config hopf_benchmark --out run1
    etdf sweep    --config hopf_gain_sweep --format json
    etdf verify

Exit codes: 0 success (a negative scientific verdict is still a success),
1 acceptance failure in ``verify``, 2 invalid configuration or impossible
design, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from . import pipeline
from .errors import (
    AssignmentImpossible,
    ConfigError,
    DeterminantObstruction,
    ETDFError,
    NoPeriodicOrbit,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
CONFIG_ERRORS = (ConfigError, AssignmentImpossible, DeterminantObstruction, NoPeriodicOrbit)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else "%.15e" % v
    return str(v)


def write_csv(path, columns, rows, chash):
    """RFC-4180 table with a trailing ``config_hash`` column."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(list(columns) + ["config_hash"])
        for row in rows:
            w.writerow([_fmt(row.get(c)) for c in columns] + [chash])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    return obj


def write_json(path, payload, cfg):
    body = {"config_hash": cfgmod.config_hash(cfg), "config": cfg, **payload}
    Path(path).write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n")


def _outdir(cfg):
    d = Path(cfg["output"]["dir"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _table(cfg, name, columns, rows, extra=None):
    """Write ``name.csv`` (or ``name.json``) according to the output format."""
    out = _outdir(cfg)
    if cfg["output"]["format"] == "csv":
        path = out / f"{name}.csv"
        write_csv(path, columns, rows, cfgmod.config_hash(cfg))
    else:
        path = out / f"{name}.json"
        write_json(path, {"columns": list(columns), "rows": [[r.get(c) for c in columns] for r in rows],
                          **(extra or {})}, cfg)
    return path


# subcommands

def cmd_design(cfg, args):
    st = pipeline.setup(cfg)
    rep = st.report
    write_json(_outdir(cfg) / "design.json", {"design": rep}, cfg)
    print("K0 =", " ".join(f"{k:.8f}" for k in rep["K0"]))
    print(f"T = {rep['T']:.10f}  delta = {rep['delta']:.6g}  epsilon = {rep['epsilon']:g}  gating = {rep['gating']}")
    print(f"controllability det = {rep['controllability_det']:.6g}  Krylov condition = {rep['krylov_condition']:.3g}")
    print("achieved spectrum:", ", ".join(f"{z:.6g}" for z in rep["achieved"]))
    if "max_residual" in rep:
        print(f"max assignment residual = {rep['max_residual']:.2e}")
    return EXIT_OK


def cmd_spectrum(cfg, args):
    st = pipeline.setup(cfg)
    spectra, verdict = pipeline.run_spectrum(st)
    rows = []
    for name, sp in spectra.items():
        for m in sp.multipliers:
            rows.append({"method": name, "class": m.cls.value, "index": m.index, "re": m.value.real,
                         "im": m.value.imag, "modulus": abs(m.value), "residual": m.residual})
    cols = ["method", "class", "index", "re", "im", "modulus", "residual"]
    path = _table(cfg, "spectrum", cols, rows)
    write_json(_outdir(cfg) / "verdict.json", {"verdict": verdict, "design": st.report}, cfg)
    for name, sp in spectra.items():
        print(f"{name}: {len(sp.multipliers)} multipliers, max nontrivial modulus "
              f"{sp.max_nontrivial_modulus():.6f}")
        for w in sp.warnings:
            print(f"  warning: {w}")
    for note in verdict["notes"]:
        print(f"note: {note}")
    if verdict["source"]:
        word = "stable" if verdict["stable"] else "unstable"
        print(f"verdict ({verdict['source']}): {word}, max nontrivial modulus {verdict['max_nontrivial_modulus']:.6f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(cfg, args):
    st = pipeline.setup(cfg)
    res = pipeline.run_simulation(st)
    dg = res.diagnostics
    n = res.x.shape[1]
    cols = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"xtilde{i + 1}" for i in range(n)] + ["u"]
    rows = []
    for k in range(len(res.t)):
        r = {"t": res.t[k], "u": res.u[k]}
        for i in range(n):
            r[f"x{i + 1}"] = res.x[k, i]
            r[f"xtilde{i + 1}"] = res.xtilde[k, i]
        rows.append(r)
    traj = _table(cfg, "trajectory", cols, rows)
    per = [{"period": k, "max_u": dg.max_u[k], "distance": dg.distance[k], "phase": dg.phase[k],
            "fidelity": dg.fidelity[k] if k < len(dg.fidelity) else np.nan} for k in range(dg.n_periods)]
    _table(cfg, "periods", ["period", "max_u", "distance", "phase", "fidelity"], per)
    write_json(_outdir(cfg) / "diagnostics.json", {"diagnostics": dg.to_dict(), "design": st.report}, cfg)
    print(f"{dg.n_periods} periods simulated")
    if dg.n_periods:
        print(f"max|u| first {dg.max_u[0]:.3e}, last {dg.max_u[-1]:.3e}; distance last {dg.distance[-1]:.3e}")
    print(f"decay rate per period {dg.decay_rate:.5f}, converged: {dg.converged}")
    for msg in dg.messages:
        print(f"note: {msg}")
    print(f"wrote {traj}")
    return EXIT_OK


def _workers():
    env = os.environ.get("ETDF_NUM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ETDF_NUM_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _sweep_task(job):
    cfg, point = job
    return pipeline.sweep_point(cfg, point)


def cmd_sweep(cfg, args):
    points = pipeline.sweep_points(cfg)
    cols = pipeline.sweep_columns(cfg)
    workers = min(_workers(), max(1, len(points)))
    jobs = [(cfg, pt) for pt in points]
    if workers == 1 or len(points) < 2:
        rows = [_sweep_task(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_task, jobs))  # map keeps grid order
    path = _table(cfg, "sweep", cols, rows)
    bad = sum(1 for r in rows if r.get("error"))
    print(f"{len(rows)} grid points, {bad} with errors; wrote {path}")
    return EXIT_OK


def cmd_verify(cfg, args):
    from . import acceptance

    numbers = [int(s) for s in args.criteria.split(",")] if args.criteria else None
    results = acceptance.run(numbers)
    payload = {"criteria": [{"number": r.number, "title": r.title, "passed": r.passed, "summary": r.summary,
                             "seconds": r.seconds, "details": r.details} for r in results]}
    write_json(_outdir(cfg) / "verify.json", payload, cfg)
    n_ok = sum(r.passed for r in results)
    print(f"{n_ok}/{len(results)} criteria passed")
    return EXIT_OK if n_ok == len(results) else EXIT_FAIL


COMMANDS = {"design": cmd_design, "spectrum": cmd_spectrum, "simulate": cmd_simulate,
            "sweep": cmd_sweep, "verify": cmd_verify}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file or packaged config name")
    common.add_argument("--model", choices=cfgmod.MODELS)
    common.add_argument("--p", type=float, help="Hopf parameter")
    common.add_argument("--targets", help="comma-separated targets, e.g. 0+0.5i,0-0.5i")
    common.add_argument("--epsilon", type=float)
    common.add_argument("--delta", help="impulse width: number or T/<k>")
    common.add_argument("--rho", type=float, help="state-gate radius")
    common.add_argument("--gating", choices=cfgmod.GATINGS)
    common.add_argument("--mesh", type=int, help="operator mesh size")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=cfgmod.FORMATS)

    ap = argparse.ArgumentParser(prog="etdf", description="Extended time-delayed feedback with impulse gains.")
    ap.add_argument("--version", action="version", version=f"etdf {__version__}")
    ap.add_argument("--list-configs", action="store_true", help="list packaged configurations and exit")
    sub = ap.add_subparsers(dest="command")
    sub.add_parser("design", parents=[common], help="assign the spectrum and report gains")
    sub.add_parser("spectrum", parents=[common], help="Floquet spectrum of the closed loop")
    sub.add_parser("simulate", parents=[common], help="nonlinear simulation from a perturbed history")
    sub.add_parser("sweep", parents=[common], help="parameter sweep (p, epsilon, delta)")
    v = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    v.add_argument("--criteria", help="comma-separated subset, e.g. 1,2,8")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.list_configs:
        print("\n".join(cfgmod.list_packaged()))
        return EXIT_OK
    if not args.command:
        ap.print_help()
        return EXIT_CONFIG
    try:
        cfg = cfgmod.apply_overrides(cfgmod.load(args.config), args)
        cfgmod.validate(cfg)
        return COMMANDS[args.command](cfg, args)
    except CONFIG_ERRORS as exc:
        print(f"etdf: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ETDFError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"etdf: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"etdf: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
