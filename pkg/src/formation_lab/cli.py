"""Command-line driver: ``formation-lab {validate,weights,certify,simulate,export} SCENARIO``.

Scenario arguments are file paths or names of bundled fixtures
(``paper_2d``, ``orientation_3d`` ...). Failures print a JSON object with the
error category on stderr and exit with that category's code.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import FormationError, SchemaError
from .laplacian import hermitian_extremes, xi_bound
from .scenario_io import bundled_path, load_scenario
from .sim import SimTrace, collision_certificate, integrate

log = logging.getLogger("formation_lab")

CSV_COLUMNS_2D = ("t", "agent", "x", "y", "x_star", "y_star", "err")
CSV_COLUMNS_3D = ("t", "agent", "x", "y", "z", "x_star", "y_star", "z_star", "err")
IO_ERROR_EXIT = 11


def _resolve(name: str) -> Path:
    p = Path(name)
    if p.is_file():
        return p
    if p.suffix in ("", ".scn") and os.sep not in name:
        return bundled_path(name)
    raise SchemaError(f"scenario file not found: {name}", field="scenario")


def _load(args, name: str):
    return load_scenario(_resolve(name), strict=True if args.strict else None, dt=args.dt, T=args.horizon,
                         record_stride=args.record_stride)


def _c(z) -> list:
    return [float(np.real(z)), float(np.imag(z))]


def _cmat(A) -> list:
    A = np.asarray(A)
    if np.iscomplexobj(A):
        return [[_c(z) for z in row] for row in A]
    return A.tolist()


# --------------------------------------------------------------------------
# subcommands; each returns a JSON-serializable result or writes a file
# --------------------------------------------------------------------------

def cmd_validate(args, name):
    sc = _load(args, name)
    return sc.report.as_dict()


def cmd_weights(args, name):
    sc = _load(args, name)
    out = []
    for idx, b in enumerate({id(b): b for b in sc.blocks}.values()):
        lo, hi = hermitian_extremes(b.D_ff)
        entry = {
            "plane": b.plane,
            "weights": {str(i): [_c(w.ij), _c(w.ik)] for i, w in b.weights.items()},
            "W_fl": _cmat(b.W_fl), "W_ff": _cmat(b.W_ff),
            "D_ff": _cmat(b.D_ff), "D_fl": _cmat(b.D_fl),
            "D_ff_eigen_range": [lo, hi],
            "cond_Wff": b.cond_Wff,
        }
        if b.has_axis:
            entry.update({"axis_weights": {str(i): [w.ij, w.ik] for i, w in b.axis_weights.items()},
                          "M_fl": _cmat(b.M_fl), "M_ff": _cmat(b.M_ff), "cond_Mff": b.cond_Mff})
        out.append(entry)
    return {"name": sc.name, "blocks": out}


def cmd_certify(args, name):
    sc = _load(args, name)
    rep = collision_certificate(sc)
    xi = max(xi_bound(b) for b in sc.blocks)
    return {
        "name": sc.name,
        "xi": xi,
        "delta": sc.delta,
        "alpha2": sc.gains.alpha2,
        "alpha2_min": sc.alpha2_min,
        "gain_certified": sc.gains.alpha2 >= sc.alpha2_min,
        "psi": [{"agent": i + 1, "psi": float(p)} for i, p in enumerate(rep.psi)],
        "collision": rep.as_dict(),
    }


def trace_rows(trace: SimTrace):
    """Long-format rows (one per agent per sample) in the documented column order."""
    X, Y, err = trace.world, trace.world_targets, trace.agent_errors
    for k, t in enumerate(trace.times):
        for i in range(X.shape[1]):
            yield (float(t), i + 1, *map(float, X[k, i]), *map(float, Y[k, i]), float(err[k, i]))


def write_csv(trace: SimTrace, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS_2D if trace.dimension == 2 else CSV_COLUMNS_3D)
    for row in trace_rows(trace):
        w.writerow([row[0].__repr__(), row[1], *(repr(v) for v in row[2:])])


def trace_to_json(trace: SimTrace) -> dict:
    d = {"dimension": trace.dimension, "m": trace.m, "times": trace.times.tolist(),
         "states": trace.world.tolist(), "targets": trace.world_targets.tolist(),
         "lyapunov": trace.lyapunov.tolist(), "min_dist": trace.min_dist.tolist(),
         "phase_index": trace.phase_index.tolist(), "e_F_norm": trace.e_F_norm().tolist()}
    return d


def trace_from_json(d: dict) -> SimTrace:
    try:
        dim = int(d["dimension"])
        states = np.array(d["states"], dtype=float)
        targets = np.array(d["targets"], dtype=float)
        if dim == 2:
            states = states[..., 0] + 1j * states[..., 1]
            targets = targets[..., 0] + 1j * targets[..., 1]
        K = len(d["times"])
        return SimTrace(dim, int(d["m"]), np.array(d["times"], dtype=float), states, targets,
                        e_L=np.zeros((K, 0)), e_F=np.zeros((K, 0)), lyapunov=np.array(d["lyapunov"]),
                        min_dist=np.array(d["min_dist"]), phase_index=np.array(d["phase_index"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed trace document: {exc}", field="trace") from None


def cmd_simulate(args, name):
    sc = _load(args, name)
    trace = integrate(sc, validate=False)
    final = trace.agent_errors[-1]
    summary = {"name": sc.name, "samples": len(trace), "t_end": float(trace.times[-1]),
               "final_agent_errors": final.tolist(), "final_e_F_norm": float(trace.e_F_norm()[-1]),
               "min_pairwise_distance": float(trace.min_dist.min())}
    out = args.output
    if out:
        out = Path(out) if len(args.scenario) == 1 else Path(out) / f"{sc.name}{_ext(args.output)}"
        if out.suffix == ".csv":
            with open(out, "w", newline="", encoding="utf-8") as fh:
                write_csv(trace, fh)
        else:
            out.write_text(json.dumps(trace_to_json(trace)), encoding="utf-8")
        summary["output"] = str(out)
    return summary


def _ext(path: str) -> str:
    return ".csv" if str(path).endswith(".csv") else ".json"


def cmd_export(args, name):
    try:
        d = json.loads(Path(name).read_text(encoding="utf-8"))
    except OSError as exc:
        raise _IOFailure(f"cannot read {name}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON at line {exc.lineno}: {exc.msg}", field=f"line {exc.lineno}") from None
    trace = trace_from_json(d)
    if args.output:
        with open(args.output, "w", newline="", encoding="utf-8") as fh:
            write_csv(trace, fh)
        return {"output": args.output, "rows": len(trace) * trace.states.shape[1]}
    buf = io.StringIO()
    write_csv(trace, buf)
    sys.stdout.write(buf.getvalue())
    return None


class _IOFailure(FormationError):
    category = "io-error"
    exit_code = IO_ERROR_EXIT


COMMANDS = {"validate": cmd_validate, "weights": cmd_weights, "certify": cmd_certify,
            "simulate": cmd_simulate, "export": cmd_export}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="formation-lab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("scenario", nargs="+", help="scenario file or bundled name (export: trace JSON)")
    p.add_argument("-o", "--output", help="output file (a directory when several scenarios are given)")
    p.add_argument("--strict", action="store_true", help="fail when alpha2 is below the certified bound")
    p.add_argument("--dt", type=float, help="override the integration step")
    p.add_argument("--horizon", type=float, help="override the simulated horizon T")
    p.add_argument("--record-stride", type=int, help="record every N steps")
    p.add_argument("--jobs", type=int, default=1, help="run several scenarios in parallel")
    return p


def _run_one(args, name):
    """Result dict or error dict for one scenario (top-level so it pickles)."""
    try:
        return 0, COMMANDS[args.command](args, name)
    except FormationError as exc:
        return exc.exit_code, {"error": exc.as_dict(), "scenario": name}
    except OSError as exc:
        return IO_ERROR_EXIT, {"error": {"category": "io-error", "message": str(exc)}, "scenario": name}


def _setup_logging():
    level = os.environ.get("FORMATION_LAB_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "export" and len(args.scenario) != 1:
        print(json.dumps({"error": {"category": "usage", "message": "export takes one trace"}}), file=sys.stderr)
        return 2
    if len(args.scenario) > 1 and args.output:
        Path(args.output).mkdir(parents=True, exist_ok=True)
    if args.jobs > 1 and len(args.scenario) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_run_one, [args] * len(args.scenario), args.scenario))
    else:
        results = [_run_one(args, s) for s in args.scenario]
    status = 0
    for code, res in results:
        if code:
            print(json.dumps(res), file=sys.stderr)
            status = status or code
        elif res is not None:
            print(json.dumps(res, indent=2))
    return status


if __name__ == "__main__":
    sys.exit(main())
