"""Command-line interface.

Subcommands: equilibrate, deform, analyze, audit-gradients, demo-honeycomb,
export-geometry.  Failures print one JSON object on stderr and exit with a
code that identifies the failing stage (see ``EXIT_CODES``).  Log verbosity
comes from the ``AUXTENS_LOG`` environment variable.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import DEFAULT_LAG, analyze
from .differentiation import EvaluationFailure, audit_system
from .framework import Framework, Lattice, Placement, supercell
from .homotopy import TrackingError
from .io import (
    TraceFormatError,
    TraceWriter,
    atomic_open,
    read_state,
    read_trace,
    state_dict,
    write_json,
    write_plot_csv,
    write_report,
)
from .pipeline import DeformationError, deform, equilibrate
from .riemannian import DescentFailure, MaxIters, SingularVariety
from .scene import SceneError, load_bundled, resolve_scene

log = logging.getLogger("auxetic_tensegrity")

EXIT_CODES = {
    "ok": 0,
    "internal": 1,
    "usage": 2,
    "scene": 3,
    "tracking": 4,
    "descent": 5,
    "trace-format": 6,
    "audit": 7,
}


class CliFailure(Exception):
    def __init__(self, kind: str, message: str, **details):
        super().__init__(message)
        self.kind = kind
        self.details = details


def _configure_logging() -> None:
    level = os.environ.get("AUXTENS_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _load_scene(spec: str):
    try:
        return resolve_scene(spec)
    except SceneError as exc:
        raise CliFailure("scene", str(exc), issues=[str(i) for i in exc.issues]) from exc
    except (FileNotFoundError, KeyError) as exc:
        raise CliFailure("scene", f"cannot load scene {spec!r}: {exc}") from exc


def _equilibrium(scene, tau, state_path=None):
    system = scene.system()
    settings = scene.settings()
    x0 = None
    if state_path:
        state = read_state(state_path)
        if len(state["x"]) != system.n:
            raise CliFailure("scene", f"state has {len(state['x'])} internals, scene has {system.n}")
        x0 = np.asarray(state["x"])
        tau = state["tau"] if tau is None else tau
    try:
        return system, equilibrate(system, tau, x0, settings)
    except (DescentFailure, MaxIters, SingularVariety) as exc:
        raise CliFailure("descent", str(exc)) from exc
    except TrackingError as exc:
        raise CliFailure("descent", f"equilibrium polish failed: {exc}") from exc


# --------------------------------------------------------------------------
# subcommands


def cmd_equilibrate(args) -> int:
    scene = _load_scene(args.scene)
    system, eq = _equilibrium(scene, args.tau, args.state)
    write_json(args.out, state_dict(system, eq, scene.name))
    print(json.dumps({"tau": eq.tau, "energy": eq.energy, "projected_gradient": eq.projected_gradient,
                      "residual_norm": eq.residual_norm, "iterations": eq.descent_iterations}))
    return 0


def _deformation_args(scene, args):
    spec = dict(scene.deformation)
    out = {}
    for key in ("tau_start", "tau_end", "step"):
        val = getattr(args, key)
        if val is None:
            val = spec.get(key)
        if val is None:
            raise CliFailure("usage", f"--{key.replace('_', '-')} is required (the scene has no default)")
        out[key] = float(val)
    return out


def cmd_deform(args) -> int:
    scene = _load_scene(args.scene)
    grid = _deformation_args(scene, args)
    system, eq = _equilibrium(scene, args.tau, args.state)
    meta = {"scene": scene.name, "scene_digest": scene.digest(), **grid}
    writer = TraceWriter(args.out, system.model.framework.graph.labels, scene.dim, meta)
    started = time.perf_counter()
    try:
        trace = deform(system, grid["tau_start"], grid["tau_end"], grid["step"], scene.settings(),
                       equilibrium=eq, on_step=writer.write, metadata=meta)
    except DeformationError as exc:
        raise CliFailure("tracking", str(exc), last_stable_tau=exc.last_tau, rows_written=writer.rows,
                         trace=str(args.out)) from exc
    finally:
        writer.close()
    print(json.dumps({"steps": len(trace), "tau_first": trace.steps[0].tau, "tau_last": trace.steps[-1].tau,
                      "seconds": round(time.perf_counter() - started, 3), "trace": str(args.out)}))
    return 0


def cmd_analyze(args) -> int:
    try:
        trace = read_trace(args.trace)
    except TraceFormatError as exc:
        raise CliFailure("trace-format", str(exc)) from exc
    except FileNotFoundError as exc:
        raise CliFailure("trace-format", f"cannot read trace: {exc}") from exc
    try:
        report = analyze(trace, args.lag)
    except ValueError as exc:
        raise CliFailure("trace-format", f"trace cannot be analysed: {exc}") from exc
    out = Path(args.out)
    write_report(out, report)
    plot_csv = Path(args.plot_data) if args.plot_data else out.with_name(out.stem + "_plot.csv")
    write_plot_csv(plot_csv, report)
    figures = []
    if not args.no_figures:
        from .plotting import report_figures

        figures = [str(p) for p in report_figures(trace, report, out.parent, out.stem)]
    print(json.dumps({"verdicts": report.verdicts(), "summary": report.summary(), "report": str(out),
                      "plot_data": str(plot_csv), "figures": figures}))
    return 0


def cmd_audit(args) -> int:
    scene = _load_scene(args.scene)
    system = scene.system()
    try:
        reports = audit_system(system, samples=args.samples, seed=args.seed, second_order=args.second_order)
    except EvaluationFailure as exc:
        raise CliFailure("audit", str(exc)) from exc
    rows = [{"map": r.name, "max_error": r.max_error, "worst_entry": list(r.worst_entry),
             "passed": r.passed(args.tol)} for r in reports]
    result = {"scene": scene.name, "samples": args.samples, "tolerance": args.tol, "maps": rows,
              "passed": all(r["passed"] for r in rows)}
    if args.out:
        write_json(args.out, result)
    print(json.dumps(result))
    if not result["passed"]:
        raise CliFailure("audit", "gradient audit failed", maps=[r for r in rows if not r["passed"]])
    return 0


def honeycomb_verdict(report) -> str:
    """Split the fixed-lag norms at tau = 1 into the two regimes."""
    norms = report.norms
    low = norms[norms[:, 1] <= 1.0 + 1e-12]
    high = norms[norms[:, 0] > 1.0 + 1e-12]
    parts = []
    if low.size:
        parts.append(("auxetic" if np.all(low[:, 2] < 1) else "non-auxetic") + " on (0.5,1]")
    if high.size:
        parts.append(("non-auxetic" if np.all(high[:, 2] > 1) else "auxetic") + " on (1,1.5)")
    return ", ".join(parts)


def cmd_demo_honeycomb(args) -> int:
    scene = load_bundled("honeycomb")
    grid = _deformation_args(scene, args)
    system, eq = _equilibrium(scene, None)
    try:
        trace = deform(system, grid["tau_start"], grid["tau_end"], grid["step"], scene.settings(), equilibrium=eq,
                       metadata={"scene": "honeycomb"})
    except DeformationError as exc:
        raise CliFailure("tracking", str(exc), last_stable_tau=exc.last_tau) from exc
    report = analyze(trace, args.lag)
    print(honeycomb_verdict(report))
    if args.out_dir:
        from .io import write_trace
        from .plotting import report_figures

        out = Path(args.out_dir)
        write_trace(out / "honeycomb_trace.csv", trace)
        write_report(out / "honeycomb_report.json", report)
        write_plot_csv(out / "honeycomb_report_plot.csv", report)
        report_figures(trace, report, out, "honeycomb_report")
    return 0


def _frame_segments(fw: Framework, reps):
    cell = supercell(fw, reps)
    return cell.segments, cell.kinds


def cmd_export_geometry(args) -> int:
    scene = _load_scene(args.scene)
    try:
        trace = read_trace(args.trace)
    except TraceFormatError as exc:
        raise CliFailure("trace-format", str(exc)) from exc
    fw = scene.model().framework
    if tuple(fw.graph.labels) != tuple(trace.labels):
        raise CliFailure("trace-format", "trace vertex labels do not match the scene")
    reps = tuple(args.reps) if args.reps else (1,) * fw.dim
    if len(reps) != fw.dim:
        raise CliFailure("usage", f"--reps needs {fw.dim} integers")
    steps = trace.steps[:: max(1, args.every)]
    with atomic_open(args.out) as fh:
        w = csv.writer(fh)
        axes = "xyz"[: fw.dim]
        w.writerow(["step", "tau", "segment", "kind", *[f"{a}1" for a in axes], *[f"{a}2" for a in axes]])
        for k, st in enumerate(steps):
            frame = Framework(fw.graph, Placement(st.coords), Lattice(st.lattice), dict(fw.images))
            segs, kinds = _frame_segments(frame, reps)
            for j, (seg, kind) in enumerate(zip(segs, kinds)):
                w.writerow([k, repr(float(st.tau)), j, kind, *map(repr, seg[0].tolist()), *map(repr, seg[1].tolist())])
    if args.png:
        from .plotting import plot_segments

        out = Path(args.out)
        for k in (0, len(steps) - 1):
            st = steps[k]
            frame = Framework(fw.graph, Placement(st.coords), Lattice(st.lattice), dict(fw.images))
            segs, kinds = _frame_segments(frame, reps)
            axes_pair = (1, 2) if fw.dim == 3 else (0, 1)
            plot_segments(segs, kinds, out.with_name(f"{out.stem}_step{k}.png"), axes_pair)
    print(json.dumps({"frames": len(steps), "out": str(args.out)}))
    return 0


# --------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(json.dumps({"error": "usage", "message": message, "exit_code": 2}) + "\n")
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="auxtens", description="Quasistatic deformation and auxeticity analysis of periodic tensegrities.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("equilibrate", help="energy minimum at fixed tau")
    s.add_argument("--scene", required=True, help="scene file or bundled scene name")
    s.add_argument("--tau", type=float, help="control value (default: from the scene lattice)")
    s.add_argument("--state", help="start from a saved state file")
    s.add_argument("--out", required=True, help="state JSON to write")
    s.set_defaults(func=cmd_equilibrate)

    s = sub.add_parser("deform", help="track the equilibrium over a tau grid")
    s.add_argument("--scene", required=True)
    s.add_argument("--tau-start", dest="tau_start", type=float)
    s.add_argument("--tau-end", dest="tau_end", type=float)
    s.add_argument("--step", type=float)
    s.add_argument("--tau", type=float, help="equilibrate here before tracking (default: scene lattice)")
    s.add_argument("--state", help="start from a saved state file")
    s.add_argument("--out", required=True, help="trace CSV to write")
    s.set_defaults(func=cmd_deform)

    s = sub.add_parser("analyze", help="Poisson ratios, operator norms and certificates of a trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--lag", type=float, default=DEFAULT_LAG)
    s.add_argument("--out", required=True, help="report JSON to write")
    s.add_argument("--plot-data", dest="plot_data", help="plot CSV (default: <out>_plot.csv)")
    s.add_argument("--no-figures", dest="no_figures", action="store_true", help="skip the PNG figures")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("audit-gradients", help="finite-difference audit of all derivatives")
    s.add_argument("--scene", required=True)
    s.add_argument("--samples", type=int, default=100)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--second-order", dest="second_order", action="store_true",
                   help="also audit the energy Hessian and the Lagrangian Jacobian")
    s.add_argument("--out")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("demo-honeycomb", help="deform and analyse the honeycomb")
    s.add_argument("--tau-start", dest="tau_start", type=float)
    s.add_argument("--tau-end", dest="tau_end", type=float)
    s.add_argument("--step", type=float)
    s.add_argument("--lag", type=float, default=DEFAULT_LAG)
    s.add_argument("--out-dir", dest="out_dir", help="also write trace, report and figures here")
    s.set_defaults(func=cmd_demo_honeycomb)

    s = sub.add_parser("export-geometry", help="per-step line segments of a trace")
    s.add_argument("--scene", required=True)
    s.add_argument("--trace", required=True)
    s.add_argument("--out", required=True, help="segment CSV to write")
    s.add_argument("--reps", type=int, nargs="+", help="cells per lattice direction")
    s.add_argument("--every", type=int, default=1, help="keep every k-th step")
    s.add_argument("--png", action="store_true", help="also draw the first and last frame")
    s.set_defaults(func=cmd_export_geometry)
    return p


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliFailure as exc:
        code = EXIT_CODES[exc.kind]
        sys.stderr.write(json.dumps({"error": exc.kind, "message": str(exc), "exit_code": code, **exc.details},
                                    default=str) + "\n")
        return code
    except Exception as exc:  # last resort: still machine-readable
        log.debug("unhandled error", exc_info=True)
        sys.stderr.write(json.dumps({"error": "internal", "message": f"{type(exc).__name__}: {exc}",
                                     "exit_code": 1}) + "\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
