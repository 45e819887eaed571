"""Command line entry point: ``viscodelam {simulate,sweep,verify,mesh-check}``.

Exit codes: 0 success, 1 verification failure, 2 usage or I/O error,
3 solver nonconvergence.  Errors are reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__, energy
from .config import ConfigError, load_config
from .mesh import MeshError, read_mesh, validate
from .momentum import ConvergenceError
from .output import (write_bonding_vtk, write_displacement_vtk, write_final_state,
                     write_manifest)
from .stepper import StaggerError, run
from .sweep import run_sweep
from .delamination import BisectionError

log = logging.getLogger("viscodelam")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _report("usage", message)
        self.exit(EXIT_USAGE)


def _report(kind: str, message, **extra) -> None:
    errors = message if isinstance(message, list) else [str(message)]
    print(json.dumps({"error": kind, "messages": errors, **extra}), file=sys.stderr)


def _eps_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="viscodelam", description="Adhesive contact of a viscoelastic body.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--threads", type=int, default=None,
                   help="BLAS/LAPACK thread count (1 is the determinism baseline)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run one trajectory")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (overrides the config)")
    s.add_argument("--eps", type=float, help="override eps")
    s.add_argument("--retry", type=int, default=0, metavar="K",
                   help="on nonconvergence, halve dt and retry up to K times")

    w = sub.add_parser("sweep", help="continuation in eps")
    w.add_argument("--config", required=True)
    w.add_argument("--eps", type=_eps_list, required=True, help="e.g. 1e-1,1e-2,1e-3")
    w.add_argument("--out")

    v = sub.add_parser("verify", help="run the built-in property suites")
    v.add_argument("--suite", action="append", choices=("graphs", "assembly", "energy"))

    m = sub.add_parser("mesh-check", help="validate a mesh file")
    m.add_argument("file")
    for sp in (s, w, v, m):
        sp.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    return p


def _simulate(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output)
    eps = args.eps if args.eps is not None else cfg.eps
    sc = cfg.scenario()
    ops, trace, init = sc.build()
    dt = cfg.dt
    for attempt in range(args.retry + 1):
        scfg = cfg.stagger_config(eps=eps, dt=dt)
        try:
            traj = run(init, scfg, ops, trace, sc.load, sc.mat)
            break
        except (StaggerError, ConvergenceError, BisectionError) as exc:
            if attempt == args.retry:
                raise
            log.warning("attempt %d with dt=%g failed (%s); halving dt", attempt + 1, dt, exc)
            dt = dt / 2
    out.mkdir(parents=True, exist_ok=True)
    files = []
    energy.write_csv(traj.reports, out / "energy.csv")
    files.append(out / "energy.csv")
    snap = out / "snapshots"
    snap.mkdir(exist_ok=True)
    every = max(cfg.snapshot_every, 1)
    last = len(traj.states) - 1
    for i, s in enumerate(traj.states):
        if i % every and i != last:
            continue
        files.append(write_displacement_vtk(snap / f"u_{i:05d}.vtk", cfg.mesh, s.u, s.v, s.t))
        if trace is not None and s.bonding is not None:
            files.append(write_bonding_vtk(snap / f"z_{i:05d}.vtk", cfg.mesh, trace,
                                           s.bonding, s.t))
    files.append(write_final_state(out / "final_state.json", traj.final))
    write_manifest(out, files, {"command": "simulate", "eps": eps, "dt": dt, "T": cfg.T,
                                "steps": last, "version": __version__,
                                "config": cfg.raw})
    print(f"{last} steps, final t={traj.final.t:.6g}, output in {out}")
    return EXIT_OK


def _sweep(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output)
    try:
        report = run_sweep(cfg.scenario(), args.eps, cfg.stagger_config(eps=args.eps[0]),
                           keep_states=True)
    except ValueError as exc:
        _report("usage", str(exc))
        return EXIT_USAGE
    files = report.write(out)
    write_manifest(out, files, {"command": "sweep", "eps": args.eps, "dt": cfg.dt,
                                "T": cfg.T, "version": __version__, "config": cfg.raw,
                                "error": report.error})
    for row in report.rows:
        print("eps={:.0e} max_un_pos={:.3e} max_neg_z={:.3e} max_pos_rate={:.3e}".format(
            row.eps, row.max_un_pos, row.max_neg_z, row.max_pos_rate))
    if report.error:
        _report("nonconvergence", report.error)
        return EXIT_SOLVER
    return EXIT_OK


def _verify(args) -> int:
    from .verify import run_all

    results = run_all(args.suite)
    for r in results:
        print(r.line())
    failed = [r.line() for r in results if not r.passed]
    if failed:
        _report("verification", failed)
        return EXIT_VERIFY
    return EXIT_OK


def _mesh_check(args) -> int:
    try:
        mesh = read_mesh(args.file)
    except FileNotFoundError:
        _report("io", f"mesh file not found: {args.file}", path=args.file)
        return EXIT_USAGE
    rep = validate(mesh)
    if not rep.ok:
        _report("verification", rep.summary(), failures=sorted(rep.failures))
        return EXIT_VERIFY
    print(f"ok: {mesh.n_nodes} nodes, {len(mesh.cells)} cells, {len(mesh.facets)} facets")
    return EXIT_OK


COMMANDS = {"simulate": _simulate, "sweep": _sweep, "verify": _verify,
            "mesh-check": _mesh_check}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limits = threadpool_limits(args.threads) if args.threads else nullcontext()
    try:
        with limits:
            return COMMANDS[args.command](args)
    except ConfigError as exc:
        missing = [e for e in exc.errors if "not found" in e]
        _report("io" if missing else "config", exc.errors)
        return EXIT_USAGE
    except MeshError as exc:
        _report("io", str(exc))
        return EXIT_USAGE
    except OSError as exc:
        _report("io", f"{exc.strerror}: {exc.filename}", path=exc.filename)
        return EXIT_USAGE
    except (StaggerError, ConvergenceError, BisectionError) as exc:
        extra = {"step": getattr(exc, "step_index", None)}
        _report("nonconvergence", str(exc), **extra)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
