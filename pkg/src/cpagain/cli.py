"""Command-line entry point: analyze, verify, export, mesh."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_IO, EXIT_INFEASIBLE, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("cpagain")


def _err(msg: str) -> None:
    print(f"cpagain: {msg}", file=sys.stderr)


def _parse_box(text: str) -> list:
    try:
        box = [[float(a) for a in part.split(":")] for part in text.split(",")]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad box {text!r}: {err}") from err
    if any(len(b) != 2 for b in box):
        raise argparse.ArgumentTypeError(f"box {text!r} must look like 'lo:hi,lo:hi'")
    return box


def _parse_ints(text: str) -> list:
    try:
        return [int(k) for k in text.split(",")]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from err


def _parse_floats(text: str) -> list:
    try:
        return [float(k) for k in text.split(",") if k.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from err


# -- analyze ---------------------------------------------------------------

def cmd_analyze(args) -> int:
    from .config import load_config
    from .io import save_certificate, write_history_csv, write_manifest
    from .pipeline import InfeasibleError, analyze
    from .system import load_system

    started = datetime.now(timezone.utc)
    try:
        system = load_system(args.system)
        cfg = load_config(args.config)
    except (OSError, ValueError) as err:
        _err(f"cannot read inputs: {err}")
        return EXIT_IO
    try:
        cert = analyze(system, cfg, threads=args.threads)
    except InfeasibleError as err:
        _err(str(err))
        return EXIT_INFEASIBLE
    out = Path(args.out)
    try:
        save_certificate(cert, out / "cert.json")
        write_history_csv(out / "history.csv", cert.history)
        write_manifest(out / "manifest.json", config=str(args.config), system=str(args.system), out_dir=str(out),
                       seed=args.seed, started=started, command="analyze",
                       extra={"system_hash": system.hash, "threads": args.threads})
    except OSError as err:
        _err(f"cannot write outputs: {err}")
        return EXIT_IO
    print(f"gamma      {cert.gamma:.6g}")
    print(f"sqrt_gamma {cert.gain:.6g}")
    print(f"uhat       {cert.uhat:.6g}")
    print(f"|A|        {cert.region_size} simplexes")
    print(f"certificate written to {out / 'cert.json'}")
    return EXIT_OK


# -- verify ----------------------------------------------------------------

def cmd_verify(args) -> int:
    from .io import SystemMismatchError, atomic_write, jsonable, load_certificate
    from .system import load_system
    from .verify import verify_certificate

    try:
        system = load_system(args.system) if args.system else None
        cert = load_certificate(args.cert, system)
    except SystemMismatchError as err:
        _err(str(err))
        return EXIT_VERIFY
    except (OSError, ValueError) as err:
        _err(f"cannot read certificate: {err}")
        return EXIT_IO
    report = verify_certificate(cert, samples=args.samples, trials=args.trials, seed=args.seed,
                                horizon=args.horizon, dt=args.dt)
    report_path = Path(args.report) if args.report else Path(args.cert).with_name("verify_report.json")
    try:
        atomic_write(report_path, json.dumps(jsonable(report), indent=1, allow_nan=False) + "\n")
    except (OSError, ValueError) as err:
        _err(f"cannot write report: {err}")
        return EXIT_IO
    for key in ("storage_check", "barrier_check", "bounds", "hj_sampling", "invariance", "gain"):
        print(f"{key:14s} {'PASS' if report[key]['passed'] else 'FAIL'}")
    print(f"report written to {report_path}")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


# -- export ----------------------------------------------------------------

EXPORTS = ("mesh", "levelset", "history", "fields")


def cmd_export(args) -> int:
    from .export import (UnsupportedExport, edge_rows, field_grid, history_tables, level_polylines,
                         levelset_rows)
    from .io import load_certificate, write_csv

    try:
        cert = load_certificate(args.cert)
    except (OSError, ValueError) as err:
        _err(f"cannot read certificate: {err}")
        return EXIT_IO
    out = Path(args.out)
    what = EXPORTS if args.what == "all" else (args.what,)
    plots = not args.no_plots and cert.storage.mesh.n == 2
    if plots:
        from . import plotting
    written = []
    try:
        for item in what:
            if item == "mesh":
                for name, part, shade, dark in (
                        ("storage", cert.storage, (), ()),
                        ("barrier", cert.barrier, cert.barrier.region_ids, cert.barrier.A1)):
                    header, rows = edge_rows(part.mesh)
                    write_csv(out / f"mesh_{name}_edges.csv", header, rows)
                    written.append(out / f"mesh_{name}_edges.csv")
                    if plots:
                        plotting.plot_mesh(part.mesh, out / f"mesh_{name}.png", highlight=dark, shade=shade,
                                           title=f"{name} triangulation")
                        written.append(out / f"mesh_{name}.png")
            elif item == "levelset":
                header, rows = levelset_rows(cert)
                write_csv(out / "levelset.csv", header, rows)
                written.append(out / "levelset.csv")
                if plots:
                    lines = level_polylines(cert.barrier.function, cert.barrier.level)
                    plotting.plot_levelset(cert.barrier.mesh, lines, cert.barrier.A1, out / "levelset.png",
                                           title=f"invariant set, uhat = {cert.uhat:.4g}")
                    written.append(out / "levelset.png")
            elif item == "history":
                tables = history_tables(cert.history)
                for key, (header, rows) in tables.items():
                    write_csv(out / f"history_{key}.csv", header, rows)
                    written.append(out / f"history_{key}.csv")
                if plots:
                    plotting.plot_history(tables, out / "history.png")
                    written.append(out / "history.png")
            elif item == "fields":
                header, pts, V, W, axes = field_grid(cert, args.resolution)
                rows = [[*p.tolist(), v, w] for p, v, w in zip(pts, V, W)]
                write_csv(out / "fields.csv", header, [[None if (isinstance(x, float) and np.isnan(x)) else x
                                                        for x in r] for r in rows])
                written.append(out / "fields.csv")
                if plots:
                    plotting.plot_fields(axes, V, W, cert.barrier.level, out / "fields.png")
                    written.append(out / "fields.png")
    except UnsupportedExport as err:
        _err(str(err))
        return EXIT_IO
    except OSError as err:
        _err(f"cannot write exports: {err}")
        return EXIT_IO
    for p in written:
        print(p)
    return EXIT_OK


# -- mesh ------------------------------------------------------------------

def cmd_mesh(args) -> int:
    from .io import atomic_write
    from .mesh import Triangulation, kuhn_triangulate, refine, validate

    try:
        if args.validate:
            T = Triangulation.from_json(Path(args.validate).read_text())
        else:
            if args.box is None or args.grid is None:
                _err("mesh needs --box and --grid, or --validate FILE")
                return EXIT_IO
            grid = args.grid if len(args.grid) > 1 else args.grid * len(args.box)
            T = kuhn_triangulate(args.box, grid, args.ratio, args.anchors)
            for _ in range(args.refine):
                T = refine(T)
    except (OSError, ValueError, json.JSONDecodeError) as err:
        _err(str(err))
        return EXIT_IO
    problems = validate(T)
    print(f"simplexes {T.num_simplices}")
    print(f"vertices  {T.num_vertices}")
    print(f"valid     {'yes' if not problems else 'no'}")
    for p in problems:
        print(f"  {p}")
    if args.out and not args.validate:
        try:
            atomic_write(args.out, T.to_json() + "\n")
        except OSError as err:
            _err(str(err))
            return EXIT_IO
    return EXIT_OK if not problems else EXIT_VERIFY


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cpagain", description=__doc__)
    p.add_argument("--version", action="version", version=f"cpagain {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log iteration progress")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="compute storage and barrier certificates")
    a.add_argument("--system", required=True, help="system file, or a built-in name (pendulum, zero)")
    a.add_argument("--config", required=True, help="config TOML, or the built-in 'pendulum-reference'")
    a.add_argument("--out", required=True, help="output directory")
    a.add_argument("--seed", type=int, default=0, help="recorded in the manifest")
    a.add_argument("--threads", type=int, default=1)
    a.set_defaults(func=cmd_analyze)

    v = sub.add_parser("verify", help="re-check a certificate without the solver")
    v.add_argument("cert")
    v.add_argument("--system", help="system file to check against (default: the embedded copy)")
    v.add_argument("--samples", type=int, default=100_000)
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--horizon", type=float, default=50.0)
    v.add_argument("--dt", type=float, default=0.01)
    v.add_argument("--report", help="report path (default: verify_report.json next to the certificate)")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("export", help="write CSV tables and PNG figures")
    e.add_argument("cert")
    e.add_argument("--what", choices=EXPORTS + ("all",), default="all")
    e.add_argument("--out", required=True)
    e.add_argument("--resolution", type=int, default=100, help="points per axis for 'fields'")
    e.add_argument("--no-plots", action="store_true")
    e.set_defaults(func=cmd_export)

    m = sub.add_parser("mesh", help="build, refine and validate triangulations")
    m.add_argument("--box", type=_parse_box, help="'lo:hi,lo:hi'")
    m.add_argument("--grid", type=_parse_ints, help="cells per axis, 'k' or 'k,k'")
    m.add_argument("--ratio", type=float, default=1.0, help="cell growth away from the origin")
    m.add_argument("--anchors", type=_parse_floats, default=[], help="coordinates pinned to grid lines")
    m.add_argument("--refine", type=int, default=0, help="uniform refinement rounds")
    m.add_argument("--out", help="write the mesh as JSON")
    m.add_argument("--validate", metavar="FILE", help="validate an existing mesh JSON instead")
    m.set_defaults(func=cmd_mesh)
    return p


def _glue_negative_values(argv: list) -> list:
    """Let '--box -1:1,-1:1' through: argparse would read the value as an option."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in ("--box", "--anchors") and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_glue_negative_values(list(sys.argv[1:] if argv is None else argv)))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
