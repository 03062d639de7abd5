"""Command line interface: ``maxwell-mg {mesh,solve,rates,check}``.

Exit codes: 0 all checks pass, 1 numerical check failure, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .mesh import MeshFormatError, read_mesh, write_mesh
from .report import (ConfigError, ExperimentError, ReportRow, _fill_errors, build_meshes, compare_reference,
                     load_config, read_report, references_from_report, run_experiment)

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config (YAML)")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", metavar="N", type=int, help="override the config seed")
    common.add_argument("--oracle", action="store_true", help="add direct per-level eigenvalue columns")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    p = argparse.ArgumentParser(prog="maxwell-mg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    m = sub.add_parser("mesh", parents=[common], help="generate, refine or inspect meshes")
    m.add_argument("--inspect", metavar="MESH", help="read a mesh file and print its statistics")
    sub.add_parser("solve", parents=[common], help="run an experiment")
    r = sub.add_parser("rates", parents=[common], help="recompute errors and rates of a report")
    r.add_argument("report", help="report.json or the directory holding it")
    c = sub.add_parser("check", parents=[common], help="compare a report with reference values")
    c.add_argument("report", help="report.json or the directory holding it")
    return p


def _mesh_line(i, mesh) -> str:
    from .topology import build_topology

    topo = build_topology(mesh)
    return (f"level {i}: {mesh.n_vertices} vertices, {mesh.n_cells} cells, {topo.n_edges} edges, "
            f"{topo.n_free_edges} free edge dofs, conforming={mesh.check_conformity()}, "
            f"boundary components={mesh.boundary_components()}")


def _format_rows(rows) -> str:
    head = f"{'k':>3} {'lvl':>3} {'dof':>8} {'lambda_scheme':>16} {'lambda_direct':>16} {'rel_error':>10} {'R':>6}"
    out = [head]
    for r in rows:
        direct = "" if r.lambda_direct is None else f"{r.lambda_direct:.10g}"
        err = "" if r.rel_error is None else f"{r.rel_error:.3e}"
        rate = "" if r.rate is None else f"{r.rate:.2f}"
        out.append(f"{r.index:>3} {r.level:>3} {r.dof:>8} {r.lambda_scheme:>16.10g} {direct:>16} {err:>10} {rate:>6}")
    return "\n".join(out)


def _cmd_mesh(args, say) -> int:
    if args.inspect:
        meshes = [read_mesh(args.inspect)]
    elif args.config:
        meshes = build_meshes(load_config(args.config))
    else:
        raise ConfigError("mesh needs --config or --inspect")
    for i, mesh in enumerate(meshes):
        say(_mesh_line(i, mesh))
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            write_mesh(mesh, Path(args.out) / f"level_{i}.mesh")
    return EXIT_OK if all(m.check_conformity() for m in meshes) else EXIT_CHECK


def _cmd_solve(args, say) -> int:
    if not args.config:
        raise ConfigError("solve needs --config")
    cfg = load_config(args.config)
    try:
        report = run_experiment(cfg, args.out, oracle=args.oracle or None, seed=args.seed)
    except ExperimentError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CHECK
    if report.rows:
        say(_format_rows(report.rows))
    if cfg.references:
        check = compare_reference(report, cfg.references)
        say(check.summary())
        return EXIT_OK if check.passed else EXIT_CHECK
    return EXIT_OK


def _load_report(args):
    try:
        return read_report(args.report)
    except (OSError, ValueError) as err:
        raise ConfigError(f"cannot read report {args.report}: {err}") from None


def _cmd_rates(args, say) -> int:
    report = _load_report(args)
    refs = load_config(args.config).references if args.config else references_from_report(report)
    _fill_errors(report.rows, refs, int(report.metadata.get("dimension", 3)))
    say(_format_rows(report.rows))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        with open(Path(args.out) / "rates.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            names = list(ReportRow.__dataclass_fields__)
            w.writerow(names)
            for r in report.rows:
                w.writerow(["" if getattr(r, n) is None else getattr(r, n) for n in names])
    return EXIT_OK if report.status == "ok" else EXIT_CHECK


def _cmd_check(args, say) -> int:
    report = _load_report(args)
    refs = load_config(args.config).references if args.config else references_from_report(report)
    check = compare_reference(report, refs)
    say(check.summary())
    if report.status != "ok":
        say(f"report status: {report.status} ({report.error})")
        return EXIT_CHECK
    return EXIT_OK if check.passed else EXIT_CHECK


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    say = (lambda *a: None) if args.quiet else print
    handlers = {"mesh": _cmd_mesh, "solve": _cmd_solve, "rates": _cmd_rates, "check": _cmd_check}
    try:
        return handlers[args.verb](args, say)
    except (ConfigError, MeshFormatError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
