"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import oracle
from .config import ConfigError, RunConfig
from .contrast import critical_contrasts
from .experiments import (ExperimentError, build_mesh, run_delta_sweep, run_h_study,
                          run_source_problem)
from .fem import assemble
from .ldlt import SingularPivotError
from .mesh import InclusionGeometry, write_mesh
from .output import fmt_num, write_csv, write_loglog_svg, write_manifest, write_vtk_field
from .solver import ConvergenceError, solve_smallest_modulus

log = logging.getLogger(__name__)

OUT_ENV = "PLASMONIC_EIGS_OUT"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class NumericalFailure(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, help="output directory (default: $%s/<command>)" % OUT_ENV)
    common.add_argument("--seed", type=int, help="Lanczos start-vector seed")
    common.add_argument("--tol", type=float, help="eigen residual tolerance")
    common.add_argument("--threads", type=int, default=1, help="parallel delta jobs in sweeps")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="plasmonic-eigs", description="Sign-changing transmission eigenproblems on a disk")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("mesh", parents=[common], help="generate and export a mesh")
    sub.add_parser("solve", parents=[common], help="eigen-solve for a single delta")
    sub.add_parser("h-study", parents=[common], help="mesh-refinement study")
    sub.add_parser("sweep", parents=[common], help="delta sweep of both spectral branches")
    o = sub.add_parser("oracle", parents=[common], help="semi-analytic disk eigenvalues")
    o.add_argument("--kind", choices=["farfield", "nearfield", "full"], default="farfield")
    o.add_argument("--count", type=int, default=6)
    o.add_argument("--count-neg", type=int, default=2, help="negative count (full kind)")
    c = sub.add_parser("critical-set", parents=[common], help="critical contrasts of an ellipse")
    c.add_argument("--a", type=float, default=0.5)
    c.add_argument("--b", type=float, default=0.25)
    c.add_argument("--kmax", type=int, default=64)
    sub.add_parser("source", parents=[common], help="source-problem convergence over delta")
    e = sub.add_parser("export-eigvec", parents=[common], help="write one eigenfunction as VTK")
    e.add_argument("--index", type=int, default=-1, help="signed index: -1 first negative, 1 first positive")
    return p


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.eigen.seed = args.seed
    if args.tol is not None:
        cfg.eigen.tol = args.tol
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    cfg.validate()
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    if args.out is not None:
        d = args.out
    elif cfg.outputs.directory:
        d = Path(cfg.outputs.directory)
    else:
        d = Path(os.environ.get(OUT_ENV, "runs")) / args.command
    d.mkdir(parents=True, exist_ok=True)
    return d


def _single(cfg: RunConfig):
    g = cfg.geometry
    geom = InclusionGeometry(g.a, g.b, g.delta)
    mesh = build_mesh(geom, cfg.mesh_params(), cfg.mesh.refinements)
    pencil = assemble(mesh, cfg.material_pair())
    res = solve_smallest_modulus(pencil, cfg.eigen.k_pos, cfg.eigen.k_neg, cfg.lanczos())
    if not res.converged:
        raise NumericalFailure("; ".join(res.flags) or "eigen solver did not converge")
    return mesh, pencil, res


def _cmd_mesh(args, cfg, out):
    g = cfg.geometry
    mesh = build_mesh(InclusionGeometry(g.a, g.b, g.delta), cfg.mesh_params(), cfg.mesh.refinements)
    write_mesh(mesh, out / "mesh.txt")
    files = ["mesh.txt"]
    if "vtk" in cfg.outputs.formats:
        write_vtk_field(mesh, mesh.markers.astype(float), out / "mesh.vtk", name="marker")
        files.append("mesh.vtk")
    print(f"nodes {mesh.n_nodes} triangles {mesh.n_triangles}")
    return files


def _cmd_solve(args, cfg, out):
    mesh, pencil, res = _single(cfg)
    rows = [(n, lam, rr, "+" if n > 0 else "-") for n, lam, rr, _ in res.pairs()]
    write_csv(out / "eigen.csv", ["index", "lambda", "residual", "sign"], rows)
    for r in rows:
        print(",".join(fmt_num(v) if not isinstance(v, str) else v for v in r))
    files = ["eigen.csv"]
    if "vtk" in cfg.outputs.formats:
        for n, _, _, vec in res.pairs():
            name = f"eigvec_{'m' if n < 0 else 'p'}{abs(n)}.vtk"
            write_vtk_field(mesh, pencil.dofmap.extend(vec), out / name)
            files.append(name)
    return files


def _cmd_export(args, cfg, out):
    mesh, pencil, res = _single(cfg)
    pairs = {n: (lam, vec) for n, lam, _, vec in res.pairs()}
    if args.index not in pairs:
        raise ConfigError(f"index {args.index} not computed (have {sorted(pairs)})")
    lam, vec = pairs[args.index]
    name = f"eigvec_{'m' if args.index < 0 else 'p'}{abs(args.index)}.vtk"
    write_vtk_field(mesh, pencil.dofmap.extend(vec), out / name)
    print(f"{args.index},{fmt_num(lam)} -> {out / name}")
    return [name]


def _cmd_h_study(args, cfg, out):
    g = cfg.geometry
    rep = run_h_study(InclusionGeometry(g.a, g.b, g.delta), cfg.material_pair(), cfg.mesh.levels,
                      cfg.mesh_params(), cfg.lanczos())
    rows = [(r.level, r.h_max, r.lambda_pos_1, r.lambda_neg_1, r.order_pos, r.order_neg) for r in rep.rows]
    header = ["level", "h_max", "lambda_pos_1", "lambda_neg_1", "order_pos", "order_neg"]
    write_csv(out / "h_study.csv", header, rows)
    print(",".join(header))
    for r in rows:
        print(",".join(map(fmt_num, r)))
    files = ["h_study.csv"]
    if "svg" in cfg.outputs.formats and len(rep.rows) >= 4:
        f = rep.finest
        hs = [r.h_max for r in rep.rows[:-1]]
        ep = [abs(r.lambda_pos_1 - f.lambda_pos_1) for r in rep.rows[:-1]]
        en = [abs(r.lambda_neg_1 - f.lambda_neg_1) for r in rep.rows[:-1]]
        if min(ep) > 0 and min(en) > 0:
            write_loglog_svg([(hs, ep), (hs, en)], ["lambda_1", "lambda_-1"], out / "h_study.svg",
                             xlabel="h_max", ylabel="|lambda - lambda_finest|")
            files.append("h_study.svg")
    return files


def _cmd_sweep(args, cfg, out):
    rep = run_delta_sweep(cfg.sweep_config(args.threads))
    rows = [(r.delta, r.h_max, r.n, r.lam, r.scaled_lambda, r.residual, r.loc_fraction) for r in rep.rows]
    write_csv(out / "sweep.csv", ["delta", "h_max", "n", "lambda", "scaled_lambda", "residual", "loc_fraction"], rows)
    files = ["sweep.csv"]
    for name, fit in sorted(rep.fits.items()):
        print(f"fit {name}: slope {fit.slope:.4f} R2 {fit.r2:.6f} points {fit.n_points}")
    for d, err in rep.failures.items():
        print(f"delta {d} failed: {err}", file=sys.stderr)
    if "svg" in cfg.outputs.formats:
        neg = rep.series(-1)
        if len(neg) >= 3:
            write_loglog_svg([([1 / d for d, _ in neg], [abs(v) for _, v in neg])], ["|lambda_-1|"],
                             out / "sweep_neg.svg", xlabel="1/delta", ylabel="|lambda|")
            files.append("sweep_neg.svg")
        ser, labs = [], []
        for n in range(1, min(3, len(rep.farfield)) + 1):
            pts = [(1 / d, abs(v - rep.farfield[n - 1])) for d, v in rep.series(n)]
            if len(pts) >= 3 and all(p[1] > 0 for p in pts):
                ser.append(([p[0] for p in pts], [p[1] for p in pts]))
                labs.append(f"|lambda_{n} - mu_{n}|")
        if ser:
            write_loglog_svg(ser, labs, out / "sweep_pos.svg", xlabel="1/delta", ylabel="error")
            files.append("sweep_pos.svg")
    if rep.failures:
        args.status = EXIT_NUMERIC
    return files


def _cmd_source(args, cfg, out):
    rep = run_source_problem(cfg.sweep_config(args.threads), cfg.source.f)
    rows = [(r.delta, r.err_l2, r.err_h1) for r in rep.rows]
    write_csv(out / "source.csv", ["delta", "err_l2", "err_h1"], rows)
    files = ["source.csv"]
    if rep.fit_l2 is not None:
        print(f"slope L2 {rep.fit_l2.slope:.4f}  slope H1 {rep.fit_h1.slope:.4f}  monotone {rep.monotone}")
        if "svg" in cfg.outputs.formats:
            ds = [r.delta for r in rep.rows]
            write_loglog_svg([(ds, [r.err_l2 for r in rep.rows]), (ds, [r.err_h1 for r in rep.rows])],
                             ["L2", "H1"], out / "source.svg", xlabel="delta", ylabel="||u - v||")
            files.append("source.svg")
    return files


def _cmd_oracle(args, cfg, out):
    m = cfg.materials
    if args.kind == "farfield":
        roots = [("farfield", r) for r in oracle.farfield_disk_eigenvalues(m.sigma_plus, args.count)]
    elif args.kind == "nearfield":
        if cfg.geometry.a != cfg.geometry.b:
            raise ConfigError("nearfield oracle needs a circular inclusion (a == b)")
        roots = [("nearfield", r) for r in oracle.nearfield_circle_eigenvalues(
            m.sigma_plus, m.sigma_minus, cfg.geometry.a, args.count)]
    else:
        if cfg.geometry.a != cfg.geometry.b:
            raise ConfigError("full-problem oracle needs a circular inclusion (a == b)")
        el = oracle.fullproblem_disk_eigenvalues(m.sigma_plus, m.sigma_minus, cfg.geometry.a,
                                                 cfg.geometry.delta, args.count, args.count_neg)
        roots = [("full", r) for r in el.negative[::-1] + el.positive]
    rows = [(k, r.m, r.index, r.value, r.multiplicity, r.bracket_width) for k, r in roots]
    header = ["kind", "m", "index", "value", "multiplicity", "bracket_width"]
    write_csv(out / "oracle.csv", header, rows)
    print(",".join(header))
    for r in rows:
        print(",".join(v if isinstance(v, str) else fmt_num(v) for v in r))
    return ["oracle.csv"]


def _cmd_critical(args, cfg, out):
    cs = critical_contrasts(args.a, args.b, args.kmax)
    rows = [(k + 1, cs.eta[k], cs.inv_eta[k]) for k in range(cs.k_max)]
    write_csv(out / "critical_set.csv", ["k", "eta_k", "inv_eta_k"], rows)
    print("k,eta_k,inv_eta_k")
    for r in rows:
        print(",".join(map(fmt_num, r)))
    return ["critical_set.csv"]


_COMMANDS = {
    "mesh": _cmd_mesh, "solve": _cmd_solve, "h-study": _cmd_h_study, "sweep": _cmd_sweep,
    "oracle": _cmd_oracle, "critical-set": _cmd_critical, "source": _cmd_source,
    "export-eigvec": _cmd_export,
}
# commands that solve the sign-changing problem and therefore need an admissible contrast
_NEEDS_ADMISSIBLE = {"mesh", "solve", "h-study", "sweep", "source", "export-eigvec"}


def cli_dispatch(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:  # --help
        return EXIT_OK if e.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        warnings = cfg.admissibility() if args.command in _NEEDS_ADMISSIBLE else []
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
        out = _out_dir(args, cfg)
        args.status = EXIT_OK
        files = _COMMANDS[args.command](args, cfg, out)
        write_manifest(out, args.command, cfg.to_json(), files,
                       {"argv": list(argv) if argv is not None else sys.argv[1:], "warnings": warnings})
        if args.status != EXIT_OK:
            print("numerical failure: some sweep points failed (see manifest)", file=sys.stderr)
            return args.status
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, SingularPivotError, ConvergenceError, ExperimentError, ArithmeticError,
            np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main() -> None:
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
