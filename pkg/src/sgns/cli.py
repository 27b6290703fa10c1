"""Command-line driver.

Subcommands: `mesh` (build and export a mesh), `solve` (run one method from a
config), `precond-bench` (iteration-count sweeps), `compare` (cross-method
agreement), `report` (collate a run directory).  Exit codes: 1 configuration
error, 2 solver failure, 3 I/O error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io, run
from .config import ConfigError, load_config
from .mesh import build_mesh
from .nonlinear import LinearSolveFailure
from .sampling import SamplingError

_PRECONDS = ("mb", "k", "bgs", "ahgs", "ahgs-pcd", "ahgs-pcd-it")


def _parser():
    p = argparse.ArgumentParser(prog="sgns",
                                description="Stochastic Galerkin Navier-Stokes "
                                            "solver and sampling baselines")
    sub = p.add_subparsers(dest="command", required=True)

    pm = sub.add_parser("mesh", help="build a mesh and export it")
    pm.add_argument("--geometry", default="channel-obstacle",
                    choices=("cavity", "channel", "channel-obstacle"))
    pm.add_argument("--nx", type=int, default=48)
    pm.add_argument("--ny", type=int, default=8)
    pm.add_argument("--out", default="out-mesh")
    pm.add_argument("--quiet", action="store_true")

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON config path")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--quiet", action="store_true")

    ps = sub.add_parser("solve", help="run one method from a config")
    common(ps)
    ps.add_argument("--method", choices=("galerkin", "mc", "collocation"))
    ps.add_argument("--precond", choices=_PRECONDS)
    ps.add_argument("--trunc", type=int, default=None,
                    help="coupling truncation degree l_t")

    pb = sub.add_parser("precond-bench", help="iteration-count sweeps")
    common(pb)
    pb.add_argument("--precond", default="mb,k,bgs,ahgs",
                    help="comma-separated preconditioner list")
    pb.add_argument("--trunc", default="full",
                    help="comma-separated truncation degrees ('full' keeps all)")
    pb.add_argument("--cov", default=None,
                    help="comma-separated CoV values (fractions)")
    pb.add_argument("--no-newton", action="store_true",
                    help="skip the Newton-step benchmark")

    pc = sub.add_parser("compare", help="run all methods and compare")
    common(pc)

    pr = sub.add_parser("report", help="collate a run directory")
    pr.add_argument("--out", required=True)
    pr.add_argument("--quiet", action="store_true")
    return p


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "method", None):
        cfg.method = args.method
    if getattr(args, "precond", None) and args.command == "solve":
        cfg.precond = {**cfg.precond, "kind": args.precond}
    if getattr(args, "trunc", None) is not None and args.command == "solve":
        cfg.precond = {**cfg.precond, "trunc_degree": args.trunc}
    from .config import ExperimentConfig
    return ExperimentConfig(**cfg.to_dict())  # revalidate after overrides


def _cmd_mesh(args):
    mesh = build_mesh(args.geometry, args.nx, args.ny)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tags = mesh.node_tags()
    marker = np.zeros(mesh.n_vnodes)
    code = {"wall": 1.0, "lid": 2.0, "inflow": 2.0, "outflow": 3.0}
    for n, t in tags.items():
        marker[n] = code[t]
    io.write_vtk_velocity_fields(mesh, out / "mesh.vtk", {"boundary": marker})
    io.write_field_csv(out / "velocity_nodes.csv", mesh.vel_coords,
                       {"boundary": marker})
    io.write_field_csv(out / "pressure_nodes.csv", mesh.pre_coords,
                       {"node": np.arange(mesh.n_pnodes, dtype=float)})
    io.write_json(out / "mesh_info.json", {
        "geometry": args.geometry, "nx": args.nx, "ny": args.ny,
        "n_elems": mesh.n_elems, "n_velocity_dofs": mesh.n_u,
        "n_pressure_dofs": mesh.n_p})
    if not args.quiet:
        print(f"mesh: {mesh.n_elems} elements, {mesh.n_u} velocity dofs, "
              f"{mesh.n_p} pressure dofs -> {out}")
    return 0


def _cmd_solve(args):
    cfg = _load(args)
    outdir = args.out or f"out-{cfg.method}"
    runner = {"galerkin": run.run_galerkin, "mc": run.run_mc,
              "collocation": run.run_collocation}[cfg.method]
    result = runner(cfg, outdir=outdir)
    if not args.quiet:
        if cfg.method == "galerkin":
            rep = result["report"]
            print(f"galerkin: {rep.status}, rel residual {rep.rel_residual:.3e}, "
                  f"{len(rep.steps)} steps -> {outdir}")
        else:
            ens = result["ensemble"]
            s = ens.summary()
            print(f"{cfg.method}: {s['n_samples']} samples, "
                  f"{s['n_failed']} failed -> {outdir}")
    return 0


def _cmd_bench(args):
    cfg = _load(args)
    preconds = [k.strip() for k in args.precond.split(",") if k.strip()]
    for k in preconds:
        if k not in _PRECONDS:
            raise ConfigError(f"unknown preconditioner {k!r}")
    if args.trunc == "full":
        truncs = [None]
    else:
        truncs = [None if t.strip() == "full" else int(t)
                  for t in args.trunc.split(",")]
    covs = None
    if args.cov is not None:
        covs = [float(c) for c in args.cov.split(",")]
    outdir = args.out or "out-bench"
    result = run.precond_bench(cfg, preconds=preconds, truncs=truncs, covs=covs,
                               newton=not args.no_newton, outdir=outdir)
    if not args.quiet:
        for row in result["picard"]:
            print("picard " + " ".join(str(v) for v in row))
        for row in result["newton"]:
            print("newton " + " ".join(str(v) for v in row))
    return 0


def _cmd_compare(args):
    cfg = _load(args)
    outdir = args.out or "out-compare"
    result = run.run_compare(cfg, outdir=outdir)
    if not args.quiet:
        for entry in result["report"]["probes"]:
            print(entry["probe"], entry["l1"])
    return 0


def _cmd_report(args):
    summary = run.collate_report(args.out)
    if not getattr(args, "quiet", False):
        print(f"collated {len(summary['json'])} reports, "
              f"{len(summary['tables'])} tables, "
              f"{len(summary['fields'])} field files")
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    handlers = {"mesh": _cmd_mesh, "solve": _cmd_solve,
                "precond-bench": _cmd_bench, "compare": _cmd_compare,
                "report": _cmd_report}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (run.SolverFailure, SamplingError, LinearSolveFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
