"""End-to-end experiment drivers shared by the command line and the tests."""

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import io, postproc
from .fem import FemWorkspace
from .galerkin import GalerkinSystem
from .gpc import MultiIndexSet, smolyak_rule
from .krylov import PreconditionerSpec, fgmres, make_preconditioner
from .mesh import build_mesh
from .nonlinear import (LinearSolverSpec, hybrid_solve, solve_linear,
                        solve_stochastic_stokes)
from .random_field import build_viscosity
from .sampling import collocation, monte_carlo

__all__ = [
    "ProblemSetup",
    "SolverFailure",
    "setup_problem",
    "run_galerkin",
    "run_mc",
    "run_collocation",
    "run_compare",
    "precond_bench",
    "collate_report",
    "BENCH_HEADER",
]

BENCH_HEADER = ["N", "P", "CoV", "preconditioner", "l_t", "iters",
                "ngdof", "M", "M_nu"]


class SolverFailure(RuntimeError):
    pass


@dataclass
class ProblemSetup:
    mesh: object
    ws: object
    visc: object
    system: object


def setup_problem(cfg):
    mesh = build_mesh(cfg.geometry, cfg.nx, cfg.ny,
                      obstacle=tuple(cfg.obstacle) if cfg.obstacle else None)
    ws = FemWorkspace(mesh)
    visc = build_viscosity(mesh, ws, target_cov=cfg.cov,
                           target_mean=cfg.mean_viscosity, n_modes=cfg.dim,
                           coeff_degree=cfg.coeff_degree,
                           length_x=cfg.length_x, length_y=cfg.length_y)
    system = GalerkinSystem(mesh, visc, degree=cfg.degree, ws=ws)
    return ProblemSetup(mesh=mesh, ws=ws, visc=visc, system=system)


def _write_moment_fields(outdir, mesh, fm, prefix):
    io.write_vtk_velocity_fields(mesh, outdir / f"{prefix}_velocity.vtk", {
        "mean_u_x": fm.mean["u_x"], "mean_u_y": fm.mean["u_y"],
        "var_u_x": fm.variance["u_x"], "var_u_y": fm.variance["u_y"]})
    io.write_vtk_pressure_fields(mesh, outdir / f"{prefix}_pressure.vtk", {
        "mean_p": fm.mean["p"], "var_p": fm.variance["p"]})
    io.write_field_csv(outdir / f"{prefix}_velocity.csv", mesh.vel_coords, {
        "mean_u_x": fm.mean["u_x"], "mean_u_y": fm.mean["u_y"],
        "var_u_x": fm.variance["u_x"], "var_u_y": fm.variance["u_y"]})
    io.write_field_csv(outdir / f"{prefix}_pressure.csv", mesh.pre_coords, {
        "mean_p": fm.mean["p"], "var_p": fm.variance["p"]})


def _write_probe_curves(outdir, curves, prefix):
    for i, (probe, curve) in enumerate(curves):
        name = f"{prefix}_pdf_{i}_{probe.fieldname}.csv"
        io.write_rows_csv(outdir / name, ["value", "density"],
                          list(zip(curve.grid.tolist(), curve.density.tolist())))


def _probe_curves(source, mesh, probes, basis=None, seed=0):
    return [(p, postproc.probe_pdf(source, mesh, p, basis=basis, seed=seed))
            for p in probes]


def _prepare_outdir(outdir):
    if outdir is None:
        return None
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


def run_galerkin(cfg, outdir=None, setup=None):
    """Coupled solve; writes moment fields, probe pdfs, report and manifest."""
    outdir = _prepare_outdir(outdir)
    setup = setup or setup_problem(cfg)
    v, report = hybrid_solve(setup.system, cfg.nonlinear_config(),
                             cfg.linear_solver_spec())
    if report.status != "converged":
        raise SolverFailure(f"nonlinear iteration ended with status "
                            f"{report.status!r} at relative residual "
                            f"{report.rel_residual:.3e}")
    fm = postproc.moments(v, setup.mesh, setup.system.n_modes)
    curves = _probe_curves(v, setup.mesh, cfg.probe_specs(),
                           basis=setup.system.basis, seed=cfg.seed)
    if outdir:
        io.write_manifest(outdir, cfg.to_dict(), cfg.seed)
        io.write_json(outdir / "solve_report.json",
                      {"method": "galerkin", **report.to_dict()})
        io.write_rows_csv(outdir / "residual_history.csv",
                          ["step", "kind", "linear_iterations", "rel_residual"],
                          [(i, s.kind, s.linear_iterations, s.rel_residual)
                           for i, s in enumerate(report.steps)])
        _write_moment_fields(outdir, setup.mesh, fm, "galerkin")
        _write_probe_curves(outdir, curves, "galerkin")
    return {"setup": setup, "solution": v, "report": report, "moments": fm,
            "curves": curves}


def run_mc(cfg, outdir=None, setup=None):
    outdir = _prepare_outdir(outdir)
    setup = setup or setup_problem(cfg)
    ens = monte_carlo(setup.visc, setup.mesh, cfg.mc_samples, cfg.seed,
                      nl_cfg=cfg.nonlinear_config(), ws=setup.ws)
    fm = postproc.ensemble_moments(ens, setup.mesh)
    curves = _probe_curves(ens, setup.mesh, cfg.probe_specs(), seed=cfg.seed)
    if outdir:
        io.write_manifest(outdir, cfg.to_dict(), cfg.seed)
        io.write_json(outdir / "solve_report.json",
                      {"method": "mc", **ens.summary()})
        _write_moment_fields(outdir, setup.mesh, fm, "mc")
        _write_probe_curves(outdir, curves, "mc")
    return {"setup": setup, "ensemble": ens, "moments": fm, "curves": curves}


def run_collocation(cfg, outdir=None, setup=None):
    outdir = _prepare_outdir(outdir)
    setup = setup or setup_problem(cfg)
    rule = smolyak_rule(cfg.smolyak_level, cfg.dim)
    v, ens = collocation(setup.visc, setup.mesh, rule, cfg.degree,
                         nl_cfg=cfg.nonlinear_config(), ws=setup.ws)
    fm = postproc.moments(v, setup.mesh, setup.system.n_modes)
    curves = _probe_curves(v, setup.mesh, cfg.probe_specs(),
                           basis=setup.system.basis, seed=cfg.seed)
    if outdir:
        io.write_manifest(outdir, cfg.to_dict(), cfg.seed)
        io.write_json(outdir / "solve_report.json",
                      {"method": "collocation", **ens.summary(),
                       "n_points": int(rule.n_points)})
        _write_moment_fields(outdir, setup.mesh, fm, "collocation")
        _write_probe_curves(outdir, curves, "collocation")
    return {"setup": setup, "solution": v, "ensemble": ens, "moments": fm,
            "curves": curves}


def run_compare(cfg, outdir=None):
    """Run all three methods on the same problem and quantify agreement."""
    outdir = _prepare_outdir(outdir)
    setup = setup_problem(cfg)
    gal = run_galerkin(cfg, setup=setup)
    col = run_collocation(cfg, setup=setup)
    mc = run_mc(cfg, setup=setup)
    results = {"galerkin": gal["solution"], "collocation": col["solution"],
               "mc": mc["ensemble"]}
    report = postproc.compare_methods(results, setup.mesh, setup.system.basis,
                                      cfg.probe_specs(), seed=cfg.seed)
    if outdir:
        io.write_manifest(outdir, cfg.to_dict(), cfg.seed)
        io.write_json(outdir / "compare_report.json", report)
        for name, res in (("galerkin", gal), ("collocation", col), ("mc", mc)):
            _write_probe_curves(outdir, res["curves"], name)
    return {"setup": setup, "galerkin": gal, "collocation": col, "mc": mc,
            "report": report}


def _advance_picard(system, v, n_steps, lin_spec):
    for _ in range(n_steps):
        state = system.linearize(v)
        op = system.linearized_operator(state, mode="picard")
        r = system.residual(v, state)
        x, _, _ = solve_linear(system, op, r, lin_spec, iterate=v)
        v = v + x
        system.advance_iterate()
    return v


def precond_bench(cfg, preconds=("mb", "k", "bgs", "ahgs"), truncs=(None,),
                  covs=None, newton=True, outdir=None, n_picard=None):
    """Iteration-count sweep on the first Picard step (after the Stokes
    initialization) and optionally the first Newton step (after the Picard
    phase), for each preconditioner, truncation degree and CoV.

    Returns {"picard": rows, "newton": rows, "accounting": {...}} with rows
    matching ``BENCH_HEADER``.
    """
    outdir = _prepare_outdir(outdir)
    covs = [cfg.cov] if covs is None else covs
    n_picard = cfg.nonlinear_config().n_picard if n_picard is None else n_picard
    setup_solver = LinearSolverSpec(precond=PreconditionerSpec(kind="ahgs"),
                                    fgmres=cfg.fgmres_config())
    rows_picard, rows_newton = [], []
    accounting = {}
    for cov in covs:
        cfg_c = replace(cfg, cov=cov)
        setup = setup_problem(cfg_c)
        system = setup.system
        H = system.H
        accounting[str(cov)] = {
            "nnz_total": H.nnz_total(),
            "coupling_nnz": {str(lt): int(H.coupling_nnz(H.truncation_set(lt)))
                             for lt in range(cfg.coeff_degree + 1)},
        }
        meta = [system.basis.dim, system.basis.degree, cov]
        tail = [system.ndof, system.n_modes, system.visc.n_terms]

        v, _ = solve_stochastic_stokes(system, setup_solver)
        system.advance_iterate()

        def bench(op, r, rows_out):
            for kind in preconds:
                for lt in truncs:
                    spec = PreconditionerSpec(kind=kind, trunc_degree=lt)
                    pre = make_preconditioner(spec, op, system.basis)
                    res = fgmres(op, r, precond=pre, cfg=cfg.fgmres_config())
                    lt_out = cfg.coeff_degree if lt is None else lt
                    rows_out.append(meta + [kind, lt_out, res.iterations] + tail)

        state = system.linearize(v)
        bench(system.linearized_operator(state, "picard"),
              system.residual(v, state), rows_picard)

        if newton:
            v_n = _advance_picard(system, v, n_picard, setup_solver)
            state_n = system.linearize(v_n)
            bench(system.linearized_operator(state_n, "newton"),
                  system.residual(v_n, state_n), rows_newton)

    result = {"picard": rows_picard, "newton": rows_newton,
              "accounting": accounting}
    if outdir:
        io.write_manifest(outdir, cfg.to_dict(), cfg.seed)
        io.write_rows_csv(outdir / "picard_iterations.csv", BENCH_HEADER,
                          rows_picard)
        if newton:
            io.write_rows_csv(outdir / "newton_iterations.csv", BENCH_HEADER,
                              rows_newton)
        io.write_json(outdir / "bench_accounting.json", accounting)
    return result


def collate_report(outdir):
    """Collect the artifacts of a run directory into one summary document."""
    outdir = Path(outdir)
    if not outdir.is_dir():
        raise FileNotFoundError(f"no such run directory: {outdir}")
    import json

    summary = {"directory": str(outdir), "json": {}, "tables": [], "fields": []}
    for p in sorted(outdir.glob("*.json")):
        if p.name == "summary.json":
            continue
        summary["json"][p.name] = json.loads(p.read_text())
    summary["tables"] = [p.name for p in sorted(outdir.glob("*.csv"))]
    summary["fields"] = [p.name for p in sorted(outdir.glob("*.vtk"))]
    io.write_json(outdir / "summary.json", summary)
    return summary
