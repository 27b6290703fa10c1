"""Hybrid nonlinear strategy for the coupled stochastic problem.

A stochastic Stokes solve provides the initial iterate, a fixed number of
convection-linearized (Picard) corrections improve it, and full Newton
corrections finish to tolerance.  The inexact variant replaces each Picard
correction by a block-diagonal solve with the mean matrix while keeping the
full residual, which is cheap but fragile for strongly varying viscosity.
"""

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import fem
from .krylov import (FgmresConfig, MeanBlockLU, PreconditionerSpec, fgmres,
                     make_preconditioner)

__all__ = [
    "NonlinearConfig",
    "LinearSolverSpec",
    "StepRecord",
    "SolverReport",
    "LinearSolveFailure",
    "solve_linear",
    "solve_stochastic_stokes",
    "hybrid_solve",
]


@dataclass
class NonlinearConfig:
    n_picard: int = 6
    max_newton: int = 10
    tol: float = 1e-8
    inexact_picard: bool = False
    divergence_growth: float = 10.0   # residual growth factor ...
    divergence_window: int = 3        # ... over this many consecutive steps

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("nonlinear tolerance must be positive")
        if self.n_picard < 0 or self.max_newton < 0:
            raise ValueError("step counts must be nonnegative")


@dataclass
class LinearSolverSpec:
    """How the correction systems are solved: a direct factorization (small
    problems only) or flexible GMRES with one of the preconditioners."""

    method: str = "fgmres"
    precond: PreconditionerSpec = field(default_factory=PreconditionerSpec)
    fgmres: FgmresConfig = field(default_factory=lambda: FgmresConfig(tol=1e-8, maxit=600))

    def __post_init__(self):
        if self.method not in ("direct", "fgmres"):
            raise ValueError("linear solver method must be 'direct' or 'fgmres'")


@dataclass
class StepRecord:
    kind: str                 # stokes | picard | inexact-picard | newton
    linear_iterations: int
    rel_residual: float       # after the step
    wall_time: float


@dataclass
class SolverReport:
    steps: list
    status: str               # converged | maxit | diverged
    rel_residual: float
    rhs_norm: float
    ndof: int

    def n_steps(self, kind):
        return sum(1 for s in self.steps if s.kind == kind)

    def to_dict(self):
        return {
            "status": self.status,
            "rel_residual": self.rel_residual,
            "rhs_norm": self.rhs_norm,
            "ndof": self.ndof,
            "steps": [asdict(s) for s in self.steps],
        }


class LinearSolveFailure(RuntimeError):
    pass


def _pcd_operators(system, v):
    wind = v[: system.n_u]
    return fem.assemble_pcd_operators(system.ws, system.visc.coeffs[0], wind)


def solve_linear(system, op, rhs, spec, iterate=None):
    """Solve one correction system; returns (x, iterations, converged)."""
    if spec.method == "direct":
        mat = op.mean_matrix() if op.n_modes == 1 else op.assemble_global().tocsc()
        lu = MeanBlockLU(mat)
        return lu.solve(rhs), 1, True
    pcd = None
    if spec.precond.kind.startswith("ahgs-pcd"):
        base = system.bc_vector() if iterate is None else iterate
        pcd = _pcd_operators(system, base)
    precond = make_preconditioner(spec.precond, op, system.basis, pcd_ops=pcd)
    res = fgmres(op, rhs, precond=precond, cfg=spec.fgmres)
    return res.x, res.iterations, res.converged


def solve_stochastic_stokes(system, lin_spec=None):
    """Coupled Stokes solve used as the nonlinear initial guess."""
    spec = lin_spec or LinearSolverSpec()
    v = system.bc_vector()
    op = system.stokes_operator()
    r = system.stokes_residual(v)
    x, iters, ok = solve_linear(system, op, r, spec)
    if not ok:
        raise LinearSolveFailure("Stokes solve did not reach tolerance "
                                 f"in {iters} iterations")
    return v + x, iters


def hybrid_solve(system, nl_cfg=None, lin_spec=None):
    """Stokes initialization, n_picard Picard corrections, then Newton until
    the residual satisfies ||R|| <= tol * ||y||.

    Returns the converged coefficient vector and a report with one record per
    step.  Status is "diverged" when the residual grows by the configured
    factor over a window of steps (or turns non-finite), "maxit" when the
    Newton budget is exhausted.
    """
    nl = nl_cfg or NonlinearConfig()
    spec = lin_spec or LinearSolverSpec()
    ynorm = system.rhs_norm()
    steps = []

    t0 = time.perf_counter()
    v = system.bc_vector()
    op = system.stokes_operator()
    x, iters, _ = solve_linear(system, op, system.stokes_residual(v), spec)
    v = v + x
    system.advance_iterate()
    state = system.linearize(v)
    rel = np.linalg.norm(system.residual(v, state)) / ynorm
    steps.append(StepRecord("stokes", iters, rel, time.perf_counter() - t0))

    history = [rel]
    status = None

    def diverging():
        if not np.isfinite(history[-1]):
            return True
        w = nl.divergence_window
        return (len(history) > w
                and history[-1] > nl.divergence_growth * history[-1 - w])

    def take_step(kind):
        nonlocal v, state, rel
        t0 = time.perf_counter()
        if kind == "inexact-picard":
            lu = MeanBlockLU(system.mean_block_matrix(state, mode="picard"))
            R = system.residual(v, state).reshape(system.n_modes, system.n_det)
            delta = np.ascontiguousarray(lu.solve(R.T).T).ravel()
            iters = 1
        else:
            mode = "picard" if kind == "picard" else "newton"
            opk = system.linearized_operator(state, mode=mode)
            r = system.residual(v, state)
            delta, iters, _ = solve_linear(system, opk, r, spec, iterate=v)
        v = v + delta
        system.advance_iterate()
        state = system.linearize(v)
        rel = np.linalg.norm(system.residual(v, state)) / ynorm
        history.append(rel)
        steps.append(StepRecord(kind, iters, rel, time.perf_counter() - t0))

    picard_kind = "inexact-picard" if nl.inexact_picard else "picard"
    for _ in range(nl.n_picard):
        if rel <= nl.tol or diverging():
            break
        take_step(picard_kind)

    newton_taken = 0
    while status is None:
        if diverging():
            status = "diverged"
        elif rel <= nl.tol:
            status = "converged"
        elif newton_taken >= nl.max_newton:
            status = "maxit"
        else:
            take_step("newton")
            newton_taken += 1

    report = SolverReport(steps=steps, status=status, rel_residual=float(rel),
                          rhs_norm=float(ynorm), ndof=system.ndof)
    return v, report
