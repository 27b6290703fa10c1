"""Sampling baselines: Monte Carlo and pseudospectral sparse-grid collocation.

Each sample is an independent deterministic Navier-Stokes solve at one
realization of the viscosity; statistics come from ensemble averaging (Monte
Carlo) or from discrete projection onto the chaos basis (collocation).
"""

from dataclasses import dataclass, field

import numpy as np

from .galerkin import GalerkinSystem, mode_extract
from .gpc import MultiIndexSet, evaluate_basis
from .nonlinear import LinearSolverSpec, NonlinearConfig, hybrid_solve
from .random_field import StochasticViscosity, sample_viscosity

__all__ = [
    "SampleEnsemble",
    "SamplingError",
    "deterministic_solve",
    "monte_carlo",
    "collocation",
    "project_samples",
]


class SamplingError(RuntimeError):
    pass


@dataclass
class SampleEnsemble:
    kind: str                    # "mc" or "collocation"
    points: np.ndarray           # (n, N) sample points
    weights: np.ndarray          # (n,) 1/n for MC, quadrature weights otherwise
    converged: np.ndarray        # (n,) bool
    solutions: np.ndarray = field(repr=False, default=None)  # (n, n_det) or None
    mean: np.ndarray = field(repr=False, default=None)
    variance: np.ndarray = field(repr=False, default=None)
    n_negative_viscosity: int = 0

    @property
    def n_samples(self):
        return self.points.shape[0]

    @property
    def n_failed(self):
        return int((~self.converged).sum())

    def summary(self):
        return {
            "kind": self.kind,
            "n_samples": int(self.n_samples),
            "n_failed": self.n_failed,
            "n_negative_viscosity": int(self.n_negative_viscosity),
        }


def deterministic_solve(visc_field, mesh, nl_cfg=None, ws=None, bc=None):
    """Solve the deterministic problem for one nodal viscosity field.

    Runs the same hybrid Picard/Newton driver as the coupled solver on the
    single-mode system with direct linear solves.  Returns (u, p, report).
    """
    visc_field = np.asarray(visc_field, dtype=float)
    if visc_field.min() <= 0:
        raise ValueError("viscosity realization must be positive")
    trivial = StochasticViscosity(coeffs=visc_field[None, :],
                                  basis=MultiIndexSet(1, 0))
    system = GalerkinSystem(mesh, trivial, degree=0, ws=ws, bc=bc)
    v, report = hybrid_solve(system, nl_cfg, LinearSolverSpec(method="direct"))
    u, p = mode_extract(v, 0, mesh.n_u, system.n_det)
    return u, p, report


def _run_samples(visc, mesh, points, nl_cfg, ws, max_failed_fraction):
    n = points.shape[0]
    n_det = mesh.n_u + mesh.n_p
    solutions = np.zeros((n, n_det))
    converged = np.zeros(n, dtype=bool)
    negative = 0
    for q in range(n):
        nu_q = sample_viscosity(visc, points[q])
        if nu_q.min() <= 0:
            negative += 1
            continue
        u, p, report = deterministic_solve(nu_q, mesh, nl_cfg=nl_cfg, ws=ws)
        if report.status == "converged":
            converged[q] = True
            solutions[q, :mesh.n_u] = u
            solutions[q, mesh.n_u:] = p
    failed = n - int(converged.sum())
    if failed > max_failed_fraction * n:
        raise SamplingError(f"{failed} of {n} samples failed to converge")
    return solutions, converged, negative


def monte_carlo(visc, mesh, n_samples, seed, nl_cfg=None, ws=None,
                keep_solutions=True, max_failed_fraction=0.05):
    """Seeded Monte Carlo ensemble with one-pass mean/variance accumulation.

    Sample points are drawn up front from a seeded generator, so reruns are
    bitwise identical and per-sample work is order-independent.  Samples whose
    nonlinear solve fails are excluded and counted; more than
    `max_failed_fraction` failures aborts.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    points = rng.standard_normal((n_samples, visc.basis.dim))
    solutions, converged, negative = _run_samples(
        visc, mesh, points, nl_cfg, ws, max_failed_fraction)

    # Welford accumulation in fixed sample order over the retained samples.
    mean = np.zeros(solutions.shape[1])
    m2 = np.zeros(solutions.shape[1])
    count = 0
    for q in range(n_samples):
        if not converged[q]:
            continue
        count += 1
        delta = solutions[q] - mean
        mean += delta / count
        m2 += delta * (solutions[q] - mean)
    variance = m2 / max(count - 1, 1)

    ens = SampleEnsemble(
        kind="mc",
        points=points,
        weights=np.full(n_samples, 1.0 / n_samples),
        converged=converged,
        solutions=solutions if keep_solutions else None,
        mean=mean,
        variance=variance,
        n_negative_viscosity=negative,
    )
    return ens


def project_samples(samples, rule, basis):
    """Discrete projection of per-point sample vectors onto the chaos basis:
    coefficient k is sum_q w_q psi_k(xi_q) samples_q.  Shape (M, width)."""
    psi = evaluate_basis(basis, rule.points)
    return (psi * rule.weights[:, None]).T @ np.atleast_2d(samples)


def collocation(visc, mesh, rule, degree, nl_cfg=None, ws=None,
                max_failed_fraction=0.05):
    """Pseudospectral collocation: deterministic solves at the quadrature
    points projected onto the total-degree chaos basis.

    Returns (v, ensemble) where v is the interleaved coefficient vector in
    the same layout as the coupled Galerkin solution.
    """
    basis = MultiIndexSet(visc.basis.dim, degree)
    solutions, converged, negative = _run_samples(
        visc, mesh, rule.points, nl_cfg, ws, max_failed_fraction)
    coeffs = project_samples(solutions, rule, basis)
    v = coeffs.ravel()
    ens = SampleEnsemble(
        kind="collocation",
        points=rule.points,
        weights=rule.weights.copy(),
        converged=converged,
        solutions=solutions,
        n_negative_viscosity=negative,
    )
    return v, ens
