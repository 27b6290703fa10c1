"""Stochastic Galerkin solver for the steady incompressible Navier-Stokes
equations with lognormal random viscosity, with Monte Carlo and sparse-grid
collocation baselines and a hierarchical preconditioner family."""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_config
from .fem import FemWorkspace
from .galerkin import GalerkinSystem, kron_matvec, mode_extract, mode_inject
from .gpc import (MultiIndexSet, gauss_hermite_rule, hermite_eval, smolyak_rule,
                  total_degree_indices, triple_products)
from .krylov import FgmresConfig, PreconditionerSpec, fgmres, make_preconditioner
from .mesh import Mesh, build_mesh
from .nonlinear import (LinearSolverSpec, NonlinearConfig, SolverReport,
                        hybrid_solve, solve_stochastic_stokes)
from .postproc import ProbeSpec, moments, probe_pdf
from .random_field import (CovarianceSpec, build_viscosity, calibrate_sigma,
                           discrete_kl, lognormal_gpc_coeffs, sample_viscosity)
from .sampling import collocation, deterministic_solve, monte_carlo

__all__ = [
    "__version__",
    "ExperimentConfig", "load_config",
    "FemWorkspace",
    "GalerkinSystem", "kron_matvec", "mode_extract", "mode_inject",
    "MultiIndexSet", "gauss_hermite_rule", "hermite_eval", "smolyak_rule",
    "total_degree_indices", "triple_products",
    "FgmresConfig", "PreconditionerSpec", "fgmres", "make_preconditioner",
    "Mesh", "build_mesh",
    "LinearSolverSpec", "NonlinearConfig", "SolverReport", "hybrid_solve",
    "solve_stochastic_stokes",
    "ProbeSpec", "moments", "probe_pdf",
    "CovarianceSpec", "build_viscosity", "calibrate_sigma", "discrete_kl",
    "lognormal_gpc_coeffs", "sample_viscosity",
    "collocation", "deterministic_solve", "monte_carlo",
]
