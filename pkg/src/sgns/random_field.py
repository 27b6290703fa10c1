"""Lognormal stochastic viscosity from a truncated Karhunen-Loeve expansion.

The underlying Gaussian field has a separable exponential covariance; its
discrete KL modes are computed from a Nystrom eigenproblem weighted by the
lumped velocity mass matrix.  The lognormal transform then yields one spatial
coefficient field per polynomial of the coefficient chaos basis.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .gpc import MultiIndexSet, evaluate_basis, hermite_table

__all__ = [
    "CovarianceSpec",
    "KLExpansion",
    "StochasticViscosity",
    "calibrate_sigma",
    "calibrate_log_mean",
    "discrete_kl",
    "lognormal_gpc_coeffs",
    "sample_viscosity",
    "build_viscosity",
]

_DENSE_EIG_LIMIT = 1500


@dataclass
class CovarianceSpec:
    """Separable exponential covariance of the Gaussian log-field:
    C(X1, X2) = sigma_g^2 exp(-|x2-x1|/length_x - |y2-y1|/length_y)."""

    sigma_g: float
    length_x: float
    length_y: float

    def __post_init__(self):
        if self.sigma_g < 0:
            raise ValueError("sigma_g must be nonnegative")
        if self.length_x <= 0 or self.length_y <= 0:
            raise ValueError("correlation lengths must be positive")


@dataclass
class KLExpansion:
    mean_log: np.ndarray     # g_0 per velocity node
    modes: np.ndarray        # (n_modes, n_vnodes), each scaled by sqrt(eigenvalue)
    eigenvalues: np.ndarray

    @property
    def n_modes(self):
        return self.modes.shape[0]

    def log_variance(self):
        """Pointwise variance captured by the truncation, sum_j g_j(x)^2."""
        return (self.modes ** 2).sum(axis=0)


@dataclass
class StochasticViscosity:
    """Chaos coefficient fields of the lognormal viscosity."""

    coeffs: np.ndarray       # (M_nu, n_vnodes)
    basis: MultiIndexSet     # coefficient basis, total degree typically 2P
    kl: KLExpansion = field(repr=False, default=None)
    cov: float = 0.0
    mean_target: float = 1.0

    @property
    def n_terms(self):
        return self.coeffs.shape[0]

    def mean_field(self):
        return self.coeffs[0]

    def cov_field(self):
        """Pointwise coefficient of variation of the truncated expansion."""
        var = (self.coeffs[1:] ** 2).sum(axis=0)
        return np.sqrt(var) / self.coeffs[0]

    def exact_realization(self, xi):
        """Lognormal field exp(g_0 + sum_j g_j xi_j), bypassing the expansion."""
        xi = np.asarray(xi, dtype=float)
        return np.exp(self.kl.mean_log + xi @ self.kl.modes)


def calibrate_sigma(target_cov):
    """Gaussian standard deviation giving a lognormal field the requested
    coefficient of variation: sigma_g = sqrt(log(1 + CoV^2))."""
    if not 0.0 <= target_cov < 1.0:
        raise ValueError(f"coefficient of variation {target_cov} outside [0, 1)")
    return math.sqrt(math.log1p(target_cov ** 2))


def calibrate_log_mean(target_mean, sigma_g):
    """Gaussian mean g_0 such that exp(g_0 + sigma_g^2/2) equals target_mean."""
    if target_mean <= 0:
        raise ValueError("mean viscosity must be positive")
    return math.log(target_mean) - 0.5 * sigma_g ** 2


def _kernel_1d(coords, length):
    return np.exp(-np.abs(coords[:, None] - coords[None, :]) / length)


def discrete_kl(cov, mesh, n_modes, ws=None, mean_log=0.0, normalize=True):
    """Leading KL modes of the Gaussian field on the velocity nodes.

    Solves the mass-weighted Nystrom eigenproblem C W v = lambda v with W the
    lumped Q2 mass matrix, symmetrized through W^(1/2).  Modes are returned
    ordered by nonincreasing eigenvalue and scaled by sqrt(eigenvalue); with
    `normalize` the mode set is then rescaled per node so the truncated field
    variance sum_j g_j(x)^2 equals sigma_g^2 exactly (a short truncation
    otherwise underrepresents the field and every derived statistic).
    """
    if n_modes < 1 or n_modes > mesh.n_vnodes - 1:
        raise ValueError("mode count must be in [1, n_vnodes - 1]")
    n = mesh.n_vnodes
    g0 = np.full(n, float(mean_log))
    if cov.sigma_g == 0.0:
        return KLExpansion(mean_log=g0, modes=np.zeros((n_modes, n)),
                           eigenvalues=np.zeros(n_modes))

    if ws is None:
        from .fem import FemWorkspace
        ws = FemWorkspace(mesh)
    w = ws.lumped_velocity_mass()
    sqw = np.sqrt(w)

    mvx = 2 * mesh.nx + 1
    Cx = _kernel_1d(np.linspace(mesh.bounds[0], mesh.bounds[1], mvx), cov.length_x)
    Cy = _kernel_1d(np.linspace(mesh.bounds[2], mesh.bounds[3], 2 * mesh.ny + 1),
                    cov.length_y)
    lat = mesh.vel_lattice
    ix, iy = lat % mvx, lat // mvx
    s2 = cov.sigma_g ** 2

    if n <= _DENSE_EIG_LIMIT:
        C = s2 * Cx[np.ix_(ix, ix)] * Cy[np.ix_(iy, iy)]
        S = sqw[:, None] * C * sqw[None, :]
        lam, z = scipy.linalg.eigh(S, subset_by_index=[n - n_modes, n - 1])
        lam, z = lam[::-1], z[:, ::-1]
    else:
        # Matrix-free kernel action through the separable lattice structure.
        grid = np.zeros((2 * mesh.ny + 1, mvx))

        def action(v):
            grid[:] = 0.0
            grid[iy, ix] = sqw * v
            out = Cy @ grid @ Cx
            return s2 * sqw * out[iy, ix]

        op = spla.LinearOperator((n, n), matvec=action, dtype=float)
        # Deterministic asymmetric start so no eigenvector symmetry class is
        # invisible to the Krylov iteration.
        v0 = np.cos(0.7 * np.arange(n)) + 0.3
        lam, z = spla.eigsh(op, k=n_modes, which="LA", v0=v0)
        order = np.argsort(lam)[::-1]
        lam, z = lam[order], z[:, order]

    tol = 1e-12 * max(lam.max(), 1.0)
    if np.any(lam <= tol):
        raise ValueError("covariance operator produced non-positive eigenvalues "
                         "on this grid; reduce the number of modes")
    modes = np.empty((n_modes, n))
    for j in range(n_modes):
        v = z[:, j] / sqw
        peak = np.argmax(np.abs(v))
        if v[peak] < 0:
            v = -v
        modes[j] = math.sqrt(lam[j]) * v
    if normalize:
        pointwise = np.sqrt((modes ** 2).sum(axis=0))
        modes *= cov.sigma_g / np.maximum(pointwise, 1e-300)
    return KLExpansion(mean_log=g0, modes=modes, eigenvalues=lam[:n_modes].copy())


def _shifted_hermite_means(kl, max_degree, method):
    """E[psi_n(xi + g_j(x))] per dimension, degree and node: (dim, deg+1, n)."""
    dim, n = kl.modes.shape
    out = np.empty((dim, max_degree + 1, n))
    if method == "closed-form":
        for d in range(dim):
            g = kl.modes[d]
            for m in range(max_degree + 1):
                out[d, m] = g ** m / math.sqrt(math.factorial(m))
    elif method == "quadrature":
        npts = max_degree + 2
        x, w = np.polynomial.hermite_e.hermegauss(npts)
        w = w / w.sum()
        for d in range(dim):
            shifted = x[:, None] + kl.modes[d][None, :]       # (npts, n)
            tab = hermite_table(max_degree, shifted)           # (deg+1, npts, n)
            out[d] = np.tensordot(tab, w, axes=(1, 0))
    else:
        raise ValueError(f"unknown method {method!r}")
    return out


def lognormal_gpc_coeffs(kl, basis, method="quadrature"):
    """Chaos coefficients of exp(g_0 + sum_j g_j xi_j) on the given basis.

    nu_l(x) = [prod_d E[psi_{l_d}(xi + g_d(x))]] * exp(g_0 + 1/2 sum_j g_j^2).
    The per-node expectations use factorized 1D Gauss-Hermite quadrature by
    default; the closed form g^n/sqrt(n!) is kept as an independent check.
    """
    if basis.dim != kl.n_modes:
        raise ValueError(f"basis dimension {basis.dim} does not match "
                         f"{kl.n_modes} KL modes")
    env = np.exp(kl.mean_log + 0.5 * kl.log_variance())
    means = _shifted_hermite_means(kl, basis.degree, method)
    coeffs = np.empty((basis.size, kl.mean_log.size))
    for l, alpha in enumerate(basis.indices):
        acc = env.copy()
        for d, a in enumerate(alpha):
            if a:
                acc = acc * means[d, a]
        coeffs[l] = acc
    return coeffs


def sample_viscosity(visc, xi):
    """Realize the truncated expansion at one stochastic point (nodal field).

    Negative nodal values can occur as a truncation artifact; callers flag
    them in reports but the sample is returned as computed.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.size != visc.basis.dim:
        raise ValueError("sample point dimension does not match the basis")
    psi = evaluate_basis(visc.basis, xi[None, :])[0]
    return psi @ visc.coeffs


def build_viscosity(mesh, ws, target_cov, target_mean, n_modes, coeff_degree,
                    length_x=3.0, length_y=0.5, method="quadrature"):
    """Calibrated lognormal viscosity: KL modes plus chaos coefficients."""
    sigma_g = calibrate_sigma(target_cov)
    g0 = calibrate_log_mean(target_mean, sigma_g)
    cov = CovarianceSpec(sigma_g=sigma_g, length_x=length_x, length_y=length_y)
    kl = discrete_kl(cov, mesh, n_modes, ws=ws, mean_log=g0)
    basis = MultiIndexSet(n_modes, coeff_degree)
    coeffs = lognormal_gpc_coeffs(kl, basis, method=method)
    return StochasticViscosity(coeffs=coeffs, basis=basis, kl=kl,
                               cov=target_cov, mean_target=target_mean)
