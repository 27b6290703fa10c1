"""Flexible GMRES and the preconditioners for the coupled Galerkin systems.

The preconditioner family ranges from the block-diagonal mean solve to a
degree-blocked Gauss-Seidel sweep whose coupling products can be truncated to
low-degree coefficient matrices, with the mean block handled by a direct
factorization or by a pressure convection-diffusion approximation.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

__all__ = [
    "FgmresConfig",
    "FgmresResult",
    "fgmres",
    "HierarchicalBlocking",
    "PreconditionerSpec",
    "MeanBlockLU",
    "PcdApply",
    "mean_based",
    "kronecker_product",
    "block_gauss_seidel",
    "hierarchical_gauss_seidel",
    "make_preconditioner",
]


@dataclass
class FgmresConfig:
    tol: float = 1e-8
    maxit: int = 500
    restart: int = 0  # 0 means no restart

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.maxit < 1:
            raise ValueError("need at least one iteration")


@dataclass
class FgmresResult:
    x: np.ndarray
    iterations: int
    residuals: list
    converged: bool
    final_residual: float


def _as_matvec(op):
    if callable(op) and not hasattr(op, "matvec"):
        return op
    return op.matvec


def fgmres(op, b, precond=None, cfg=None, x0=None):
    """Right-preconditioned flexible GMRES.

    The preconditioner may change from one iteration to the next (inner
    iterative solves are allowed); the preconditioned directions are stored
    so the minimization remains valid.  Convergence is declared when the
    residual satisfies ||r|| <= tol * ||b||; the returned `final_residual`
    is the true relative residual recomputed from the solution.
    """
    cfg = cfg or FgmresConfig()
    A = _as_matvec(op)
    M = (lambda v: v) if precond is None else _as_matvec(precond)
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return FgmresResult(np.zeros(n), 0, [0.0], True, 0.0)
    target = cfg.tol * bnorm
    m = cfg.restart if cfg.restart > 0 else cfg.maxit

    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - A(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    residuals = [beta / bnorm]
    iters = 0

    while True:
        V = np.empty((m + 1, n))
        Z = np.empty((m, n))
        Hh = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        V[0] = r / beta
        g[0] = beta
        j = -1
        stop = False
        while j + 1 < m and iters < cfg.maxit:
            j += 1
            Z[j] = M(V[j])
            w = A(Z[j])
            for i in range(j + 1):  # modified Gram-Schmidt
                Hh[i, j] = np.dot(V[i], w)
                w -= Hh[i, j] * V[i]
            hj1 = np.linalg.norm(w)
            Hh[j + 1, j] = hj1
            if hj1 > 0.0:
                V[j + 1] = w / hj1
            for i in range(j):
                t = cs[i] * Hh[i, j] + sn[i] * Hh[i + 1, j]
                Hh[i + 1, j] = -sn[i] * Hh[i, j] + cs[i] * Hh[i + 1, j]
                Hh[i, j] = t
            denom = math.hypot(Hh[j, j], Hh[j + 1, j])
            if denom == 0.0:
                denom, Hh[j, j] = 1.0, 1.0  # exact breakdown, direction exhausted
            cs[j] = Hh[j, j] / denom
            sn[j] = Hh[j + 1, j] / denom
            Hh[j, j] = denom
            Hh[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            iters += 1
            res = abs(g[j + 1])
            residuals.append(res / bnorm)
            if res <= target or hj1 == 0.0:
                stop = True
                break
        if j >= 0:
            y = np.zeros(j + 1)
            for i in range(j, -1, -1):
                y[i] = (g[i] - Hh[i, i + 1:j + 1] @ y[i + 1:j + 1]) / Hh[i, i]
            x = x + Z[:j + 1].T @ y
        r = b - A(x)
        beta = np.linalg.norm(r)
        if stop or beta <= target or iters >= cfg.maxit:
            return FgmresResult(x, iters, residuals, beta <= target, beta / bnorm)


@dataclass
class HierarchicalBlocking:
    """Partition of the stochastic modes by total polynomial degree."""

    degrees: list          # degree value per block
    ranges: list           # (start, stop) mode index range per block

    @classmethod
    def from_basis(cls, basis):
        degrees, ranges = [], []
        for q in range(basis.degree + 1):
            rng = basis.degree_range(q)
            if rng[1] > rng[0]:
                degrees.append(q)
                ranges.append(rng)
        expected = [math.comb(basis.dim + q - 1, q) for q in degrees]
        actual = [b - a for a, b in ranges]
        if expected != actual:
            raise ValueError("degree blocks do not partition the basis")
        return cls(degrees=degrees, ranges=ranges)


@dataclass
class PreconditionerSpec:
    """Choice of preconditioner for the coupled solves.

    kind: one of "mb", "k", "bgs", "ahgs", "ahgs-pcd", "ahgs-pcd-it".
    trunc_degree: coupling truncation; keep coefficient matrices of total
        degree <= trunc_degree in the Gauss-Seidel coupling products
        (None keeps everything).
    inner_iterations: inner GMRES steps for the "ahgs-pcd-it" variant.
    diag: "mean" approximates every diagonal block by the mean block; "true"
        solves the actual mode-diagonal blocks (reference variant).
    """

    kind: str = "ahgs"
    trunc_degree: int = None
    inner_iterations: int = 20
    diag: str = "mean"

    def __post_init__(self):
        kinds = ("mb", "k", "bgs", "ahgs", "ahgs-pcd", "ahgs-pcd-it")
        if self.kind not in kinds:
            raise ValueError(f"preconditioner kind must be one of {kinds}")
        if self.inner_iterations < 1:
            raise ValueError("inner iteration count must be >= 1")
        if self.diag not in ("mean", "true"):
            raise ValueError("diag must be 'mean' or 'true'")


class MeanBlockLU:
    """Direct factorization of the mean saddle block, shared by the family."""

    def __init__(self, mean_matrix):
        self.lu = spla.splu(mean_matrix.tocsc())

    def solve(self, R):
        return self.lu.solve(R)


class PcdApply:
    """One application of the pressure convection-diffusion block solve.

    Upper-triangular action for [[F, B^T], [0, -S]] with the Schur inverse
    approximated by Ap^{-1} Fp Mp^{-1}; the velocity block is solved directly.
    """

    def __init__(self, Fv, BT, Ap, Fp, Mp):
        self.lu_F = spla.splu(Fv.tocsc())
        self.BT = BT
        self.lu_Ap = spla.splu(Ap.tocsc())
        self.Fp = Fp
        self.lu_Mp = spla.splu(Mp.tocsc())
        self.n_u = BT.shape[0]

    def solve(self, R):
        R = np.asarray(R)
        squeeze = R.ndim == 1
        if squeeze:
            R = R[:, None]
        ru, rp = R[:self.n_u], R[self.n_u:]
        p = -self.lu_Ap.solve(self.Fp @ self.lu_Mp.solve(rp))
        u = self.lu_F.solve(ru - self.BT @ p)
        out = np.vstack([u, p])
        return out[:, 0] if squeeze else out


class _InnerGmresSolver:
    """Fixed number of PCD-preconditioned GMRES steps on a given block."""

    def __init__(self, block, pcd, iterations):
        self.block = block
        self.pcd = pcd
        self.cfg = FgmresConfig(tol=1e-14, maxit=iterations)

    def solve(self, R):
        R = np.asarray(R)
        if R.ndim == 1:
            return fgmres(lambda v: self.block @ v, R,
                          precond=self.pcd.solve, cfg=self.cfg).x
        return np.column_stack([self.solve(R[:, i]) for i in range(R.shape[1])])


def mean_based(op, mean_solver):
    """Independent mean-block solves for every stochastic mode."""
    M, nd = op.n_modes, op.n_det

    def apply(w):
        W = w.reshape(M, nd).T
        return np.ascontiguousarray(mean_solver.solve(W).T).ravel()

    return apply


def kronecker_product(op, mean_solver):
    """Closest Kronecker-product approximation: the coefficient factor is the
    Frobenius-fit combination sum_l [tr(F_l^T F_0)/tr(F_0^T F_0)] H_l."""
    M, nd = op.n_modes, op.n_det
    F0 = op.vel_blocks[0]
    t0 = float((F0.multiply(F0)).sum())
    Hhat = np.eye(M)
    for l in range(1, len(op.vel_blocks)):
        tl = float((op.vel_blocks[l].multiply(F0)).sum())
        if tl:
            Hhat = Hhat + (tl / t0) * op.hmats[l][:M, :M]
    try:
        Hinv = np.linalg.inv(Hhat)
    except np.linalg.LinAlgError:
        Hinv = np.eye(M)  # singular fit: fall back to the mean-based form

    def apply(w):
        W = w.reshape(M, nd).T
        Y = mean_solver.solve(W)
        return np.ascontiguousarray((Y @ Hinv).T).ravel()

    return apply


def block_gauss_seidel(op, mean_solver):
    """One forward sweep over all stochastic modes with mean-block diagonal
    solves and untruncated coupling products."""
    M, nd, nu = op.n_modes, op.n_det, op.n_u

    def apply(w):
        W = w.reshape(M, nd)
        V = np.zeros_like(W)
        Uv = np.zeros((nu, M))
        for j in range(M):
            rhs = W[j].copy()
            if j:
                rhs[:nu] -= op.velocity_coupling(
                    Uv[:, :j], list(range(j)), [j])[:, 0]
            V[j] = mean_solver.solve(rhs)
            Uv[:, j] = V[j, :nu]
        return V.ravel()

    return apply


def hierarchical_gauss_seidel(op, blocking, solvers, trunc=None):
    """Degree-blocked Gauss-Seidel sweep: solve the degree-0 block, then for
    each higher degree subtract the (possibly truncated) coupling with all
    lower degrees and solve the diagonal approximation blockwise.

    `solvers` is either a single shared mean-block solver or one solver per
    stochastic mode (for true-diagonal variants).
    """
    M, nd, nu = op.n_modes, op.n_det, op.n_u
    per_mode = isinstance(solvers, (list, tuple))

    def solve_block(start, stop, R):
        if not per_mode:
            return solvers.solve(R)
        return np.column_stack([solvers[j].solve(R[:, i])
                                for i, j in enumerate(range(start, stop))])

    def apply(w):
        W = w.reshape(M, nd)
        V = np.zeros_like(W)
        for b, (start, stop) in enumerate(blocking.ranges):
            R = W[start:stop].T.copy()
            if start:
                cols = list(range(start))
                rows = list(range(start, stop))
                R[:nu] -= op.velocity_coupling(
                    np.ascontiguousarray(V[:start, :nu].T), cols, rows, trunc=trunc)
            V[start:stop] = solve_block(start, stop, R).T
        return V.ravel()

    return apply


def make_preconditioner(spec, op, basis, pcd_ops=None, mean_matrix=None):
    """Build the preconditioner callable described by `spec` for operator `op`.

    `pcd_ops` supplies (Ap, Fp, Mp) when a pressure convection-diffusion
    variant is requested; `mean_matrix` overrides the operator's own mean
    block (it must already carry the boundary conditions).
    """
    mean = op.mean_matrix() if mean_matrix is None else mean_matrix
    mean_solver = None
    if spec.kind in ("mb", "k", "bgs") or (spec.kind == "ahgs" and spec.diag == "mean"):
        mean_solver = MeanBlockLU(mean)
    trunc = (None if spec.trunc_degree is None
             else op.H.truncation_set(spec.trunc_degree))

    if spec.kind == "mb":
        return mean_based(op, mean_solver)
    if spec.kind == "k":
        return kronecker_product(op, mean_solver)
    if spec.kind == "bgs":
        return block_gauss_seidel(op, mean_solver)

    blocking = HierarchicalBlocking.from_basis(basis)
    if spec.kind == "ahgs":
        if spec.diag == "true":
            solvers = [MeanBlockLU(op.mode_diagonal_matrix(j))
                       for j in range(op.n_modes)]
        else:
            solvers = mean_solver
        return hierarchical_gauss_seidel(op, blocking, solvers, trunc=trunc)

    if pcd_ops is None:
        raise ValueError("pressure convection-diffusion operators required "
                         f"for {spec.kind!r}")
    Ap, Fp, Mp = pcd_ops
    nu = op.n_u
    pcd = PcdApply(mean[:nu, :nu].tocsc(), mean[:nu, nu:].tocsr(), Ap, Fp, Mp)
    if spec.kind == "ahgs-pcd":
        return hierarchical_gauss_seidel(op, blocking, pcd, trunc=trunc)
    # ahgs-pcd-it: inner GMRES on the true mode-diagonal blocks
    solvers = [_InnerGmresSolver(op.mode_diagonal_matrix(j).tocsr(), pcd,
                                 spec.inner_iterations)
               for j in range(op.n_modes)]
    return hierarchical_gauss_seidel(op, blocking, solvers, trunc=trunc)
