"""Coupled stochastic Galerkin linear algebra.

The global operator is a Kronecker sum: small symmetric coefficient matrices
from the chaos triple products tensored with deterministic saddle-point
blocks.  The unknown vector interleaves one (velocity, pressure) pair per
stochastic mode.  The operator is applied matrix-free; an explicit sparse
assembly is provided as an oracle for small problems.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .fem import FemWorkspace, constrain_matrix
from .gpc import MultiIndexSet, triple_products

__all__ = [
    "StochasticOperator",
    "GalerkinState",
    "GalerkinSystem",
    "StaleStateError",
    "kron_matvec",
    "mode_extract",
    "mode_inject",
]


class StaleStateError(RuntimeError):
    """Linearization state no longer matches the system iterate."""


def saddle_from_blocks(Fv, B, pin_dof=-1):
    """[[F, B^T], [B, C]] in CSC form, with C pinning one pressure dof."""
    n_p = B.shape[0]
    if pin_dof >= 0:
        ind = np.zeros(n_p)
        ind[pin_dof] = 1.0
        C = sp.diags(ind)
    else:
        C = sp.csr_matrix((n_p, n_p))
    return sp.bmat([[Fv, B.T], [B, C]], format="csc")


class StochasticOperator:
    """Matrix-free sum over coefficient matrices H_l tensored with mode blocks.

    `vel_blocks[l]` is the velocity block of mode matrix l; block 0 also
    carries the divergence coupling `B` (and the pressure pin for enclosed
    flow).  Only block 0 couples velocity and pressure because H_0 is the
    identity.
    """

    def __init__(self, vel_blocks, B, H, n_modes, pin_dof=-1):
        self.vel_blocks = vel_blocks
        self.B = B.tocsr()
        self.BT = self.B.T.tocsr()
        self.H = H
        self.n_modes = int(n_modes)
        self.pin_dof = int(pin_dof)
        self.n_u = B.shape[1]
        self.n_p = B.shape[0]
        self.n_det = self.n_u + self.n_p
        self.shape = (self.n_modes * self.n_det, self.n_modes * self.n_det)
        self.block_applications = 0  # cost accounting: velocity-block products

    @property
    def hmats(self):
        return self.H.dense()

    def matvec(self, x, trunc=None):
        """Apply the operator; `trunc` restricts the sum to those coefficient
        indices (the mode-0 identity term is always applied)."""
        M, nd, nu = self.n_modes, self.n_det, self.n_u
        X = np.asarray(x).reshape(M, nd)
        U = X[:, :nu].T.copy()                       # (n_u, M)
        P = X[:, nu:].T                               # (n_p, M)
        hmats = self.hmats
        idx = range(len(self.vel_blocks)) if trunc is None else trunc
        outU = np.zeros_like(U)
        for l in idx:
            Hl = hmats[l][: M, : M]
            if l and not Hl.any():
                continue
            Y = self.vel_blocks[l] @ U
            outU += Y @ Hl if l else Y
            self.block_applications += M
        outU += self.BT @ P
        outP = self.B @ U
        if self.pin_dof >= 0:
            outP[self.pin_dof, :] += P[self.pin_dof, :]
        out = np.empty_like(X)
        out[:, :nu] = outU.T
        out[:, nu:] = outP.T
        return out.ravel()

    def __matmul__(self, x):
        return self.matvec(x)

    def velocity_coupling(self, V, col_modes, row_modes, trunc=None):
        """Coupling product: for row modes j, sum_{l,k} h_{l,jk} F_l v_k over
        the given column modes.  `V` holds the column-mode velocity parts as
        columns, shape (n_u, len(col_modes)).  Mode 0 never contributes off
        the diagonal (H_0 = I)."""
        hmats = self.hmats
        idx = range(1, len(self.vel_blocks)) if trunc is None else [l for l in trunc if l]
        out = np.zeros((self.n_u, len(row_modes)))
        for l in idx:
            Hsub = hmats[l][np.ix_(col_modes, row_modes)]
            if not Hsub.any():
                continue
            out += (self.vel_blocks[l] @ V) @ Hsub
            self.block_applications += len(col_modes)
        return out

    def mode_diagonal_matrix(self, j):
        """Explicit sparse diagonal block sum_l h_{l,jj} (mode matrix l)."""
        hmats = self.hmats
        Fv = self.vel_blocks[0].copy()
        for l in range(1, len(self.vel_blocks)):
            hjj = hmats[l][j, j]
            if hjj:
                Fv = Fv + hjj * self.vel_blocks[l]
        return self._saddle(Fv)

    def mean_matrix(self):
        """Explicit sparse mode-0 block [[F_0, B^T], [B, pin]]."""
        return self._saddle(self.vel_blocks[0])

    def _saddle(self, Fv):
        return saddle_from_blocks(Fv, self.B, self.pin_dof)

    def assemble_global(self, trunc=None):
        """Explicit sparse Kronecker-sum assembly (oracle for small problems)."""
        M, nu, npr = self.n_modes, self.n_u, self.n_p
        zup = sp.csr_matrix((nu, npr))
        zpu = sp.csr_matrix((npr, nu))
        zpp = sp.csr_matrix((npr, npr))
        idx = range(len(self.vel_blocks)) if trunc is None else trunc
        G = None
        for l in idx:
            Hl = self.H.mats[l][:M, :M]
            if Hl.nnz == 0:
                continue
            blk = sp.bmat([[self.vel_blocks[l], zup], [zpu, zpp]])
            term = sp.kron(Hl, blk)
            G = term if G is None else G + term
        if self.pin_dof >= 0:
            ind = np.zeros(npr)
            ind[self.pin_dof] = 1.0
            C = sp.diags(ind)
        else:
            C = zpp
        coupling = sp.bmat([[sp.csr_matrix((nu, nu)), self.BT], [self.B, C]])
        G = G + sp.kron(sp.eye(M), coupling)
        return G.tocsr()


def kron_matvec(op, x, trunc=None):
    """Kronecker-sum product, optionally truncated to the coefficient indices
    in `trunc` (the mode-0 term is always retained)."""
    return op.matvec(x, trunc=trunc)


def mode_extract(v, k, n_u, n_det):
    """Velocity/pressure pair of stochastic mode k from the interleaved vector."""
    n_modes = v.size // n_det
    if not 0 <= k < n_modes:
        raise IndexError(f"mode {k} out of range [0, {n_modes})")
    blk = v[k * n_det:(k + 1) * n_det]
    return blk[:n_u].copy(), blk[n_u:].copy()


def mode_inject(v, k, u, p, n_u, n_det):
    """Inverse of :func:`mode_extract`; writes the pair into mode k in place."""
    n_modes = v.size // n_det
    if not 0 <= k < n_modes:
        raise IndexError(f"mode {k} out of range [0, {n_modes})")
    v[k * n_det:k * n_det + n_u] = u
    v[k * n_det + n_u:(k + 1) * n_det] = p
    return v


@dataclass
class GalerkinState:
    """Per-iterate matrices; rebuilt whenever the nonlinear iterate moves."""

    version: int
    N_raw: list = field(repr=False)      # convection blocks of the iterate modes
    N_hat: list = field(repr=False)
    W_raw: list = field(repr=False)      # Newton derivative blocks
    W_hat: list = field(repr=False)


class GalerkinSystem:
    """Everything needed to set up and evaluate the coupled problem on one mesh.

    Holds the raw (unconstrained) matrices used for residual evaluation and
    the constrained ones used in correction solves; the nonlinear iterate
    carries its Dirichlet values, so corrections are always homogeneous.
    """

    def __init__(self, mesh, visc, degree, bc=None, ws=None, H=None):
        self.mesh = mesh
        self.visc = visc
        self.ws = ws if ws is not None else FemWorkspace(mesh)
        self.basis = MultiIndexSet(visc.basis.dim, degree)
        if H is None:
            H = triple_products(visc.basis.dim, degree, visc.basis.degree)
        if H.coeff_set.size != visc.n_terms:
            raise ValueError("triple-product tensor does not match the "
                             "viscosity expansion length")
        if visc.basis.degree < degree:
            raise ValueError("viscosity expansion degree must be at least the "
                             "solution degree (use twice the solution degree)")
        self.H = H
        self.n_modes = self.basis.size
        self.n_u = mesh.n_u
        self.n_p = mesh.n_p
        self.n_det = self.n_u + self.n_p
        self.ndof = self.n_modes * self.n_det

        self.A_raw = [fem.assemble_weighted_laplacian(self.ws, visc.coeffs[l])
                      for l in range(visc.n_terms)]
        self.B_raw = fem.assemble_divergence(self.ws)

        nodes, vals2 = mesh.dirichlet_values(bc)
        if not np.all(np.isfinite(vals2)):
            raise ValueError("boundary data is undefined on a tagged node")
        nv = mesh.n_vnodes
        self.vel_dirichlet = np.concatenate([nodes, nv + nodes])
        self.vel_dirichlet_values = np.concatenate([vals2[:, 0], vals2[:, 1]])
        self.pin_dof = mesh.pin_pressure_dof

        keep = np.ones(self.n_u)
        keep[self.vel_dirichlet] = 0.0
        self._keep_diag = sp.diags(keep)
        self.A_hat = [constrain_matrix(self.A_raw[0], self.vel_dirichlet, True)]
        self.A_hat += [constrain_matrix(a, self.vel_dirichlet, False)
                       for a in self.A_raw[1:]]
        Bc = (self.B_raw @ self._keep_diag).tolil()
        if self.pin_dof >= 0:
            Bc[self.pin_dof, :] = 0.0
        self.B_hat = Bc.tocsr()

        self.iterate_version = 0
        self._y_norm = None

    # -- iterate bookkeeping ----------------------------------------------

    def bc_vector(self):
        """Initial iterate: boundary values in mode 0, zero elsewhere."""
        v = np.zeros(self.ndof)
        v[self.vel_dirichlet] = self.vel_dirichlet_values
        return v

    def advance_iterate(self):
        self.iterate_version += 1

    def linearize(self, v, newton=True):
        """Assemble convection (and Newton derivative) blocks of the iterate."""
        N_raw, N_hat, W_raw, W_hat = [], [], [], []
        X = v.reshape(self.n_modes, self.n_det)
        for k in range(self.n_modes):
            wind = X[k, :self.n_u]
            Nk = fem.assemble_convection(self.ws, wind)
            N_raw.append(Nk)
            N_hat.append(constrain_matrix(Nk, self.vel_dirichlet, False))
            if newton:
                Wk = fem.assemble_newton_derivative(self.ws, wind)
                W_raw.append(Wk)
                W_hat.append(constrain_matrix(Wk, self.vel_dirichlet, False))
        return GalerkinState(version=self.iterate_version, N_raw=N_raw,
                             N_hat=N_hat, W_raw=W_raw, W_hat=W_hat)

    def _check_state(self, state):
        if state is not None and state.version != self.iterate_version:
            raise StaleStateError("operator requested for an outdated iterate; "
                                  "rebuild the linearization state")

    # -- operators ----------------------------------------------------------

    def stokes_operator(self, constrained=True):
        blocks = self.A_hat if constrained else self.A_raw
        B = self.B_hat if constrained else self.B_raw
        pin = self.pin_dof if constrained else -1
        return StochasticOperator(list(blocks), B, self.H, self.n_modes, pin)

    def linearized_operator(self, state, mode="picard", constrained=True):
        """Mode blocks A_l + N_l (+ W_l for Newton); convection blocks exist
        only for iterate modes, viscosity blocks for all coefficient terms."""
        self._check_state(state)
        if mode not in ("picard", "newton"):
            raise ValueError(f"unknown linearization {mode!r}")
        if mode == "newton" and not state.W_hat:
            raise ValueError("state was linearized without Newton blocks")
        A = self.A_hat if constrained else self.A_raw
        N = state.N_hat if constrained else state.N_raw
        W = state.W_hat if constrained else state.W_raw
        blocks = []
        for l in range(self.visc.n_terms):
            blk = A[l]
            if l < self.n_modes:
                blk = blk + N[l]
                if mode == "newton":
                    blk = blk + W[l]
            blocks.append(blk.tocsr())
        B = self.B_hat if constrained else self.B_raw
        pin = self.pin_dof if constrained else -1
        return StochasticOperator(blocks, B, self.H, self.n_modes, pin)

    def mean_block_matrix(self, state, mode="picard"):
        """Constrained mean saddle block of the linearized operator."""
        self._check_state(state)
        blk = self.A_hat[0] + state.N_hat[0]
        if mode == "newton":
            blk = blk + state.W_hat[0]
        return saddle_from_blocks(blk.tocsr(), self.B_hat, self.pin_dof)

    # -- residuals ----------------------------------------------------------

    def _zero_constrained(self, r):
        R = r.reshape(self.n_modes, self.n_det)
        R[:, self.vel_dirichlet] = 0.0
        if self.pin_dof >= 0:
            R[:, self.n_u + self.pin_dof] = 0.0
        return R.ravel()

    def stokes_residual(self, v):
        op = self.stokes_operator(constrained=False)
        return self._zero_constrained(-op.matvec(v))

    def residual(self, v, state):
        """Algebraic residual with the convection-linearized (Picard-form)
        operator at the current iterate, zeroed on constrained rows."""
        self._check_state(state)
        op = self.linearized_operator(state, mode="picard", constrained=False)
        return self._zero_constrained(-op.matvec(v))

    def rhs_norm(self):
        """Norm of the boundary-data right-hand side of the Stokes system,
        the fixed normalization of the nonlinear stopping test."""
        if self._y_norm is None:
            self._y_norm = float(np.linalg.norm(self.stokes_residual(self.bc_vector())))
        return self._y_norm
