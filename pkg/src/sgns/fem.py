"""Assembly of the deterministic finite element matrices on Q2-Q1 meshes.

Every element of a mesh from :mod:`sgns.mesh` is an identical axis-aligned
rectangle, so reference-element data is computed once and assembly reduces to
einsum contractions over per-element coefficient values followed by a single
COO scatter.  All integrals use a 3x3 Gauss rule.

Sign convention: the divergence block is the negative weak divergence, so the
two-by-two saddle system reads [[F, B^T], [B, 0]] with right-hand sides that
carry the Dirichlet lifting.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "FemWorkspace",
    "SaddleBlocks",
    "assemble_weighted_laplacian",
    "assemble_divergence",
    "assemble_convection",
    "assemble_newton_derivative",
    "assemble_pcd_operators",
    "apply_dirichlet",
    "constrain_matrix",
    "saddle_matrix",
    "constraint_dofs",
]

_GP = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GW = np.array([5.0, 8.0, 5.0]) / 9.0


def _lag2(t):
    return np.array([0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)])


def _dlag2(t):
    return np.array([t - 0.5, -2.0 * t, t + 0.5])


def _lag1(t):
    return np.array([0.5 * (1.0 - t), 0.5 * (1.0 + t)])


def _dlag1(t):
    return np.array([-0.5, 0.5]) + 0.0 * t


class FemWorkspace:
    """Reference-element tables and scatter indices for one mesh."""

    def __init__(self, mesh):
        self.mesh = mesh
        hx, hy = mesh.hx, mesh.hy
        nq = 9
        self.phi = np.empty((nq, 9))    # Q2 values
        self.dphx = np.empty((nq, 9))   # Q2 physical x-derivatives
        self.dphy = np.empty((nq, 9))
        self.psi = np.empty((nq, 4))    # Q1 values
        self.dpsx = np.empty((nq, 4))
        self.dpsy = np.empty((nq, 4))
        self.wq = np.empty(nq)
        q = 0
        for qj in range(3):
            for qi in range(3):
                xi, eta = _GP[qi], _GP[qj]
                lx, ly = _lag2(xi), _lag2(eta)
                dlx, dly = _dlag2(xi), _dlag2(eta)
                self.phi[q] = np.outer(ly, lx).ravel()
                self.dphx[q] = np.outer(ly, dlx).ravel() * (2.0 / hx)
                self.dphy[q] = np.outer(dly, lx).ravel() * (2.0 / hy)
                mx, my = _lag1(xi), _lag1(eta)
                dmx, dmy = _dlag1(xi), _dlag1(eta)
                self.psi[q] = np.outer(my, mx).ravel()
                self.dpsx[q] = np.outer(my, dmx).ravel() * (2.0 / hx)
                self.dpsy[q] = np.outer(dmy, mx).ravel() * (2.0 / hy)
                self.wq[q] = _GW[qi] * _GW[qj] * (hx * hy / 4.0)
                q += 1

        c2, c1 = mesh.cells_q2, mesh.cells_q1
        self._r22 = np.broadcast_to(c2[:, :, None], (mesh.n_elems, 9, 9))
        self._c22 = np.broadcast_to(c2[:, None, :], (mesh.n_elems, 9, 9))
        self._r11 = np.broadcast_to(c1[:, :, None], (mesh.n_elems, 4, 4))
        self._c11 = np.broadcast_to(c1[:, None, :], (mesh.n_elems, 4, 4))
        self._r12 = np.broadcast_to(c1[:, :, None], (mesh.n_elems, 4, 9))
        self._c12 = np.broadcast_to(c2[:, None, :], (mesh.n_elems, 4, 9))

    def _scatter22(self, local):
        n = self.mesh.n_vnodes
        return sp.csr_matrix(
            (local.ravel(), (self._r22.ravel(), self._c22.ravel())), shape=(n, n))

    def _scatter11(self, local):
        n = self.mesh.n_pnodes
        return sp.csr_matrix(
            (local.ravel(), (self._r11.ravel(), self._c11.ravel())), shape=(n, n))

    def _scatter12(self, local):
        return sp.csr_matrix(
            (local.ravel(), (self._r12.ravel(), self._c12.ravel())),
            shape=(self.mesh.n_pnodes, self.mesh.n_vnodes))

    def q2_at_quad(self, nodal):
        """Values of a Q2 nodal field at all quadrature points, (n_elems, 9)."""
        return np.asarray(nodal)[self.mesh.cells_q2] @ self.phi.T

    # -- scalar building blocks -------------------------------------------

    def scalar_laplacian(self, coeff=None):
        wc = self.wq if coeff is None else self.q2_at_quad(coeff) * self.wq
        if wc.ndim == 1:
            loc = (np.einsum("q,qa,qb->ab", wc, self.dphx, self.dphx)
                   + np.einsum("q,qa,qb->ab", wc, self.dphy, self.dphy))
            loc = np.broadcast_to(loc, (self.mesh.n_elems, 9, 9))
        else:
            loc = (np.einsum("eq,qa,qb->eab", wc, self.dphx, self.dphx)
                   + np.einsum("eq,qa,qb->eab", wc, self.dphy, self.dphy))
        return self._scatter22(loc)

    def scalar_convection(self, wind):
        wind = np.asarray(wind)
        nv = self.mesh.n_vnodes
        wxq = self.q2_at_quad(wind[:nv]) * self.wq
        wyq = self.q2_at_quad(wind[nv:]) * self.wq
        loc = (np.einsum("eq,qa,qb->eab", wxq, self.phi, self.dphx)
               + np.einsum("eq,qa,qb->eab", wyq, self.phi, self.dphy))
        return self._scatter22(loc)

    def scalar_mass(self, coeff_at_quad=None):
        wc = self.wq if coeff_at_quad is None else coeff_at_quad * self.wq
        if wc.ndim == 1:
            loc = np.einsum("q,qa,qb->ab", wc, self.phi, self.phi)
            loc = np.broadcast_to(loc, (self.mesh.n_elems, 9, 9))
        else:
            loc = np.einsum("eq,qa,qb->eab", wc, self.phi, self.phi)
        return self._scatter22(loc)

    def lumped_velocity_mass(self):
        """Row-sum lumping of the scalar Q2 mass matrix (one weight per node)."""
        return np.asarray(self.scalar_mass().sum(axis=1)).ravel()

    def pressure_mass(self):
        loc = np.einsum("q,qc,qd->cd", self.wq, self.psi, self.psi)
        return self._scatter11(np.broadcast_to(loc, (self.mesh.n_elems, 4, 4)))

    def pressure_laplacian(self, coeff=None):
        wc = self.wq if coeff is None else self.q2_at_quad(coeff) * self.wq
        if wc.ndim == 1:
            loc = (np.einsum("q,qc,qd->cd", wc, self.dpsx, self.dpsx)
                   + np.einsum("q,qc,qd->cd", wc, self.dpsy, self.dpsy))
            loc = np.broadcast_to(loc, (self.mesh.n_elems, 4, 4))
        else:
            loc = (np.einsum("eq,qc,qd->ecd", wc, self.dpsx, self.dpsx)
                   + np.einsum("eq,qc,qd->ecd", wc, self.dpsy, self.dpsy))
        return self._scatter11(loc)

    def pressure_convection(self, wind):
        wind = np.asarray(wind)
        nv = self.mesh.n_vnodes
        wxq = self.q2_at_quad(wind[:nv]) * self.wq
        wyq = self.q2_at_quad(wind[nv:]) * self.wq
        loc = (np.einsum("eq,qc,qd->ecd", wxq, self.psi, self.dpsx)
               + np.einsum("eq,qc,qd->ecd", wyq, self.psi, self.dpsy))
        return self._scatter11(loc)

    def scatter_mass_like(self, grad_at_quad):
        loc = np.einsum("eq,qa,qb->eab", grad_at_quad * self.wq, self.phi, self.phi)
        return self._scatter22(loc)


def assemble_weighted_laplacian(ws, coeff):
    """Vector Laplacian weighted by a Q2 nodal coefficient field (n_u x n_u)."""
    coeff = np.asarray(coeff)
    if coeff.shape[0] != ws.mesh.n_vnodes:
        raise ValueError("coefficient field length does not match velocity nodes")
    k = ws.scalar_laplacian(coeff)
    return sp.block_diag((k, k), format="csr")


def assemble_divergence(ws):
    """Negative weak divergence, pressure test against velocity trial (n_p x n_u)."""
    bx = -np.einsum("q,qc,qb->cb", ws.wq, ws.psi, ws.dphx)
    by = -np.einsum("q,qc,qb->cb", ws.wq, ws.psi, ws.dphy)
    ne = ws.mesh.n_elems
    Bx = ws._scatter12(np.broadcast_to(bx, (ne, 4, 9)))
    By = ws._scatter12(np.broadcast_to(by, (ne, 4, 9)))
    return sp.hstack([Bx, By], format="csr")


def assemble_convection(ws, wind):
    """Vector convection matrix for a given discrete wind field (n_u x n_u)."""
    wind = np.asarray(wind)
    if wind.shape[0] != ws.mesh.n_u:
        raise ValueError("wind vector length does not match velocity dofs")
    n = ws.scalar_convection(wind)
    return sp.block_diag((n, n), format="csr")


def assemble_newton_derivative(ws, state):
    """Derivative of the convection term with respect to the wind (n_u x n_u)."""
    state = np.asarray(state)
    if state.shape[0] != ws.mesh.n_u:
        raise ValueError("state vector length does not match velocity dofs")
    nv = ws.mesh.n_vnodes
    cells = ws.mesh.cells_q2
    dudx = state[:nv][cells] @ ws.dphx.T
    dudy = state[:nv][cells] @ ws.dphy.T
    dvdx = state[nv:][cells] @ ws.dphx.T
    dvdy = state[nv:][cells] @ ws.dphy.T
    blocks = [ws.scatter_mass_like(g) for g in (dudx, dudy, dvdx, dvdy)]
    return sp.bmat([[blocks[0], blocks[1]], [blocks[2], blocks[3]]], format="csr")


def assemble_pcd_operators(ws, mean_visc, wind):
    """Pressure-space operators for the convection-diffusion commutator.

    Returns (Ap, Fp, Mp): pressure Laplacian, viscosity-weighted pressure
    convection-diffusion, and pressure mass.  Ap and Fp get Dirichlet rows at
    inflow pressure nodes (channel) or at the pinned dof (enclosed flow);
    elsewhere the natural boundary applies.
    """
    mesh = ws.mesh
    Ap = ws.pressure_laplacian()
    Fp = ws.pressure_laplacian(mean_visc) + ws.pressure_convection(wind)
    if mesh.pin_pressure_dof >= 0:
        fix = np.array([mesh.pin_pressure_dof])
    else:
        x0 = mesh.bounds[0]
        fix = np.flatnonzero(np.abs(mesh.pre_coords[:, 0] - x0) < 1e-12)
    Ap = constrain_matrix(Ap, fix, unit_diagonal=True)
    Fp = constrain_matrix(Fp, fix, unit_diagonal=True, rows_only=True)
    return Ap, Fp.tocsr(), ws.pressure_mass()


def constrain_matrix(mat, dofs, unit_diagonal=True, rows_only=False):
    """Zero constrained rows (and columns unless `rows_only`); optionally put
    ones on the constrained diagonal."""
    n = mat.shape[0]
    keep = np.ones(n)
    keep[dofs] = 0.0
    D = sp.diags(keep)
    out = D @ mat if rows_only else D @ mat @ D
    if unit_diagonal:
        ind = np.zeros(n)
        ind[dofs] = 1.0
        out = out + sp.diags(ind)
    return out.tocsr()


def constraint_dofs(mesh, bc=None):
    """Global constrained dofs and their values in the (velocity, pressure)
    block layout: Dirichlet velocity dofs for both components plus the pinned
    pressure dof for enclosed flow."""
    nodes, vals = mesh.dirichlet_values(bc)
    if not np.all(np.isfinite(vals)):
        raise ValueError("boundary data is undefined on a tagged node")
    nv = mesh.n_vnodes
    dofs = np.concatenate([nodes, nv + nodes])
    values = np.concatenate([vals[:, 0], vals[:, 1]])
    if mesh.pin_pressure_dof >= 0:
        dofs = np.concatenate([dofs, [mesh.n_u + mesh.pin_pressure_dof]])
        values = np.concatenate([values, [0.0]])
    return dofs, values


@dataclass
class SaddleBlocks:
    """Velocity block, divergence block and right-hand sides of one saddle system."""

    F: sp.csr_matrix
    B: sp.csr_matrix
    f: np.ndarray
    g: np.ndarray
    dirichlet_dofs: np.ndarray = None
    dirichlet_values: np.ndarray = None


def apply_dirichlet(blocks, mesh, bc=None):
    """Eliminate Dirichlet velocity dofs symmetrically, moving the lifting to
    the right-hand sides; constrained rows become unit rows carrying the data."""
    nodes, vals2 = mesh.dirichlet_values(bc)
    if not np.all(np.isfinite(vals2)):
        raise ValueError("boundary data is undefined on a tagged node")
    nv = mesh.n_vnodes
    dofs = np.concatenate([nodes, nv + nodes])
    vals = np.concatenate([vals2[:, 0], vals2[:, 1]])

    f = blocks.f - blocks.F[:, dofs] @ vals
    f[dofs] = vals
    g = blocks.g - blocks.B[:, dofs] @ vals
    keep = np.ones(mesh.n_u)
    keep[dofs] = 0.0
    return SaddleBlocks(
        F=constrain_matrix(blocks.F, dofs, unit_diagonal=True),
        B=(blocks.B @ sp.diags(keep)).tocsr(),
        f=f,
        g=g,
        dirichlet_dofs=dofs,
        dirichlet_values=vals,
    )


def saddle_matrix(blocks, pin_pressure_dof=-1):
    """Assemble [[F, B^T], [B, C]] where C pins one pressure dof if requested."""
    n_p = blocks.B.shape[0]
    if pin_pressure_dof >= 0:
        ind = np.zeros(n_p)
        ind[pin_pressure_dof] = 1.0
        C = sp.diags(ind)
        Bc = blocks.B.tolil()
        Bc[pin_pressure_dof, :] = 0.0
        Bc = Bc.tocsr()
        BTc = Bc.T
    else:
        C = sp.csr_matrix((n_p, n_p))
        Bc = blocks.B
        BTc = blocks.B.T
    return sp.bmat([[blocks.F, BTc], [Bc, C]], format="csr")
