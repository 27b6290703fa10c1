"""Multivariate Hermite polynomial chaos: index sets, evaluation, quadrature,
and the triple-product coefficient matrices that couple stochastic modes.

All bases are normalized probabilists' Hermite polynomials, orthonormal under
the standard Gaussian product measure.
"""

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

__all__ = [
    "MultiIndexSet",
    "TripleProductTensor",
    "QuadratureRule",
    "total_degree_indices",
    "hermite_eval",
    "hermite_table",
    "evaluate_basis",
    "triple_products",
    "gauss_hermite_rule",
    "smolyak_rule",
]


class MultiIndexSet:
    """Total-degree multi-index set in graded order.

    Indices alpha in N^dim with |alpha| <= degree, sorted by total degree and
    then lexicographically.  Index 0 is always the zero multi-index and the
    ordering is stable across runs, which fixes the block layout of every
    downstream operator.
    """

    def __init__(self, dim, degree):
        if dim < 1:
            raise ValueError(f"stochastic dimension must be >= 1, got {dim}")
        if degree < 0:
            raise ValueError(f"total degree must be >= 0, got {degree}")
        self.dim = int(dim)
        self.degree = int(degree)
        idx = [a for a in itertools.product(range(degree + 1), repeat=dim)
               if sum(a) <= degree]
        idx.sort(key=lambda a: (sum(a), a))
        self.indices = np.asarray(idx, dtype=np.int64)
        self.total_degrees = self.indices.sum(axis=1)

    def __len__(self):
        return self.indices.shape[0]

    @property
    def size(self):
        return self.indices.shape[0]

    def degree_range(self, q):
        """Contiguous index range [start, stop) of multi-indices with |alpha| == q."""
        mask = self.total_degrees == q
        if not mask.any():
            return (0, 0)
        pos = np.flatnonzero(mask)
        return (int(pos[0]), int(pos[-1]) + 1)

    def __repr__(self):
        return f"MultiIndexSet(dim={self.dim}, degree={self.degree}, size={self.size})"


def total_degree_indices(dim, degree):
    """Graded total-degree multi-index set of size C(dim+degree, degree)."""
    return MultiIndexSet(dim, degree)


def hermite_table(max_degree, x):
    """Normalized probabilists' Hermite values psi_n(x) for n = 0..max_degree.

    Parameters
    ----------
    max_degree : int
        Largest univariate degree.
    x : array_like
        Evaluation points, any shape.

    Returns
    -------
    ndarray of shape (max_degree+1,) + x.shape
        Row n holds He_n(x)/sqrt(n!), computed by the monic three-term
        recurrence He_{n+1} = x He_n - n He_{n-1}.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((max_degree + 1,) + x.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = x
    for n in range(1, max_degree):
        out[n + 1] = x * out[n] - n * out[n - 1]
    for n in range(2, max_degree + 1):
        out[n] /= math.sqrt(math.factorial(n))
    return out


def hermite_eval(alpha, xi):
    """Evaluate the normalized multivariate Hermite polynomial psi_alpha at xi."""
    alpha = np.atleast_1d(np.asarray(alpha, dtype=np.int64))
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if alpha.shape[-1] != xi.shape[-1]:
        raise ValueError(f"dimension mismatch: index has {alpha.shape[-1]}, "
                         f"point has {xi.shape[-1]} components")
    val = 1.0
    for d in range(alpha.shape[-1]):
        tab = hermite_table(int(alpha[d]), xi[..., d])
        val = val * tab[int(alpha[d])]
    return val


def evaluate_basis(mset, points):
    """Evaluate every basis polynomial of `mset` at a batch of points.

    Parameters
    ----------
    mset : MultiIndexSet
    points : ndarray (n, dim) or (dim,)

    Returns
    -------
    ndarray (n, size) with entry [q, k] = psi_k(points[q]).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != mset.dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, basis needs {mset.dim}")
    tabs = [hermite_table(mset.degree, pts[:, d]) for d in range(mset.dim)]
    out = np.ones((pts.shape[0], mset.size))
    for k, alpha in enumerate(mset.indices):
        for d, a in enumerate(alpha):
            if a:
                out[:, k] *= tabs[d][a]
    return out


@lru_cache(maxsize=None)
def _uni_triple(a, b, c):
    # E[psi_a psi_b psi_c] for normalized He; zero unless a+b+c is even and
    # the indices satisfy the triangle condition.
    s2 = a + b + c
    if s2 % 2:
        return 0.0
    s = s2 // 2
    if s < a or s < b or s < c:
        return 0.0
    return math.sqrt(math.factorial(a) * math.factorial(b) * math.factorial(c)) / (
        math.factorial(s - a) * math.factorial(s - b) * math.factorial(s - c))


@dataclass
class TripleProductTensor:
    """Coefficient matrices with entries E[psi_l psi_j psi_k].

    One symmetric size-M matrix per coefficient index l = 0..M_nu-1, where
    j, k run over the solution basis.  Matrix 0 is the identity.
    """

    solution_set: MultiIndexSet
    coeff_set: MultiIndexSet
    mats: list = field(repr=False)  # list of csr_matrix, order M x M

    _dense: list = field(default=None, repr=False)

    @property
    def n_coeff(self):
        return len(self.mats)

    @property
    def order(self):
        return self.solution_set.size

    def dense(self):
        """Small dense copies of the matrices, cached (M is at most a few dozens)."""
        if self._dense is None:
            self._dense = [np.asarray(m.todense()) for m in self.mats]
        return self._dense

    def nnz_total(self):
        """Total number of nonzeros over all full matrices."""
        return int(sum(m.nnz for m in self.mats))

    def coupling_nnz(self, trunc):
        """Nonzero coefficients in the degree-blocked lower triangle.

        Counts, with multiplicity over the retained matrices `trunc`, the
        entries h_{l,jk} != 0 with total_degree(j) > total_degree(k): the
        scalars actually used by the hierarchical coupling products.
        """
        deg = self.solution_set.total_degrees
        count = 0
        for l in trunc:
            rows, cols = self.mats[l].nonzero()
            count += int(np.count_nonzero(deg[rows] > deg[cols]))
        return count

    def truncation_set(self, max_degree):
        """Indices l of coefficient polynomials with total degree <= max_degree."""
        return np.flatnonzero(self.coeff_set.total_degrees <= max_degree)


def triple_products(dim, degree_solution, degree_coefficient, method="closed-form"):
    """Build the triple-product tensor for a solution basis of total degree
    `degree_solution` against a coefficient basis of total degree
    `degree_coefficient` (typically twice the solution degree).

    `method` selects the univariate product-linearization closed form
    (default, exact) or a Gauss-Hermite quadrature evaluation; the two agree
    to roundoff and the quadrature path is retained as an independent check.
    """
    sol = MultiIndexSet(dim, degree_solution)
    coeff = MultiIndexSet(dim, degree_coefficient)
    if method == "closed-form":
        uni = _uni_triple
    elif method == "quadrature":
        npts = degree_solution + degree_coefficient + 2
        x, w = np.polynomial.hermite_e.hermegauss(npts)
        w = w / w.sum()
        max_deg = max(degree_solution, degree_coefficient)
        tab = hermite_table(max_deg, x)

        def uni(a, b, c):
            v = float(np.dot(w, tab[a] * tab[b] * tab[c]))
            return 0.0 if abs(v) < 1e-13 else v
    else:
        raise ValueError(f"unknown method {method!r}")

    M = sol.size
    mats = []
    for al in coeff.indices:
        rows, cols, vals = [], [], []
        for j in range(M):
            aj = sol.indices[j]
            for k in range(j + 1):
                ak = sol.indices[k]
                v = 1.0
                for d in range(dim):
                    v *= uni(int(al[d]), int(aj[d]), int(ak[d]))
                    if v == 0.0:
                        break
                if v != 0.0:
                    rows.append(j)
                    cols.append(k)
                    vals.append(v)
                    if k != j:
                        rows.append(k)
                        cols.append(j)
                        vals.append(v)
        mats.append(sp.csr_matrix((vals, (rows, cols)), shape=(M, M)))
    return TripleProductTensor(solution_set=sol, coeff_set=coeff, mats=mats)


@dataclass
class QuadratureRule:
    """Quadrature points and weights for the standard Gaussian measure on R^dim."""

    points: np.ndarray   # (n, dim)
    weights: np.ndarray  # (n,)
    kind: str            # "tensor" or "smolyak"
    order: int           # points per dimension (tensor) or sparse-grid level

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def integrate(self, values):
        """Weighted sum of per-point values (first axis indexes points)."""
        values = np.asarray(values)
        return np.tensordot(self.weights, values, axes=(0, 0))


def _gauss_hermite_1d(n):
    # Probabilists' weight exp(-x^2/2); normalize weights to sum to one.
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / w.sum()


def gauss_hermite_rule(n_points, dim):
    """Full tensor Gauss-Hermite rule, exact per dimension through degree 2n-1."""
    if n_points < 1:
        raise ValueError("need at least one point per dimension")
    x, w = _gauss_hermite_1d(n_points)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    pts = np.column_stack([g.ravel() for g in grids])
    wts = np.ones(pts.shape[0])
    for g in np.meshgrid(*([w] * dim), indexing="ij"):
        wts *= g.ravel()
    return QuadratureRule(points=pts, weights=wts, kind="tensor", order=n_points)


def _compositions(total, parts):
    # All tuples of `parts` positive integers summing to `total`.
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def smolyak_rule(level, dim):
    """Sparse Gauss-Hermite rule by the Smolyak combination formula.

    Uses linear growth (the level-i univariate rule has i points, Gauss
    points are not nested), so the rule at `level` integrates total-degree
    2*level - 1 polynomials exactly.  Weights may be negative; they sum to 1.
    """
    if level < 1:
        raise ValueError("sparse grid level must be >= 1")
    if dim == 1:
        x, w = _gauss_hermite_1d(level)
        order = np.argsort(x)
        return QuadratureRule(points=x[order, None], weights=w[order],
                              kind="smolyak", order=level)

    q = level + dim - 1
    rules = {m: _gauss_hermite_1d(m) for m in range(1, level + 1)}
    acc = {}
    for total in range(max(dim, q - dim + 1), q + 1):
        coeff = (-1.0) ** (q - total) * math.comb(dim - 1, q - total)
        for i in _compositions(total, dim):
            pts1d = [rules[m][0] for m in i]
            wts1d = [rules[m][1] for m in i]
            for combo in itertools.product(*(range(m) for m in i)):
                pt = tuple(pts1d[d][combo[d]] for d in range(dim))
                wt = coeff
                for d in range(dim):
                    wt *= wts1d[d][combo[d]]
                key = tuple(round(c, 12) for c in pt)
                if key in acc:
                    acc[key] = (acc[key][0], acc[key][1] + wt)
                else:
                    acc[key] = (pt, wt)
    items = sorted(acc.items())
    pts = np.array([v[0] for _, v in items])
    wts = np.array([v[1] for _, v in items])
    keep = np.abs(wts) > 1e-14
    return QuadratureRule(points=pts[keep], weights=wts[keep],
                          kind="smolyak", order=level)
