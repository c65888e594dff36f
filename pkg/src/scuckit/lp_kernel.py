"""Precision-generic sparse linear algebra used by the first-order LP solver.

Everything here is matrix-vector based: CSR/CSC products, box and orthant
projections, and a power method for the spectral bound of A A^T.  No
factorizations.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class Precision(enum.Enum):
    """Arithmetic mode for solver iterates and matrix values.

    FP32 stores matrix values and iterates in 32-bit; dot products and
    residual norms are still accumulated in 64-bit (see dot64/norm64).
    FP64 is the reference mode.
    """

    FP32 = "fp32"
    FP64 = "fp64"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32 if self is Precision.FP32 else np.float64)


def dot64(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product accumulated in 64-bit regardless of input dtype."""
    return float(np.dot(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)))


def norm64(a: np.ndarray) -> float:
    """Euclidean norm accumulated in 64-bit regardless of input dtype."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))


class SparseMatrix:
    """Sparse matrix kept in both CSR and CSC layouts.

    CSR serves A @ x, CSC serves A.T @ y; both describe the same matrix,
    which is checked cheaply by `layout_agreement` with a random probe.
    Instances are immutable after construction and safe to share.
    """

    def __init__(self, matrix, dtype=np.float64):
        csr = sp.csr_matrix(matrix, dtype=dtype)
        csr.sum_duplicates()
        csr.eliminate_zeros()
        csr.sort_indices()
        self.csr = csr
        self.csc = csr.tocsc()
        self.csc.sort_indices()
        self._t = self.csc.T  # CSR view of A^T backed by the CSC arrays
        self.shape = csr.shape
        self.dtype = csr.dtype

    @classmethod
    def from_coo(cls, rows, cols, vals, shape, dtype=np.float64) -> "SparseMatrix":
        coo = sp.coo_matrix((vals, (rows, cols)), shape=shape)
        return cls(coo, dtype=dtype)

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    def astype(self, precision: Precision) -> "SparseMatrix":
        if precision.dtype == self.dtype:
            return self
        return SparseMatrix(self.csr, dtype=precision.dtype)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """A @ x via the CSR layout."""
        if x.shape[0] != self.shape[1]:
            raise ValueError(f"matvec dimension mismatch: A is {self.shape}, x has {x.shape[0]}")
        return self.csr @ x

    def matvec_t(self, y: np.ndarray) -> np.ndarray:
        """A.T @ y via the CSC layout."""
        if y.shape[0] != self.shape[0]:
            raise ValueError(f"matvec_t dimension mismatch: A is {self.shape}, y has {y.shape[0]}")
        return self._t @ y

    def matvec_csc(self, x: np.ndarray) -> np.ndarray:
        """A @ x via the CSC layout (used by the dual-layout consistency probe)."""
        if x.shape[0] != self.shape[1]:
            raise ValueError(f"matvec dimension mismatch: A is {self.shape}, x has {x.shape[0]}")
        return self.csc @ x

    def layout_agreement(self, rng=None) -> float:
        """Relative CSR-vs-CSC disagreement of A @ x for a random probe x."""
        rng = rng or np.random.default_rng(0)
        x = rng.standard_normal(self.shape[1]).astype(self.dtype)
        ax_r = self.matvec(x)
        ax_c = self.matvec_csc(x)
        scale = max(norm64(ax_r), 1e-30)
        return norm64(ax_r - ax_c) / scale

    def row_norms(self, ord: float = 1) -> np.ndarray:
        """Per-row norms of |A| (ord 1 or inf), in 64-bit."""
        a = self.csr.astype(np.float64)
        if ord == 1:
            return np.asarray(abs(a).sum(axis=1)).ravel()
        return abs(a).max(axis=1).toarray().ravel()

    def col_norms(self, ord: float = 1) -> np.ndarray:
        a = self.csc.astype(np.float64)
        if ord == 1:
            return np.asarray(abs(a).sum(axis=0)).ravel()
        return abs(a).max(axis=0).toarray().ravel()

    def scaled(self, row_scale: np.ndarray, col_scale: np.ndarray) -> "SparseMatrix":
        """diag(row_scale) @ A @ diag(col_scale) as a new matrix."""
        d_r = sp.diags(np.asarray(row_scale, dtype=np.float64))
        d_c = sp.diags(np.asarray(col_scale, dtype=np.float64))
        return SparseMatrix(d_r @ self.csr.astype(np.float64) @ d_c, dtype=self.dtype)

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()


def project_box(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Componentwise clamp of x onto [lower, upper] (lower <= upper assumed)."""
    return np.minimum(np.maximum(x, lower), upper)


def project_nonneg(y: np.ndarray) -> np.ndarray:
    """Projection onto the nonnegative orthant."""
    return np.maximum(y, 0.0)


def power_method(a: SparseMatrix, tol: float = 1e-4, max_iter: int = 1000,
                 seed: int = 0, inflation: float | None = None) -> float:
    """Largest eigenvalue of A A^T, estimated with the implicit power method.

    Two matvecs per step; the Rayleigh-style estimate ||A A^T v|| converges
    to lambda_max from below, so the result is inflated (by `inflation`,
    default 1 + tol) to make it safe as an upper bound on lambda_max.
    """
    if a.nnz == 0:
        raise ValueError("power_method requires a nonzero matrix")
    a64 = a.astype(Precision.FP64)
    m = a64.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m)
    v /= norm64(v)
    lam = 0.0
    lam_prev = -1.0
    converged = False
    for _ in range(max_iter):
        w = a64.matvec(a64.matvec_t(v))
        lam = norm64(w)
        if lam <= 0.0:
            # v landed in the null space of A^T; recover with a fresh probe
            v = rng.standard_normal(m)
            v /= norm64(v)
            lam_prev = -1.0
            continue
        v = w / lam
        if abs(lam - lam_prev) <= tol * max(lam, 1e-300):
            converged = True
            break
        lam_prev = lam
    if not converged:
        warnings.warn("power method reached max_iter without converging; "
                      "returning the inflated last estimate", RuntimeWarning)
    if inflation is None:
        inflation = 1.0 + tol
    return lam * inflation


@dataclass
class StandardFormLp:
    """LP data  min mu^T x  s.t.  A x (= | >=) theta,  lower <= x <= upper.

    The first `n_eq` rows are equalities (free dual sign); the remaining
    rows are >= inequalities (dual >= 0).  `offset` is a constant added to
    the objective (accumulated by presolve and fixing).
    """

    matrix: SparseMatrix
    rhs: np.ndarray
    cost: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    n_eq: int = 0
    offset: float = 0.0
    row_tags: list = field(default_factory=list)
    col_tags: list = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]

    def objective(self, x: np.ndarray) -> float:
        return dot64(self.cost, x) + self.offset

    def project_dual(self, y: np.ndarray) -> np.ndarray:
        """Projection onto the dual cone: identity on the equality block,
        nonnegative orthant on the inequality block."""
        out = np.array(y, copy=True)
        out[self.n_eq:] = np.maximum(out[self.n_eq:], 0.0)
        return out

    def row_residuals(self, x: np.ndarray) -> np.ndarray:
        """Signed constraint violations: |Ax - theta| on the equality block,
        max(theta - Ax, 0) on the inequality block."""
        ax = self.matrix.matvec(x)
        res = np.empty(self.n_rows, dtype=np.float64)
        res[:self.n_eq] = np.abs(ax[:self.n_eq] - self.rhs[:self.n_eq])
        res[self.n_eq:] = np.maximum(self.rhs[self.n_eq:] - ax[self.n_eq:], 0.0)
        return res

    def max_violation(self, x: np.ndarray) -> float:
        bound_viol = max(float(np.max(self.lower - x, initial=0.0)),
                         float(np.max(x - self.upper, initial=0.0)))
        row_viol = float(np.max(self.row_residuals(x), initial=0.0))
        return max(bound_viol, row_viol)

    def copy(self) -> "StandardFormLp":
        return StandardFormLp(
            matrix=self.matrix,
            rhs=self.rhs.copy(),
            cost=self.cost.copy(),
            lower=self.lower.copy(),
            upper=self.upper.copy(),
            n_eq=self.n_eq,
            offset=self.offset,
            row_tags=list(self.row_tags),
            col_tags=list(self.col_tags),
        )
