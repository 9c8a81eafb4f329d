"""Small dense symmetric-matrix algebra.

Pointwise values of every field in the package are matrices of size n <= 4.
Eigendecompositions go through the kernel backend (cyclic Jacobi), which keeps
results deterministic and dependency-free.  Class types carry the structural
invariants (packed symmetric storage, certified PSD flag); the *_batch helpers
operate on raw (..., n, n) arrays and are what the field/solver code uses.
"""

import numpy as np

from . import _kernels
from .errors import InvalidMatrix, NotPsd, ShapeError

DEFAULT_RANK_TOL = 1e-10
PSD_CLAMP_REL = 1e-12

_psd_repairs = 0


def psd_repair_count():
    """Number of eigenvalue clamps performed by PsdMatrix construction."""
    return _psd_repairs


def reset_psd_repair_count():
    global _psd_repairs
    _psd_repairs = 0


def _triu_indices(n):
    return np.triu_indices(n)


class SymMatrix:
    """Symmetric n x n matrix, upper triangle stored (n <= 4)."""

    __slots__ = ("dim", "entries")

    def __init__(self, dim, entries):
        entries = np.asarray(entries, dtype=np.float64)
        if not (1 <= dim <= 4):
            raise ShapeError(f"SymMatrix supports 1 <= n <= 4, got n={dim}")
        if entries.shape != (dim * (dim + 1) // 2,):
            raise ShapeError(f"expected {dim*(dim+1)//2} packed entries for n={dim}")
        if not np.all(np.isfinite(entries)):
            raise InvalidMatrix("non-finite entries")
        self.dim = dim
        self.entries = entries

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"expected square array, got {a.shape}")
        n = a.shape[0]
        sym = 0.5 * (a + a.T)
        return cls(n, sym[_triu_indices(n)])

    def to_array(self):
        n = self.dim
        full = np.zeros((n, n))
        iu = _triu_indices(n)
        full[iu] = self.entries
        full.T[iu] = self.entries
        return full

    def frobenius_norm(self):
        return float(np.linalg.norm(self.to_array()))

    def eigh(self):
        w, V = _kernels.eigh_batch(self.to_array())
        return w, V

    def __repr__(self):
        return f"SymMatrix(n={self.dim}, {self.to_array().tolist()})"


class PsdMatrix(SymMatrix):
    """SymMatrix certified positive semidefinite.

    Eigenvalues in [-tol_psd, 0) with tol_psd = 1e-12 * ||A||_F are clamped to
    zero at construction (counted); anything more negative raises NotPsd.
    """

    __slots__ = ()

    def __init__(self, dim, entries):
        super().__init__(dim, entries)
        global _psd_repairs
        w, V = self.eigh()
        tol = PSD_CLAMP_REL * max(self.frobenius_norm(), 1e-300)
        if w[0] < -tol:
            raise NotPsd(f"eigenvalue {w[0]:.3e} below -{tol:.3e}")
        if w[0] < 0.0:
            w = np.maximum(w, 0.0)
            full = (V * w) @ V.T
            self.entries = full[_triu_indices(dim)]
            _psd_repairs += 1

    @classmethod
    def from_array(cls, a):
        m = SymMatrix.from_array(a)
        return cls(m.dim, m.entries)


class RectMatrix:
    """Dense n x k real matrix."""

    __slots__ = ("rows", "cols", "values")

    def __init__(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"expected 2-d array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidMatrix("non-finite entries")
        self.rows, self.cols = values.shape
        self.values = values

    def to_array(self):
        return self.values

    def __repr__(self):
        return f"RectMatrix({self.values.tolist()})"


def _unwrap(A):
    if isinstance(A, SymMatrix):
        return A.to_array(), True
    a = np.asarray(A, dtype=np.float64)
    return a, False


def pseudoinverse(A, rank_tol=DEFAULT_RANK_TOL):
    """Moore-Penrose inverse of a symmetric matrix by eigendecomposition.

    Eigenvalues with |lam| > rank_tol * max|lam| are inverted, the rest
    zeroed.
    """
    a, wrapped = _unwrap(A)
    if not np.all(np.isfinite(a)):
        raise InvalidMatrix("non-finite entries")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected square symmetric matrix, got {a.shape}")
    out = pinv_sym_batch(a[None], rank_tol)[0]
    return SymMatrix.from_array(out) if wrapped else out


def sqrt_psd(A):
    """Symmetric PSD square root: S with S @ S = A."""
    a, wrapped = _unwrap(A)
    w, V = _kernels.eigh_batch(a)
    tol = PSD_CLAMP_REL * max(np.linalg.norm(a), 1e-300)
    if w[0] < -tol:
        raise NotPsd(f"eigenvalue {w[0]:.3e} below -{tol:.3e}")
    s = (V * np.sqrt(np.maximum(w, 0.0))) @ V.T
    return PsdMatrix.from_array(s) if wrapped else s


def powers_stormer_gap(A, B):
    """Both sides of ||sqrt(A)-sqrt(B)||_F^2 <= sqrt(n) ||A-B||_F."""
    a, _ = _unwrap(A)
    b, _ = _unwrap(B)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    n = a.shape[0]
    lhs = float(np.linalg.norm(sqrt_psd(a) - sqrt_psd(b)) ** 2)
    rhs = float(np.sqrt(n) * np.linalg.norm(a - b))
    return lhs, rhs


def symmetric_part(M):
    m, wrapped = _unwrap(M)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected square matrix, got {m.shape}")
    s = 0.5 * (m + m.T)
    return SymMatrix.from_array(s) if wrapped or isinstance(M, RectMatrix) else s


def antisymmetric_part(M):
    if isinstance(M, (SymMatrix, RectMatrix)):
        m = M.to_array()
    else:
        m = np.asarray(M, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected square matrix, got {m.shape}")
    return 0.5 * (m - m.T)


# ---------------------------------------------------------------------------
# batched array helpers


def pinv_sym_batch(X, rank_tol=DEFAULT_RANK_TOL):
    """Pseudoinverse of a (B, n, n) stack of symmetric matrices."""
    X = np.asarray(X, dtype=np.float64)
    w, V = _kernels.eigh_batch(X)
    cut = rank_tol * np.max(np.abs(w), axis=-1, keepdims=True)
    inv = np.where(np.abs(w) > cut, 1.0 / np.where(w == 0.0, 1.0, w), 0.0)
    return np.einsum("bik,bk,bjk->bij", V, inv, V)


def sqrt_psd_batch(X, clamp_rel=PSD_CLAMP_REL):
    """PSD square roots of a (B, n, n) stack; raises NotPsd past tolerance."""
    X = np.asarray(X, dtype=np.float64)
    w, V = _kernels.eigh_batch(X)
    fro = np.maximum(np.linalg.norm(X, axis=(1, 2)), 1e-300)
    if np.any(w[:, 0] < -clamp_rel * fro):
        i = int(np.argmin(w[:, 0] / fro))
        raise NotPsd(f"site {i}: eigenvalue {w[i, 0]:.3e}")
    return np.einsum("bik,bk,bjk->bij", V, np.sqrt(np.maximum(w, 0.0)), V)


def psd_clamp_batch(X, clamp_rel=PSD_CLAMP_REL):
    """Project a (B, n, n) symmetric stack onto the PSD cone.

    Returns (clamped, repairs) where repairs counts sites whose smallest
    eigenvalue was below -clamp_rel * ||X||_F (a genuine repair, not noise).
    """
    X = np.asarray(X, dtype=np.float64)
    w, V = _kernels.eigh_batch(X)
    fro = np.maximum(np.linalg.norm(X, axis=(1, 2)), 1e-300)
    repairs = int(np.sum(w[:, 0] < -clamp_rel * fro))
    out = np.einsum("bik,bk,bjk->bij", V, np.maximum(w, 0.0), V)
    return out, repairs
