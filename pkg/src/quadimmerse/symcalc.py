"""Symmetric-matrix calculus.

Vectorization, half-vectorization, duplication matrices, Kronecker
products and sums, and the Lyapunov operator ``X -> XA + A^T X``.

Ordering convention: ``vech`` stacks the lower triangle column by column,
so for ``n = 3`` the packed index order is
``(0,0), (1,0), (2,0), (1,1), (2,1), (2,2)``. Every module of the package
uses this single ordering.

Dense matrices are plain ``numpy.ndarray`` objects; symmetric matrices are
wrapped in :class:`SymMatrix` so symmetry is carried by the type.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "SymMatrix",
    "DuplicationPair",
    "tri_size",
    "tri_dim",
    "vec",
    "unvec",
    "vech",
    "unvech",
    "duplication",
    "kron",
    "kron_sum",
    "lyap_op",
    "vech_lyap_matrix",
    "lifted_drift",
    "lifted_input",
]


def tri_size(n: int) -> int:
    """Number of free entries ``n(n+1)/2`` of an ``n x n`` symmetric matrix."""
    return n * (n + 1) // 2


def tri_dim(size: int) -> int:
    """Inverse of :func:`tri_size`; raises if ``size`` is not triangular."""
    n = int(round((np.sqrt(8 * size + 1) - 1) / 2))
    if tri_size(n) != size:
        raise ValueError(f"{size} is not a triangular number n(n+1)/2")
    return n


@lru_cache(maxsize=None)
def _tril_index(n: int) -> tuple[np.ndarray, np.ndarray]:
    # column-major walk of the lower triangle
    rows, cols = [], []
    for j in range(n):
        for i in range(j, n):
            rows.append(i)
            cols.append(j)
    r = np.array(rows, dtype=np.intp)
    c = np.array(cols, dtype=np.intp)
    r.setflags(write=False)
    c.setflags(write=False)
    return r, c


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """Real symmetric matrix stored as its packed lower triangle.

    Parameters
    ----------
    packed : array_like, shape (n(n+1)/2,)
        Lower triangle, column-major (``vech`` order).
    residual : float
        Asymmetry ``max|M - M^T|`` of the dense input this matrix was built
        from, 0 when constructed from packed data.
    """

    packed: np.ndarray
    residual: float = 0.0
    dim: int = field(init=False)

    def __post_init__(self):
        p = np.array(self.packed, dtype=float).reshape(-1)
        if not np.all(np.isfinite(p)):
            raise ValueError("SymMatrix entries must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "packed", p)
        object.__setattr__(self, "dim", tri_dim(p.size))

    @classmethod
    def from_dense(cls, M, tol: float | None = None) -> "SymMatrix":
        """Symmetrize ``(M + M^T)/2`` and record the asymmetry residual.

        If ``tol`` is given and the residual exceeds it, ``ValueError`` is
        raised.
        """
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {M.shape}")
        resid = float(np.max(np.abs(M - M.T))) if M.size else 0.0
        if tol is not None and resid > tol:
            raise ValueError(f"matrix asymmetry {resid:.3e} exceeds tolerance {tol:.1e}")
        S = 0.5 * (M + M.T)
        r, c = _tril_index(M.shape[0])
        return cls(S[r, c], residual=resid)

    @classmethod
    def zeros(cls, n: int) -> "SymMatrix":
        return cls(np.zeros(tri_size(n)))

    @classmethod
    def identity(cls, n: int) -> "SymMatrix":
        return cls.from_dense(np.eye(n))

    def full(self) -> np.ndarray:
        """Dense ``n x n`` expansion; exactly symmetric."""
        return unvech(self.packed)

    def __array__(self, dtype=None, copy=None):
        out = self.full()
        return out if dtype is None else out.astype(dtype)

    def __repr__(self):
        return f"SymMatrix(dim={self.dim}, packed={self.packed!r})"


@dataclass(frozen=True)
class DuplicationPair:
    """Duplication matrix ``D`` and its Moore-Penrose inverse ``Dplus``."""

    dim: int
    D: np.ndarray
    Dplus: np.ndarray


def vec(M) -> np.ndarray:
    """Stack the columns of ``M`` into one vector."""
    return np.asarray(M, dtype=float).reshape(-1, order="F")


def unvec(v, rows: int, cols: int | None = None) -> np.ndarray:
    cols = rows if cols is None else cols
    return np.asarray(v, dtype=float).reshape((rows, cols), order="F")


def vech(M) -> np.ndarray:
    """Half-vectorization: lower triangle of a symmetric matrix, column-major.

    Accepts a :class:`SymMatrix` or a square array. Only the lower triangle
    of an array argument is read.

    >>> vech(np.array([[1., 2.], [2., 3.]]))
    array([1., 2., 3.])
    """
    if isinstance(M, SymMatrix):
        return M.packed.copy()
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    r, c = _tril_index(M.shape[0])
    return M[r, c]


def unvech(v) -> np.ndarray:
    """Rebuild the full symmetric matrix from its half-vectorization."""
    v = np.asarray(v, dtype=float).reshape(-1)
    n = tri_dim(v.size)
    r, c = _tril_index(n)
    M = np.zeros((n, n))
    M[r, c] = v
    M[c, r] = v
    return M


@lru_cache(maxsize=None)
def _duplication(n: int) -> DuplicationPair:
    N = tri_size(n)
    r, c = _tril_index(n)
    D = np.zeros((n * n, N))
    # vec index of (i, j) is i + j*n
    D[r + c * n, np.arange(N)] = 1.0
    D[c + r * n, np.arange(N)] = 1.0
    # D^T D is diagonal with entries 1 (diagonal pairs) or 2 (off-diagonal)
    weight = np.where(r == c, 1.0, 0.5)
    Dplus = D.T * weight[:, None]
    D.setflags(write=False)
    Dplus.setflags(write=False)
    return DuplicationPair(n, D, Dplus)


def duplication(n: int) -> DuplicationPair:
    """Duplication matrix ``D_n`` with ``D_n vech(M) = vec(M)``, and ``D_n^+``.

    ``D_n`` is built from index maps, never numerically. The pseudo-inverse
    uses the closed form ``(D^T D)^{-1} D^T`` with the diagonal ``D^T D``
    inverted entrywise. Returned arrays are read-only and cached.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"duplication matrix needs n >= 1, got {n}")
    return _duplication(int(n))


def kron(A, B) -> np.ndarray:
    """Kronecker product (thin wrapper around :func:`numpy.kron`)."""
    return np.kron(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def _square(A, name="A") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    return A


def kron_sum(A, B) -> np.ndarray:
    """Kronecker sum ``A (+) B = A (x) I_m + I_n (x) B`` of square matrices."""
    A = _square(A, "A")
    B = _square(B, "B")
    n, m = A.shape[0], B.shape[0]
    return np.kron(A, np.eye(m)) + np.kron(np.eye(n), B)


def lyap_op(A, X) -> SymMatrix:
    """Lyapunov operator ``X A + A^T X`` on a symmetric ``X``."""
    A = _square(A)
    Xs = X if isinstance(X, SymMatrix) else SymMatrix.from_dense(X)
    if Xs.dim != A.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, X has dim {Xs.dim}")
    Xf = Xs.full()
    XA = Xf @ A
    return SymMatrix(vech(XA + XA.T))


def vech_lyap_matrix(A) -> np.ndarray:
    """Matrix ``T = D^+ (A (+) A)^T D`` with ``vech(L_A(X)) = T vech(X)``."""
    A = _square(A)
    dp = duplication(A.shape[0])
    return dp.Dplus @ kron_sum(A, A).T @ dp.D


def lifted_drift(A) -> np.ndarray:
    """Drift ``D^T (A (+) A) (D^+)^T`` of the quadratic monomials ``x^[2]``."""
    A = _square(A)
    dp = duplication(A.shape[0])
    return dp.D.T @ kron_sum(A, A) @ dp.Dplus.T


def lifted_input(B, u) -> np.ndarray:
    """Input coupling ``D^T (Bu (x) I + I (x) Bu)`` of ``x^[2]``.

    The result has shape ``(n(n+1)/2, n)`` and is linear in ``u``; the
    derivative of ``x^[2]`` is ``lifted_drift(A) @ x2 + lifted_input(B, u) @ x``.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2:
        raise ValueError("B must be a 2-D array")
    n, p = B.shape
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != p:
        raise ValueError(f"input length {u.size} does not match B with {p} columns")
    b = (B @ u).reshape(n, 1)
    eye = np.eye(n)
    return duplication(n).D.T @ (np.kron(b, eye) + np.kron(eye, b))
