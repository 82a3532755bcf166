"""Euclidean geometry induced by a fixed symmetric positive definite operator B.

The primal norm is ``<Bx, x>**0.5`` and the dual norm is ``<s, B^{-1} s>**0.5``.
Identity and diagonal operators bypass factorization entirely; dense operators
cache a Cholesky factor at construction and an eigendecomposition on first use
(needed for similarity transforms in the exact cubic subsolver).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

SYM_TOL = 1e-10


class FactorizationError(RuntimeError):
    """The operator is numerically singular; the induced dual norm is ill posed."""


class NormOperator:
    """Fixed SPD operator defining a primal/dual norm pair.

    Immutable after construction and safe to share across concurrent solver
    runs. Use the ``identity`` / ``diagonal`` / ``dense`` / ``gram``
    constructors rather than ``__init__``.
    """

    def __init__(self, kind: str, dim: int, diag=None, matrix=None, chol=None):
        self.kind = kind
        self.dim = int(dim)
        self._diag = diag
        self._matrix = matrix
        self._chol = chol
        self._eig = None  # lazy (w, Q) of the dense matrix

    @classmethod
    def identity(cls, dim: int) -> "NormOperator":
        if dim < 1:
            raise ValueError("dimension must be positive")
        return cls("identity", dim)

    @classmethod
    def diagonal(cls, entries) -> "NormOperator":
        d = np.asarray(entries, dtype=float)
        if d.ndim != 1 or d.size < 1:
            raise ValueError("diagonal entries must be a nonempty vector")
        if np.any(d <= 0):
            raise ValueError("diagonal entries must be strictly positive")
        return cls("diagonal", d.size, diag=d)

    @classmethod
    def dense(cls, matrix) -> "NormOperator":
        B = np.asarray(matrix, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError("operator matrix must be square")
        scale = max(1.0, float(np.abs(B).max()))
        if np.abs(B - B.T).max() > SYM_TOL * scale:
            raise ValueError("operator matrix must be symmetric")
        B = 0.5 * (B + B.T)
        try:
            chol = scipy.linalg.cho_factor(B, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise FactorizationError(
                "operator is not positive definite; regularize or reduce dimension"
            ) from exc
        return cls("dense", B.shape[0], matrix=B, chol=chol)

    @classmethod
    def gram(cls, rows) -> "NormOperator":
        """Operator sum_i a_i a_i^T built from the rows a_i of a data matrix."""
        A = np.asarray(rows, dtype=float)
        return cls.dense(A.T @ A)

    def _check_dim(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected vector of dimension {self.dim}, got shape {x.shape}")
        return x

    def apply(self, x) -> np.ndarray:
        """B x (primal -> dual)."""
        x = self._check_dim(x)
        if self.kind == "identity":
            return x.copy()
        if self.kind == "diagonal":
            return self._diag * x
        return self._matrix @ x

    def solve(self, s) -> np.ndarray:
        """B^{-1} s (dual -> primal)."""
        s = self._check_dim(s)
        if self.kind == "identity":
            return s.copy()
        if self.kind == "diagonal":
            return s / self._diag
        return scipy.linalg.cho_solve(self._chol, s)

    def primal(self, x) -> float:
        x = self._check_dim(x)
        if self.kind == "identity":
            return float(np.linalg.norm(x))
        if self.kind == "diagonal":
            return float(np.sqrt(np.dot(self._diag * x, x)))
        return float(np.sqrt(max(0.0, float(np.dot(self._matrix @ x, x)))))

    def dual(self, s) -> float:
        s = self._check_dim(s)
        if self.kind == "identity":
            return float(np.linalg.norm(s))
        if self.kind == "diagonal":
            return float(np.sqrt(np.dot(s / self._diag, s)))
        return float(np.sqrt(max(0.0, float(np.dot(self.solve(s), s)))))

    def as_matrix(self) -> np.ndarray:
        if self.kind == "identity":
            return np.eye(self.dim)
        if self.kind == "diagonal":
            return np.diag(self._diag)
        return self._matrix.copy()

    def _dense_eig(self):
        if self._eig is None:
            w, Q = np.linalg.eigh(self._matrix)
            if w[0] <= 0:
                raise FactorizationError("operator has nonpositive eigenvalues")
            self._eig = (w, Q)
        return self._eig

    def inv_sqrt_apply(self, x) -> np.ndarray:
        """B^{-1/2} x, for vectors or matrices (applied on the left)."""
        if self.kind == "identity":
            return np.array(x, dtype=float)
        if self.kind == "diagonal":
            scale = 1.0 / np.sqrt(self._diag)
            x = np.asarray(x, dtype=float)
            return scale * x if x.ndim == 1 else scale[:, None] * x
        w, Q = self._dense_eig()
        return Q @ ((Q.T @ np.asarray(x, dtype=float)).T / np.sqrt(w)).T


def sym_eig(A, tol: float = SYM_TOL):
    """Eigendecomposition of a symmetric matrix.

    Returns eigenvalues ascending and an orthonormal eigenvector matrix V
    with A = V diag(w) V^T. Raises ValueError if A is not symmetric within
    a relative tolerance.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A - A.T).max() > tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    return w, V
