"""Sparse storage and direct solves (SuperLU via scipy)."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SparseMatrix = sp.csr_matrix

RESIDUAL_RTOL = 1e-10


class SolverError(RuntimeError):
    """Linear solve failed; ``residual`` is the last residual norm (``inf`` if none)."""

    def __init__(self, message, residual=np.inf):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def coo_to_csr(rows, cols, vals, n) -> SparseMatrix:
    """Sum duplicate entries; the result does not depend on entry order beyond fp summation."""
    A = sp.coo_matrix((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def has_symmetric_pattern(A) -> bool:
    P = (A != 0).astype(np.int8)
    return (P != P.T).nnz == 0


class Factorization:
    """LU factorization of a square sparse matrix, reusable across solves."""

    def __init__(self, A):
        self.A = sp.csc_matrix(A)
        if self.A.shape[0] != self.A.shape[1]:
            raise ValueError(f"matrix must be square, got {self.A.shape}")
        try:
            self._lu = spla.splu(self.A)
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc

    @property
    def shape(self):
        return self.A.shape

    def solve(self, b, check: bool = True) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        if check:
            res = float(np.linalg.norm(self.A @ x - b))
            if not np.isfinite(res) or res > RESIDUAL_RTOL * (1.0 + np.linalg.norm(b)):
                raise SolverError("linear solve did not reach the residual tolerance", res)
        return x


def solve(A, b) -> np.ndarray:
    """One-off solve of ``A x = b``; use :class:`Factorization` for repeated solves."""
    return Factorization(A).solve(b)
