"""Block-sparse symmetric matrices, symmetric Jacobi scaling and conjugate gradients."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

log = logging.getLogger(__name__)

#: CG replaces the recursive residual with b - A x at this interval
RESIDUAL_REFRESH = 50


class BlockSparseMatrix:
    """Square matrix of dense ``b x b`` blocks over a node-pair CSR graph.

    ``mask`` marks the structurally nonzero slots shared by every block;
    the masked multiply touches only those.
    """

    def __init__(self, indptr, indices, blocks, mask=None):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.blocks = np.asarray(blocks, dtype=float)
        b = self.blocks.shape[1]
        if self.blocks.shape != (len(self.indices), b, b):
            raise ValueError("blocks must have shape (nnz_blocks, b, b)")
        self.mask = np.ones((b, b), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        self._csr = {}

    @property
    def block_size(self) -> int:
        return self.blocks.shape[1]

    @property
    def n_block_rows(self) -> int:
        return len(self.indptr) - 1

    @property
    def shape(self):
        n = self.n_block_rows * self.block_size
        return (n, n)

    @property
    def block_rows(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_block_rows), np.diff(self.indptr))

    def transpose_index(self) -> np.ndarray:
        """Position of block (j, i) for every stored block (i, j)."""
        n = self.n_block_rows
        key = self.block_rows * n + self.indices
        order = np.argsort(key, kind="stable")
        tkey = self.indices * n + self.block_rows
        pos = np.searchsorted(key[order], tkey)
        if np.any(pos >= len(key)) or np.any(key[order][np.minimum(pos, len(key) - 1)] != tkey):
            raise ValueError("block graph is not symmetric")
        return order[pos]

    def is_symmetric(self) -> bool:
        t = self.transpose_index()
        return bool(np.array_equal(self.blocks, np.swapaxes(self.blocks[t], 1, 2)))

    def structural_count(self) -> int:
        return int(self.mask.sum())

    def to_csr(self, masked: bool = True, keep: np.ndarray | None = None) -> sp.csr_matrix:
        """Scalar CSR matrix; ``keep`` restricts to a principal submatrix."""
        b = self.block_size
        slots = self.mask if masked else np.ones((b, b), dtype=bool)
        si, sj = np.nonzero(slots)
        rows = (self.block_rows[:, None] * b + si[None, :]).ravel()
        cols = (self.indices[:, None] * b + sj[None, :]).ravel()
        vals = self.blocks[:, si, sj].ravel()
        n = self.shape[0]
        if keep is not None:
            keep = np.asarray(keep, dtype=bool)
            new = np.full(n, -1, dtype=np.int64)
            new[keep] = np.arange(int(keep.sum()))
            rows, cols = new[rows], new[cols]
            sel = (rows >= 0) & (cols >= 0)
            rows, cols, vals = rows[sel], cols[sel], vals[sel]
            n = int(keep.sum())
        A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        A.sort_indices()
        return A

    def to_dense(self) -> np.ndarray:
        return self.to_csr(masked=False).toarray()

    def __matmul__(self, x):
        return matvec(self, x)


def matvec(matrix, x, masked: bool = True) -> np.ndarray:
    """``y = A x``; for block matrices the masked path visits only structural slots."""
    x = np.asarray(x, dtype=float)
    if isinstance(matrix, BlockSparseMatrix):
        if x.shape != (matrix.shape[1],):
            raise ValueError(f"dimension mismatch: matrix {matrix.shape}, vector {x.shape}")
        if masked:
            A = matrix._csr.get("masked")
            if A is None:
                A = matrix._csr["masked"] = matrix.to_csr(masked=True)
            return A @ x
        b = matrix.block_size
        X = x.reshape(-1, b)
        contrib = np.einsum("kij,kj->ki", matrix.blocks, X[matrix.indices])
        Y = np.zeros_like(X)
        np.add.at(Y, matrix.block_rows, contrib)
        return Y.ravel()
    if x.shape[0] != matrix.shape[1]:
        raise ValueError(f"dimension mismatch: matrix {matrix.shape}, vector {x.shape}")
    return matrix @ x


def jacobi_scale(matrix):
    """Symmetric Jacobi scaling ``K' = S K S`` with ``S_ii = 1/sqrt(|K_ii|)``.

    Returns ``(K', s)`` where ``s`` is the diagonal of S.  Recover the
    unscaled solution as ``x = s * x'``; the scaled right-hand side is
    ``s * b``.  Rows with a zero diagonal keep scale 1.
    """
    if sp.issparse(matrix):
        A = sp.csr_matrix(matrix, copy=True)
        diag = A.diagonal()
    else:
        A = np.array(matrix, dtype=float)
        diag = np.diag(A).copy()
    zero = diag == 0
    s = np.ones_like(diag)
    s[~zero] = 1.0 / np.sqrt(np.abs(diag[~zero]))
    if zero.any():
        warnings.warn(f"jacobi_scale: {int(zero.sum())} zero diagonal entries left unscaled")
    if sp.issparse(A):
        rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
        A.data *= s[rows] * s[A.indices]
    else:
        A *= s[:, None] * s[None, :]
    return A, s


@dataclass
class SolveReport:
    iterations: int
    residual_history: list = field(default_factory=list)
    converged: bool = False
    achieved_relative_residual: float = 0.0
    breakdown: bool = False

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "breakdown": self.breakdown,
            "achieved_relative_residual": self.achieved_relative_residual,
            "residual_history": list(self.residual_history),
        }


def conjugate_gradient(A, b, tolerance: float = 1e-3, max_iterations: int = 10000,
                       x0=None):
    """Plain conjugate gradients for a symmetric (possibly indefinite) matrix.

    Stops when ``||r_k|| / ||r_0|| <= tolerance``.  No restarts: if
    ``p.Ap`` vanishes the solve stops and is reported as a breakdown.
    The residual is recomputed from scratch every ``RESIDUAL_REFRESH``
    iterations.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    r0 = float(np.linalg.norm(r))
    history = [r0]
    if r0 == 0.0:
        return x, SolveReport(0, history, True, 0.0)
    p = r.copy()
    rr = float(r @ r)
    eps = np.finfo(float).eps
    converged = breakdown = False
    k = 0
    while k < max_iterations:
        Ap = A @ p
        pAp = float(p @ Ap)
        if abs(pAp) <= eps * float(np.linalg.norm(p)) * float(np.linalg.norm(Ap)) or not np.isfinite(pAp):
            breakdown = True
            log.warning("CG breakdown at iteration %d (p.Ap = %g)", k, pAp)
            break
        step = rr / pAp
        x += step * p
        k += 1
        if k % RESIDUAL_REFRESH == 0:
            r = b - A @ x
        else:
            r -= step * Ap
        rr_new = float(r @ r)
        history.append(float(np.sqrt(rr_new)))
        if history[-1] <= tolerance * r0:
            converged = True
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, SolveReport(k, history, converged, history[-1] / r0, breakdown)


def write_matrix_market(A, path, comment: str = "") -> None:
    """Dump a sparse matrix in Matrix Market coordinate form.

    Every stored entry is written, so numerically zero structural slots
    survive and non-structural slots never appear.
    """
    scipy.io.mmwrite(str(path), A, comment=comment, precision=17)
