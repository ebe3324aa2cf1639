"""Symmetric block-pentadiagonal matrices and their Cholesky factorization.

The Gauss-Newton Hessian of the trajectory problem couples each knot with
its two neighbors on either side, giving a symmetric matrix with block
bandwidth 2.  Factorizing it block row by block row costs O(N b^3) instead
of O((N b)^3); for the horizons used here that is the difference between
microseconds and milliseconds per solve.

Only the lower triangle is stored.  Blocks are dense; per-block work uses
LAPACK via numpy/scipy.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular


class BlockPentaMatrix:
    """Symmetric block matrix with nonzero blocks (i, j) for |i - j| <= 2.

    diag  (N, b, b)   blocks (i, i); each must be symmetric
    sub1  (N-1, b, b) blocks (i+1, i)
    sub2  (N-2, b, b) blocks (i+2, i)
    """

    __slots__ = ("diag", "sub1", "sub2")

    def __init__(self, diag, sub1, sub2):
        diag = np.asarray(diag, dtype=float)
        n, b = diag.shape[0], diag.shape[-1]
        sub1 = np.asarray(sub1, dtype=float).reshape(max(n - 1, 0), b, b)
        sub2 = np.asarray(sub2, dtype=float).reshape(max(n - 2, 0), b, b)
        if diag.shape != (n, b, b):
            raise ValueError("diag blocks must be square")
        self.diag = diag
        self.sub1 = sub1
        self.sub2 = sub2

    @property
    def num_blocks(self) -> int:
        return self.diag.shape[0]

    @property
    def block_size(self) -> int:
        return self.diag.shape[-1]

    @property
    def shape(self) -> tuple[int, int]:
        n = self.num_blocks * self.block_size
        return (n, n)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        n, b = self.num_blocks, self.block_size
        xb = np.asarray(x, dtype=float).reshape(n, b)
        y = np.einsum("nij,nj->ni", self.diag, xb)
        if n > 1:
            y[1:] += np.einsum("nij,nj->ni", self.sub1, xb[:-1])
            y[:-1] += np.einsum("nji,nj->ni", self.sub1, xb[1:])
        if n > 2:
            y[2:] += np.einsum("nij,nj->ni", self.sub2, xb[:-2])
            y[:-2] += np.einsum("nji,nj->ni", self.sub2, xb[2:])
        return y.reshape(np.asarray(x).shape)

    def to_dense(self) -> np.ndarray:
        n, b = self.num_blocks, self.block_size
        a = np.zeros((n * b, n * b))
        for i in range(n):
            a[i * b:(i + 1) * b, i * b:(i + 1) * b] = self.diag[i]
        for i in range(n - 1):
            a[(i + 1) * b:(i + 2) * b, i * b:(i + 1) * b] = self.sub1[i]
            a[i * b:(i + 1) * b, (i + 1) * b:(i + 2) * b] = self.sub1[i].T
        for i in range(n - 2):
            a[(i + 2) * b:(i + 3) * b, i * b:(i + 1) * b] = self.sub2[i]
            a[i * b:(i + 1) * b, (i + 2) * b:(i + 3) * b] = self.sub2[i].T
        return a

    def diagonal(self) -> np.ndarray:
        """Scalar diagonal of the full matrix, length N*b."""
        return np.einsum("nii->ni", self.diag).reshape(-1)


class BlockFactorization:
    """Lower block-bidiagonal-within-bandwidth Cholesky factor L, A = L L^T.

    chol (N, b, b)  lower-triangular diagonal blocks
    low1 (N-1, b, b)  blocks (i+1, i) of L
    low2 (N-2, b, b)  blocks (i+2, i) of L
    """

    __slots__ = ("chol", "low1", "low2")

    def __init__(self, chol, low1, low2):
        self.chol = chol
        self.low1 = low1
        self.low2 = low2

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A x = rhs for a single right-hand-side vector."""
        return self.solve_multi(np.asarray(rhs, dtype=float)[:, None])[:, 0]

    def solve_multi(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A X = RHS for (n, k) right-hand sides by forward and
        backward block substitution."""
        n = self.chol.shape[0]
        b = self.chol.shape[-1]
        rhs = np.asarray(rhs, dtype=float)
        k = rhs.shape[1]
        r = rhs.reshape(n, b, k)
        y = np.empty_like(r)
        for i in range(n):
            t = r[i].copy()
            if i >= 1:
                t -= self.low1[i - 1] @ y[i - 1]
            if i >= 2:
                t -= self.low2[i - 2] @ y[i - 2]
            y[i] = solve_triangular(self.chol[i], t, lower=True)
        x = np.empty_like(y)
        for i in range(n - 1, -1, -1):
            t = y[i]
            if i + 1 < n:
                t = t - self.low1[i].T @ x[i + 1]
            if i + 2 < n:
                t = t - self.low2[i].T @ x[i + 2]
            x[i] = solve_triangular(self.chol[i], t, trans="T", lower=True)
        return x.reshape(n * b, k)


def factorize(mat: BlockPentaMatrix) -> BlockFactorization | None:
    """Block Cholesky of a banded symmetric matrix.

    Returns None if any pivot block fails to be positive definite, which
    the trust-region solver treats as a request to fall back to a scaled
    gradient step.
    """
    n, b = mat.num_blocks, mat.block_size
    chol = np.zeros((n, b, b))
    low1 = np.zeros((max(n - 1, 0), b, b))
    low2 = np.zeros((max(n - 2, 0), b, b))
    for i in range(n):
        m = mat.diag[i].copy()
        if i >= 1:
            m -= low1[i - 1] @ low1[i - 1].T
        if i >= 2:
            m -= low2[i - 2] @ low2[i - 2].T
        try:
            chol[i] = np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            return None
        if i + 1 < n:
            t = mat.sub1[i].copy()
            if i >= 1:
                t -= low2[i - 1] @ low1[i - 1].T
            low1[i] = solve_triangular(chol[i], t.T, lower=True).T
        if i + 2 < n:
            low2[i] = solve_triangular(chol[i], mat.sub2[i].T, lower=True).T
    return BlockFactorization(chol, low1, low2)
