"""Lawson-Hanson active-set nonnegative least squares.

Works on the Gram matrix, so the cost per iteration is independent of the
(possibly very long) column length.  Among equally violated coordinates the
lowest index enters the passive set first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError


@dataclass(frozen=True)
class NnlsResult:
    x: np.ndarray
    residual: float
    iterations: int


def nnls(A, b, tol: float = 1e-10, max_iter: int | None = None) -> NnlsResult:
    """Solve ``min ||A x - b||`` subject to ``x >= 0``.

    Terminates when no zero coordinate has a projected gradient above
    ``tol * max(1, max|A^T b|)``.

    :param A: ``(p, m)`` matrix of columns
    :param b: target vector of length ``p``
    :param tol: tolerance on the negative gradient ``A^T (b - A x)``
    :param max_iter: outer iteration cap, default ``3 m + 10``
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise ValueError(f"incompatible shapes A{A.shape}, b{b.shape}")
    m = A.shape[1]
    G = A.T @ A
    h = A.T @ b
    thresh = tol * max(1.0, float(np.max(np.abs(h), initial=0.0)))
    max_iter = 3 * m + 10 if max_iter is None else max_iter

    x = np.zeros(m)
    passive = np.zeros(m, dtype=bool)
    it = 0
    while True:
        grad = h - G @ x
        candidates = ~passive & (grad > thresh)
        if not candidates.any():
            break
        if it >= max_iter:
            raise SolverError(
                f"NNLS did not converge in {max_iter} iterations "
                f"(residual {np.linalg.norm(A @ x - b):.3e}, max gradient {grad[candidates].max():.3e})"
            )
        it += 1
        passive[int(np.argmax(np.where(candidates, grad, -np.inf)))] = True
        while True:
            idx = np.flatnonzero(passive)
            z = np.zeros(m)
            z[idx] = np.linalg.lstsq(G[np.ix_(idx, idx)], h[idx], rcond=None)[0]
            if np.all(z[idx] > 0):
                x = z
                break
            # step back toward x until the first passive coordinate hits zero
            blocked = passive & (z <= 0)
            gap = x[blocked] - z[blocked]
            step = np.min(np.where(gap > 0, x[blocked] / np.where(gap > 0, gap, 1.0), 0.0))
            x = x + step * (z - x)
            passive &= x > 0
            x[~passive] = 0.0
    return NnlsResult(x=x, residual=float(np.linalg.norm(A @ x - b)), iterations=it)
