"""Jacobi-preconditioned conjugate gradients for the SPD systems of both
subproblems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .errors import SolverDiverged


@dataclass
class CGInfo:
    iterations: int
    residual: float  # ||b - A x|| / ||b||


class IndefiniteMatrix(SolverDiverged):
    """Non-positive curvature met during CG (singular or indefinite system)."""


def pcg(A, b, x0=None, rtol=1e-10, maxiter=None, info=False):
    """Solve A x = b for symmetric positive definite A.

    Stops when ||b - A x|| <= rtol * ||b||. Summation order is fixed, so
    repeated calls are bit-reproducible.

    Raises:
        IndefiniteMatrix: p^T A p <= 0 encountered.
        SolverDiverged: tolerance not reached within ``maxiter``
            (default 10 * n).
    """
    A = sps.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = len(b)
    if maxiter is None:
        maxiter = 10 * max(n, 1)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise IndefiniteMatrix("non-positive diagonal entry")
    minv = 1.0 / diag

    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        x[:] = 0.0
        return (x, CGInfo(0, 0.0)) if info else x
    target = rtol * bnorm

    r = b - A @ x
    rnorm = np.linalg.norm(r)
    it = 0
    if rnorm > target:
        z = minv * r
        p = z.copy()
        rz = r @ z
        while True:
            Ap = A @ p
            pAp = p @ Ap
            if pAp <= 0.0:
                raise IndefiniteMatrix(f"p^T A p = {pAp:g} at iteration {it}")
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            it += 1
            rnorm = np.linalg.norm(r)
            if rnorm <= target:
                # confirm with the true residual (guards against drift)
                r = b - A @ x
                rnorm = np.linalg.norm(r)
                if rnorm <= target:
                    break
            if it >= maxiter:
                raise SolverDiverged(
                    f"CG: relative residual {rnorm / bnorm:.3e} after {it} iterations"
                )
            z = minv * r
            rz_new = r @ z
            p *= rz_new / rz
            p += z
            rz = rz_new
    return (x, CGInfo(it, rnorm / bnorm)) if info else x
