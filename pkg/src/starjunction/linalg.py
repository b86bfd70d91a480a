"""Deterministic conjugate gradient with diagonal preconditioning."""
from __future__ import annotations

import numpy as np

__all__ = ["ConvergenceFailure", "pcg"]


class ConvergenceFailure(RuntimeError):
    """A linear or nonlinear iteration failed to reach its tolerance."""


def pcg(matvec, b: np.ndarray, diag: np.ndarray, x0: np.ndarray | None = None,
        rtol: float = 1e-12, maxiter: int | None = None) -> np.ndarray:
    """Solve A x = b for symmetric positive (semi)definite A.

    ``matvec`` applies A; ``diag`` is its diagonal (used as the Jacobi
    preconditioner).  Iterations and reductions are performed in a fixed
    order, so results are bitwise reproducible for identical inputs.
    For a singular consistent Neumann system the iteration stays in the
    range of A provided ``b`` is orthogonal to the null space.
    """
    n = b.shape[0]
    if maxiter is None:
        maxiter = 20 * n
    x = np.zeros_like(b) if x0 is None else x0.astype(float, copy=True)
    inv_diag = 1.0 / np.where(diag > 0.0, diag, 1.0)

    r = b - matvec(x)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b)
    tol = rtol * bnorm
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for _ in range(maxiter):
        if np.linalg.norm(r) <= tol:
            return x
        ap = matvec(p)
        denom = float(p @ ap)
        if denom <= 0.0:
            raise ConvergenceFailure("conjugate gradient hit a non-positive curvature direction")
        alpha = rz / denom
        x += alpha * p
        r -= alpha * ap
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if np.linalg.norm(r) <= tol:
        return x
    raise ConvergenceFailure(
        f"conjugate gradient stalled at residual {np.linalg.norm(r):.3e} (target {tol:.3e})")
