"""Active-set least squares with nonnegativity on a subset of the unknowns."""
from __future__ import annotations

import numpy as np


def _lstsq(A, b):
    if A.shape[1] == 0:
        return np.zeros(0)
    return np.linalg.lstsq(A, b, rcond=None)[0]


def nnls_partial(A, b, nonneg, maxiter=None, tol=None):
    """Minimise ``||A x - b||`` subject to ``x[nonneg] >= 0``.

    Lawson-Hanson active-set iteration.  Unconstrained columns stay in the
    passive set throughout; constrained columns enter when their gradient
    component is positive and leave when an interpolation step drives them to
    zero.  Sub-problems are solved with minimum-norm least squares, so
    rank-deficient passive sets are tolerated.

    Parameters
    ----------
    A : (m, n) array_like
    b : (m,) array_like
    nonneg : (n,) bool array_like
        True where the unknown is sign-constrained.
    maxiter : int, optional
        Outer iteration cap, default ``3 * n``.
    tol : float, optional
        Dual feasibility tolerance on ``A.T @ (b - A x)``.

    Returns
    -------
    x : ndarray, shape (n,)
    rnorm : float
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    nonneg = np.asarray(nonneg, dtype=bool)
    m, n = A.shape
    if nonneg.shape != (n,):
        raise ValueError("nonneg mask must have one entry per column")
    if maxiter is None:
        maxiter = 3 * n + 10
    if tol is None:
        scale = max(1.0, np.abs(b).max(initial=0.0)) * max(1.0, np.abs(A).max(initial=0.0))
        tol = 10 * np.finfo(float).eps * max(m, n, 1) * scale

    passive = ~nonneg.copy()
    x = np.zeros(n)
    x[passive] = _lstsq(A[:, passive], b)

    for _ in range(maxiter):
        w = A.T @ (b - A @ x)
        candidates = nonneg & ~passive & (w > tol)
        if not candidates.any():
            break
        j = np.flatnonzero(candidates)[np.argmax(w[candidates])]
        passive[j] = True

        while True:
            z = np.zeros(n)
            z[passive] = _lstsq(A[:, passive], b)
            bad = passive & nonneg & (z <= 0)
            if not bad.any():
                x = z
                break
            # step back to the first constrained variable that hits zero
            idx = np.flatnonzero(bad)
            denom = x[idx] - z[idx]
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(denom > 0, x[idx] / denom, 0.0)
            alpha = float(np.clip(ratios.min(), 0.0, 1.0))
            x = x + alpha * (z - x)
            leaving = passive & nonneg & (x <= tol)
            if not leaving.any():
                leaving[idx[np.argmin(ratios)]] = True
            passive[leaving] = False
            x[leaving] = 0.0
    else:
        raise RuntimeError(f"nnls_partial did not converge in {maxiter} iterations")

    x[nonneg] = np.maximum(x[nonneg], 0.0)
    return x, float(np.linalg.norm(A @ x - b))
