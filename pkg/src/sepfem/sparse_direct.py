"""Direct sparse factorizations, through SuiteSparse when available.

The least-squares system is SPD and factors fastest with CHOLMOD; the
saddle-point system needs a pivoting LU and goes to UMFPACK.  Both come
from cvxopt.  When cvxopt is missing, or a factorization fails
numerically, the callers fall back to SuperLU, so these helpers return
None instead of raising.
"""

from __future__ import annotations

import numpy as np

__all__ = ["solve_spd", "solve_lu"]

try:
    from cvxopt import cholmod, matrix, spmatrix, umfpack

    _HAVE_CVXOPT = True
except ImportError:  # pragma: no cover - exercised via monkeypatch
    _HAVE_CVXOPT = False


def _to_cvx(coo, lower=False):
    row, col, data = coo.row, coo.col, coo.data
    if lower:
        keep = row >= col
        row, col, data = row[keep], col[keep], data[keep]
    return spmatrix(
        matrix(np.ascontiguousarray(data, dtype=np.float64)),
        row.tolist(),
        col.tolist(),
        coo.shape,
    )


def solve_spd(S, rhs) -> np.ndarray | None:
    """Solve a sparse SPD system with CHOLMOD; None asks for a fallback."""
    if not _HAVE_CVXOPT:
        return None
    A = _to_cvx(S.tocoo(), lower=True)
    x = matrix(np.ascontiguousarray(rhs, dtype=np.float64))
    try:
        F = cholmod.symbolic(A)
        cholmod.numeric(A, F)
        cholmod.solve(F, x)
    except ArithmeticError:
        return None
    return np.asarray(x, dtype=np.float64).ravel()


def solve_lu(K, rhs) -> np.ndarray | None:
    """Solve a general sparse system with UMFPACK; None asks for a fallback."""
    if not _HAVE_CVXOPT:
        return None
    A = _to_cvx(K.tocoo())
    x = matrix(np.ascontiguousarray(rhs, dtype=np.float64))
    try:
        Fs = umfpack.symbolic(A)
        Fn = umfpack.numeric(A, Fs)
        umfpack.solve(A, Fn, x)
    except ArithmeticError:
        return None
    return np.asarray(x, dtype=np.float64).ravel()
