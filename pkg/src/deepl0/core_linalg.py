"""Small dense linear-algebra helpers shared by the solvers and encoders."""
import warnings

import numpy as np


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


class ConvergenceWarning(UserWarning):
    pass


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def matvec(A, v):
    A = np.asarray(A, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if A.ndim != 2 or v.ndim != 1 or A.shape[1] != v.shape[0]:
        raise ShapeError(f"cannot multiply {A.shape} by {v.shape}")
    return A @ v


def spectral_norm(A, tol=1e-12, max_iter=10000):
    """Largest singular value of ``A`` by power iteration on ``A^T A``.

    The start vector is the normalized all-ones vector so results are
    reproducible. Emits a :class:`ConvergenceWarning` and returns the last
    estimate if the relative change has not dropped below ``tol``.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.size == 0:
        raise ShapeError(f"spectral_norm needs a non-empty 2-D array, got {A.shape}")
    n = A.shape[1]
    v = np.full(n, 1.0 / np.sqrt(n))
    est = 0.0
    for _ in range(max_iter):
        Av = A @ v
        new = float(np.linalg.norm(Av))
        w = A.T @ Av
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            if est == 0.0 and not np.any(A):
                return 0.0
            # start vector in the null space; restart deterministically
            v = np.cos(np.arange(n) + 1.0)
            v /= np.linalg.norm(v)
            continue
        v = w / nrm
        if abs(new - est) <= tol * new:
            return new
        est = new
    warnings.warn(f"power iteration did not reach tol={tol} in {max_iter} steps",
                  ConvergenceWarning, stacklevel=2)
    return est
