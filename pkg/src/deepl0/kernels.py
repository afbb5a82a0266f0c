"""Hot elementwise/selection kernels with a compiled fast path.

The Cython extension ``deepl0._ext._kernels`` is used when it was built;
otherwise the NumPy implementations in ``deepl0._ext._kernels_py`` are used.
Set ``DEEPL0_KERNELS=python`` to force the NumPy path.

All public functions accept 1-D (single vector) or 2-D (batch, one sample
per row) float arrays and return arrays of the same rank.
"""
import os

import numpy as np

from ._ext import _kernels_py as python_backend

try:
    from ._ext import _kernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("DEEPL0_KERNELS", "").lower() != "python":
    _impl = compiled_backend
    BACKEND = "cython"
else:
    _impl = python_backend
    BACKEND = "python"

__all__ = [
    "BACKEND",
    "hard_threshold",
    "helu_forward",
    "helu_grad",
    "soft_shrink",
    "topm_indices",
    "use_backend",
]


def use_backend(name):
    """Switch kernel implementation at runtime ('python' or 'cython')."""
    global _impl, BACKEND
    if name == "python":
        _impl, BACKEND = python_backend, "python"
    elif name == "cython":
        if compiled_backend is None:
            raise RuntimeError("compiled kernels are not available; build the extension first")
        _impl, BACKEND = compiled_backend, "cython"
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def _as_batch(u):
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        return np.ascontiguousarray(u[None, :]), True
    if u.ndim != 2:
        raise ValueError(f"expected 1-D or 2-D array, got shape {u.shape}")
    return np.ascontiguousarray(u), False


def _vec(theta, p):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim == 0:
        theta = np.full(p, float(theta))
    if theta.shape != (p,):
        raise ValueError(f"threshold vector has shape {theta.shape}, expected ({p},)")
    return np.ascontiguousarray(theta)


def _ret(out, squeeze):
    return out[0] if squeeze else out


def hard_threshold(u, theta):
    """Keep entries with ``|u_i| >= theta_i``; zero the rest."""
    ub, sq = _as_batch(u)
    return _ret(_impl.hard_threshold(ub, _vec(theta, ub.shape[1])), sq)


def helu_forward(r, sigma):
    """Continuous piecewise-linear surrogate of the unit hard threshold."""
    rb, sq = _as_batch(r)
    return _ret(_impl.helu_forward(rb, float(sigma)), sq)


def helu_grad(r, sigma):
    """Elementwise derivative of :func:`helu_forward` (kink convention fixed)."""
    rb, sq = _as_batch(r)
    return _ret(_impl.helu_grad(rb, float(sigma)), sq)


def soft_shrink(u, theta):
    ub, sq = _as_batch(u)
    return _ret(_impl.soft_shrink(ub, _vec(theta, ub.shape[1])), sq)


def topm_indices(u, m):
    """Indices of the ``m`` largest-magnitude entries per row, ascending.

    Ties at the cut-off keep the lower index.
    """
    ub, sq = _as_batch(u)
    m = int(m)
    if not 1 <= m <= ub.shape[1]:
        raise ValueError(f"M must lie in [1, {ub.shape[1]}], got {m}")
    return _ret(_impl.topm_indices(ub, m), sq)
