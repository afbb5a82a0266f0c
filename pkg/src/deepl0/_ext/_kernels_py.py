"""NumPy implementations of the elementwise and selection kernels.

These define the reference semantics; the compiled backend must match them
bit for bit. All functions take C-contiguous float64 arrays of shape (n, p).
"""
import numpy as np


def hard_threshold(u, theta):
    return np.where(np.abs(u) >= theta, u, 0.0)


def helu_forward(r, sigma):
    knee = 1.0 - sigma
    width = 1.0 - knee
    a = np.abs(r)
    out = np.where(a >= 1.0, r, 0.0)
    pos = (r > knee) & (r < 1.0)
    neg = (r < -knee) & (r > -1.0)
    out[pos] = (r[pos] - knee) / width
    out[neg] = (r[neg] + knee) / width
    return out


def helu_grad(r, sigma):
    knee = 1.0 - sigma
    width = 1.0 - knee
    a = np.abs(r)
    out = np.where(a >= 1.0, 1.0, 0.0)
    out[(a > knee) & (a < 1.0)] = 1.0 / width
    return out


def soft_shrink(u, theta):
    return np.sign(u) * np.maximum(np.abs(u) - theta, 0.0)


def topm_indices(u, m):
    # stable sort on -|u| keeps the lower index first among ties
    order = np.argsort(-np.abs(u), axis=1, kind="stable")[:, :m]
    return np.sort(order, axis=1).astype(np.int64)
