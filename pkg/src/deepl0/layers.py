"""Layer primitives with explicit forward/backward passes.

Inputs are batches with one sample per row, shape ``(n, d)``; 1-D inputs
are treated as a batch of one. Each ``*_fwd`` returns ``(output, tape)``
and the matching ``*_bwd`` consumes the tape exactly once.

Subgradient conventions at kinks: HELU uses the pass-zone slope at
``|u| = 1`` and the dead-zone slope at ``|u| = 1 - sigma``; hard
thresholding passes the gradient through kept entries; top-M pooling
treats the switches as constants.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core_linalg import ShapeError


class TapeError(RuntimeError):
    """Backward called with a tape from another layer, or twice."""


@dataclass
class LayerTape:
    kind: str
    cache: dict = field(default_factory=dict)
    consumed: bool = False

    def open(self, kind):
        if self.kind != kind:
            raise TapeError(f"tape from {self.kind!r} passed to {kind!r} backward")
        if self.consumed:
            raise TapeError(f"{kind} tape already consumed")
        self.consumed = True
        return self.cache


@dataclass
class PoolResult:
    pooled: np.ndarray
    switches: np.ndarray


def _batch(u):
    u = np.asarray(u, dtype=np.float64)
    if u.ndim == 1:
        return u[None, :]
    if u.ndim != 2:
        raise ShapeError(f"expected 1-D or 2-D input, got {u.shape}")
    return u


def _like(out, ref):
    return out[0] if np.ndim(ref) == 1 else out


# -- linear / diagonal ------------------------------------------------------

def linear_fwd(x, W, b=None):
    X = _batch(x)
    if X.shape[1] != W.shape[1]:
        raise ShapeError(f"input width {X.shape[1]} does not match weight {W.shape}")
    Y = X @ W.T
    if b is not None:
        Y = Y + b
    return _like(Y, x), LayerTape("linear", {"x": X, "W": W, "bias": b is not None, "vec": np.ndim(x) == 1})


def linear_bwd(tape, grad_out):
    c = tape.open("linear")
    G = _batch(grad_out)
    gx = G @ c["W"]
    gW = G.T @ c["x"]
    gb = G.sum(axis=0) if c["bias"] else None
    return (gx[0] if c["vec"] else gx), gW, gb


def diag_scale_fwd(x, scale):
    X = _batch(x)
    scale = np.asarray(scale, dtype=np.float64)
    if scale.shape != (X.shape[1],):
        raise ShapeError(f"scale shape {scale.shape} does not match width {X.shape[1]}")
    return _like(X * scale, x), LayerTape("diag", {"x": X, "s": scale, "vec": np.ndim(x) == 1})


def diag_scale_bwd(tape, grad_out):
    c = tape.open("diag")
    G = _batch(grad_out)
    gx = G * c["s"]
    gs = np.einsum("ij,ij->j", G, c["x"])
    return (gx[0] if c["vec"] else gx), gs


# -- thresholding neurons ---------------------------------------------------

def _check_sigma(sigma):
    if sigma is None or not 0.0 < sigma < 1.0:
        raise ValueError(f"sigma must lie in (0, 1), got {sigma}")


def helu_sigma_fwd(u, sigma):
    """Piecewise-linear relaxation of the unit hard threshold with ramp width sigma."""
    _check_sigma(sigma)
    U = _batch(u)
    return _like(kernels.helu_forward(U, sigma), u), LayerTape("helu", {"u": U, "sigma": sigma})


def helu_sigma_bwd(tape, grad_out):
    c = tape.open("helu")
    G = _batch(grad_out)
    g = G * kernels.helu_grad(c["u"], c["sigma"])
    return _like(g, grad_out)


def _check_theta(theta, p, strict=True):
    theta = np.broadcast_to(np.asarray(theta, dtype=np.float64), (p,))
    if strict and np.any(theta <= 0):
        raise ValueError("thresholds must be strictly positive")
    if not strict and np.any(theta < 0):
        raise ValueError("thresholds must be non-negative")
    return theta


def hard_threshold(u, theta):
    """``u_i`` where ``|u_i| >= theta_i``, else 0."""
    U = _batch(u)
    theta = _check_theta(theta, U.shape[1])
    return _like(kernels.hard_threshold(U, theta), u)


def hard_threshold_composed(u, theta):
    """Same operator built from scaling layers: ``theta * h_1(u * (1/theta))``."""
    U = _batch(u)
    theta = _check_theta(theta, U.shape[1])
    r = U * (1.0 / theta)
    return _like(theta * kernels.hard_threshold(r, np.ones_like(theta)), u)


def hard_threshold_fwd(u, theta):
    U = _batch(u)
    theta = _check_theta(theta, U.shape[1])
    out = kernels.hard_threshold(U, theta)
    return _like(out, u), LayerTape("hard", {"keep": np.abs(U) >= theta})


def hard_threshold_bwd(tape, grad_out):
    c = tape.open("hard")
    G = _batch(grad_out)
    return _like(np.where(c["keep"], G, 0.0), grad_out)


def soft_shrink(u, theta):
    """``sign(u_i) * max(|u_i| - theta_i, 0)``."""
    U = _batch(u)
    theta = _check_theta(theta, U.shape[1], strict=False)
    return _like(kernels.soft_shrink(U, theta), u)


def soft_shrink_fwd(u, theta):
    U = _batch(u)
    theta = _check_theta(theta, U.shape[1], strict=False)
    out = kernels.soft_shrink(U, theta)
    return _like(out, u), LayerTape("soft", {"u": U, "active": np.abs(U) > theta})


def soft_shrink_bwd(tape, grad_out):
    """Returns ``(grad_u, grad_theta)``."""
    c = tape.open("soft")
    G = _batch(grad_out)
    act = c["active"]
    gu = np.where(act, G, 0.0)
    gtheta = -np.einsum("ij,ij->j", gu, np.sign(c["u"]))
    return _like(gu, grad_out), gtheta


def relu_fwd(x):
    X = _batch(x)
    return _like(np.maximum(X, 0.0), x), LayerTape("relu", {"pos": X > 0})


def relu_bwd(tape, grad_out):
    c = tape.open("relu")
    return _like(np.where(c["pos"], _batch(grad_out), 0.0), grad_out)


def dropout_fwd(x, keep, rng, train=True):
    """Inverted dropout; the exact identity when ``train`` is False."""
    if not 0.0 < keep <= 1.0:
        raise ValueError(f"keep probability must lie in (0, 1], got {keep}")
    X = _batch(x)
    if not train or keep == 1.0:
        return x, LayerTape("dropout", {"scale": None})
    scale = (rng.random(X.shape) < keep) / keep
    return _like(X * scale, x), LayerTape("dropout", {"scale": scale})


def dropout_bwd(tape, grad_out):
    c = tape.open("dropout")
    if c["scale"] is None:
        return grad_out
    return _like(_batch(grad_out) * c["scale"], grad_out)


# -- max_M pooling ----------------------------------------------------------

def maxM_pool(u, M):
    """Top-M entries by magnitude and their positions (ascending index order)."""
    U = _batch(u)
    M = int(M)
    if not 1 <= M <= U.shape[1]:
        raise ValueError(f"M={M} outside [1, {U.shape[1]}]")
    idx = kernels.topm_indices(U, M)
    pooled = np.take_along_axis(U, idx, axis=1)
    if np.ndim(u) == 1:
        return PoolResult(pooled[0], idx[0])
    return PoolResult(pooled, idx)


def maxM_unpool(pr, p):
    pooled = np.atleast_2d(pr.pooled)
    switches = np.atleast_2d(pr.switches)
    out = np.zeros((pooled.shape[0], int(p)))
    np.put_along_axis(out, switches, pooled, axis=1)
    return out[0] if np.ndim(pr.pooled) == 1 else out


def maxM_pool_fwd(u, M):
    pr = maxM_pool(u, M)
    return pr, LayerTape("pool", {"switches": np.atleast_2d(pr.switches), "p": np.shape(u)[-1],
                                  "vec": np.ndim(u) == 1})


def maxM_pool_bwd(tape, grad_out):
    """Route the gradient of each pooled value back to its switch position."""
    c = tape.open("pool")
    G = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
    gin = np.zeros((G.shape[0], c["p"]))
    np.put_along_axis(gin, c["switches"], G, axis=1)
    return gin[0] if c["vec"] else gin


def maxM_unpool_bwd(pr, grad_out):
    G = _batch(grad_out)
    g = np.take_along_axis(G, np.atleast_2d(pr.switches), axis=1)
    return g[0] if np.ndim(grad_out) == 1 else g


def topm_fwd(u, M):
    """``unpool(pool(u))``: projection onto codes with at most M nonzeros."""
    pr, tape = maxM_pool_fwd(u, M)
    out = maxM_unpool(pr, np.shape(u)[-1])
    tape.cache["pr"] = pr
    return out, tape


def topm_bwd(tape, grad_out):
    return maxM_pool_bwd(tape, maxM_unpool_bwd(tape.cache["pr"], grad_out))


# -- softmax ----------------------------------------------------------------

def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax_probs(a, omega):
    """Class/cluster probabilities with logits ``-omega_j . a``."""
    return softmax(-_batch(a) @ omega.T)


def softmax_xent_fwd(a, omega, labels):
    """Mean cross-entropy of labels under logits ``z_j = -omega_j . a``."""
    A = _batch(a)
    labels = np.atleast_1d(np.asarray(labels))
    K = omega.shape[0]
    if labels.shape != (A.shape[0],):
        raise ShapeError("one label per sample required")
    if np.any((labels < 0) | (labels >= K)):
        raise ValueError(f"labels must lie in [0, {K})")
    z = -A @ omega.T
    zs = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(zs).sum(axis=1))
    nll = logsum - zs[np.arange(len(labels)), labels]
    probs = np.exp(zs - logsum[:, None])
    return float(nll.mean()), LayerTape("xent", {"a": A, "omega": omega, "labels": labels,
                                                 "probs": probs, "vec": np.ndim(a) == 1})


def softmax_xent_bwd(tape, grad_out=1.0):
    """Returns ``(grad_a, grad_omega)`` for upstream scalar ``grad_out``."""
    c = tape.open("xent")
    n = len(c["labels"])
    dz = c["probs"].copy()
    dz[np.arange(n), c["labels"]] -= 1.0
    dz *= grad_out / n
    # z = -A omega^T
    ga = -dz @ c["omega"]
    gomega = -dz.T @ c["a"]
    return (ga[0] if c["vec"] else ga), gomega
