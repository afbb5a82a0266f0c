"""Unrolled encoders: Deep l0-regularized, Deep M-sparse, LISTA, baseline MLP.

All unrolled kinds share one recursion over a batch ``X`` (rows are samples)::

    b   = X W^T
    z_0 = act(b)
    z_k = act(b + z_{k-1} S^T),   k = 1..K

with the same ``W``, ``S`` (and thresholds) reused by every stage. With the
analytic initialization ``W = D^T``, ``S = I - D^T D`` the network output
equals K + 1 iterations of the matching iterative solver started from zero.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import layers
from .core_linalg import ShapeError

#: keep-probabilities after the three hidden layers of the baseline
BASELINE_KEEP = (0.9, 0.9, 0.5)

#: thresholds are projected back above this after every update
THETA_FLOOR = 1e-6


class Kind(str, Enum):
    L0REG = "l0reg"
    MSPARSE = "msparse"
    LISTA = "lista"
    MLP = "mlp"


@dataclass
class EncoderParams:
    kind: Kind
    W: np.ndarray = None
    S: np.ndarray = None
    theta: np.ndarray = None
    M: int = None
    K: int = 2
    mlp_weights: list = field(default_factory=list)
    head: np.ndarray = None

    def __post_init__(self):
        self.kind = Kind(self.kind)
        self.validate()

    def validate(self):
        if self.kind is Kind.MLP:
            if len(self.mlp_weights) != 4:
                raise ShapeError("baseline MLP needs 4 (weight, bias) pairs")
            for (W0, _), (W1, _) in zip(self.mlp_weights, self.mlp_weights[1:]):
                if W1.shape[1] != W0.shape[0]:
                    raise ShapeError("baseline MLP layer widths do not chain")
            return
        if self.K < 1:
            raise ValueError("unfold depth K must be >= 1")
        p, m = self.W.shape
        if self.S.shape != (p, p):
            raise ShapeError(f"S has shape {self.S.shape}, expected ({p}, {p})")
        if self.kind in (Kind.L0REG, Kind.LISTA):
            if self.theta is None or self.theta.shape != (p,):
                raise ShapeError("threshold vector must have length p")
            if self.kind is Kind.L0REG and np.any(self.theta <= 0):
                raise ValueError("thresholds must be strictly positive")
        if self.kind is Kind.MSPARSE and not 1 <= int(self.M) <= p:
            raise ValueError(f"M={self.M} outside [1, {p}]")
        if self.head is not None and self.head.shape[1] != p:
            raise ShapeError("head must have p columns")

    @property
    def p(self):
        if self.kind is Kind.MLP:
            return self.mlp_weights[-1][0].shape[0]
        return self.W.shape[0]

    @property
    def m(self):
        if self.kind is Kind.MLP:
            return self.mlp_weights[0][0].shape[1]
        return self.W.shape[1]

    def tensors(self):
        """Trainable tensors by name, in a fixed order (the arrays themselves)."""
        out = {}
        if self.kind is Kind.MLP:
            for i, (W, b) in enumerate(self.mlp_weights):
                out[f"W{i}"] = W
                out[f"b{i}"] = b
        else:
            out["W"] = self.W
            out["S"] = self.S
            if self.kind in (Kind.L0REG, Kind.LISTA):
                out["theta"] = self.theta
        if self.head is not None:
            out["head"] = self.head
        return out

    def copy(self):
        return EncoderParams(
            kind=self.kind,
            W=None if self.W is None else self.W.copy(),
            S=None if self.S is None else self.S.copy(),
            theta=None if self.theta is None else self.theta.copy(),
            M=self.M,
            K=self.K,
            mlp_weights=[(W.copy(), b.copy()) for W, b in self.mlp_weights],
            head=None if self.head is None else self.head.copy(),
        )


@dataclass
class ForwardTrace:
    kind: Kind
    tapes: dict
    n: int
    consumed: bool = False


def init_from_dictionary(dictionary, kind, *, lam=None, M=None, K=2):
    """Analytic initialization ``W = D^T``, ``S = I - D^T D`` on the scaled dictionary.

    Thresholds start at ``sqrt(lam)`` for the l0 encoder and at ``lam`` for LISTA.
    """
    kind = Kind(kind)
    Ds = dictionary.scaled
    p = Ds.shape[1]
    W = Ds.T.copy()
    S = np.eye(p) - Ds.T @ Ds
    if kind is Kind.L0REG:
        if lam is None or not lam > 0:
            raise ValueError("l0-regularized encoder needs lambda > 0")
        return EncoderParams(kind, W=W, S=S, theta=np.full(p, np.sqrt(lam)), K=K)
    if kind is Kind.LISTA:
        if lam is None or not lam > 0:
            raise ValueError("LISTA needs lambda > 0")
        return EncoderParams(kind, W=W, S=S, theta=np.full(p, float(lam)), K=K)
    if kind is Kind.MSPARSE:
        if M is None or not 1 <= int(M) <= p:
            raise ValueError(f"M must lie in [1, {p}]")
        return EncoderParams(kind, W=W, S=S, M=int(M), K=K)
    raise ValueError("the baseline MLP has no dictionary initialization; use init_baseline")


def init_baseline(m, p, seed=0):
    """He-normal ReLU layers m -> p -> p -> p, linear output p -> p, zero biases."""
    rng = np.random.default_rng(seed)
    dims = [m, p, p, p, p]
    weights = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        gain = 1.0 if i == 3 else 2.0
        weights.append((rng.standard_normal((fan_out, fan_in)) * np.sqrt(gain / fan_in),
                        np.zeros(fan_out)))
    return EncoderParams(Kind.MLP, mlp_weights=weights)


def _batch_input(params, X):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.m:
        raise ShapeError(f"input width {X.shape[1]} does not match encoder m={params.m}")
    return X, single


def _act_fwd(params, V, mode, sigma):
    kind = params.kind
    if kind is Kind.L0REG:
        if mode == "eval":
            return layers.hard_threshold_fwd(V, params.theta)
        # diag(theta) . HELU_sigma . diag(1/theta)
        r, t1 = layers.diag_scale_fwd(V, 1.0 / params.theta)
        h, t2 = layers.helu_sigma_fwd(r, sigma)
        out, t3 = layers.diag_scale_fwd(h, params.theta)
        return out, ("helu", t1, t2, t3)
    if kind is Kind.MSPARSE:
        return layers.topm_fwd(V, params.M)
    return layers.soft_shrink_fwd(V, params.theta)


def _act_bwd(params, tape, G, grads):
    kind = params.kind
    if kind is Kind.L0REG:
        if isinstance(tape, tuple):
            _, t1, t2, t3 = tape
            gh, gs_out = layers.diag_scale_bwd(t3, G)
            gr = layers.helu_sigma_bwd(t2, gh)
            gV, gs_in = layers.diag_scale_bwd(t1, gr)
            # second scaling layer holds 1/theta: d(1/theta)/dtheta = -1/theta^2
            grads["theta"] += gs_out - gs_in / params.theta ** 2
            return gV
        return layers.hard_threshold_bwd(tape, G)
    if kind is Kind.MSPARSE:
        return layers.topm_bwd(tape, G)
    gV, gtheta = layers.soft_shrink_bwd(tape, G)
    grads["theta"] += gtheta
    return gV


def _forward_unrolled(params, X, mode, sigma):
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if params.kind is Kind.L0REG and mode == "train":
        layers._check_sigma(sigma)
    X, single = _batch_input(params, X)
    b, tb = layers.linear_fwd(X, params.W)
    z, ta = _act_fwd(params, b, mode, sigma)
    stages = [(None, ta)]
    for _ in range(params.K):
        s, ts = layers.linear_fwd(z, params.S)
        z, ta = _act_fwd(params, b + s, mode, sigma)
        stages.append((ts, ta))
    trace = ForwardTrace(params.kind, {"inject": tb, "stages": stages}, len(X))
    return (z[0] if single else z), trace


def forward_l0reg(params, X, sigma=None, mode="train"):
    if params.kind is not Kind.L0REG:
        raise ValueError("forward_l0reg needs an l0reg encoder")
    return _forward_unrolled(params, X, mode, sigma)


def forward_msparse(params, X, mode="eval"):
    if params.kind is not Kind.MSPARSE:
        raise ValueError("forward_msparse needs an msparse encoder")
    return _forward_unrolled(params, X, mode, None)


def forward_lista(params, X, mode="eval"):
    if params.kind is not Kind.LISTA:
        raise ValueError("forward_lista needs a lista encoder")
    return _forward_unrolled(params, X, mode, None)


def forward_baseline(params, X, mode="eval", rng_seed=None):
    """m -> p -> p -> p -> p; ReLU + dropout after each hidden layer, linear output."""
    if params.kind is not Kind.MLP:
        raise ValueError("forward_baseline needs an mlp encoder")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    X, single = _batch_input(params, X)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    h = X
    tapes = []
    for (W, b), keep in zip(params.mlp_weights[:3], BASELINE_KEEP):
        h, tl = layers.linear_fwd(h, W, b)
        h, tr = layers.relu_fwd(h)
        h, td = layers.dropout_fwd(h, keep, rng, train=(mode == "train"))
        tapes.append((tl, tr, td))
    W, b = params.mlp_weights[3]
    out, tl = layers.linear_fwd(h, W, b)
    trace = ForwardTrace(Kind.MLP, {"hidden": tapes, "out": tl}, len(X))
    return (out[0] if single else out), trace


def forward(params, X, mode="eval", sigma=None, rng_seed=None):
    """Dispatch on ``params.kind``."""
    if params.kind is Kind.L0REG:
        return forward_l0reg(params, X, sigma, mode)
    if params.kind is Kind.MSPARSE:
        return forward_msparse(params, X, mode)
    if params.kind is Kind.LISTA:
        return forward_lista(params, X, mode)
    return forward_baseline(params, X, mode, rng_seed)


def encode(params, X, sigma=None):
    """Eval-mode codes without keeping the trace."""
    return forward(params, X, mode="eval", sigma=sigma)[0]


def backward(params, trace, grad_codes):
    """Gradients of every trainable tensor given ``dL/dcodes``.

    Returns a dict keyed like :meth:`EncoderParams.tensors` (without
    ``head``, which the loss functions differentiate).
    """
    if trace.consumed:
        raise layers.TapeError("forward trace already consumed")
    if trace.kind is not params.kind:
        raise layers.TapeError("trace was produced by a different encoder kind")
    trace.consumed = True
    G = np.atleast_2d(np.asarray(grad_codes, dtype=np.float64))
    if G.shape[0] != trace.n:
        raise ShapeError("gradient batch size does not match the forward pass")
    grads = {k: np.zeros_like(v) for k, v in params.tensors().items() if k != "head"}

    if params.kind is Kind.MLP:
        tl = trace.tapes["out"]
        G, gW, gb = layers.linear_bwd(tl, G)
        grads["W3"] += gW
        grads["b3"] += gb
        for i in (2, 1, 0):
            tl, tr, td = trace.tapes["hidden"][i]
            G = layers.dropout_bwd(td, G)
            G = layers.relu_bwd(tr, G)
            G, gW, gb = layers.linear_bwd(tl, G)
            grads[f"W{i}"] += gW
            grads[f"b{i}"] += gb
        return grads

    gb_total = np.zeros_like(G)
    stages = trace.tapes["stages"]
    for ts, ta in reversed(stages):
        gV = _act_bwd(params, ta, G, grads)
        gb_total += gV
        if ts is None:
            break
        G, gS, _ = layers.linear_bwd(ts, gV)
        grads["S"] += gS
    _, gW, _ = layers.linear_bwd(trace.tapes["inject"], gb_total)
    grads["W"] += gW
    return grads
