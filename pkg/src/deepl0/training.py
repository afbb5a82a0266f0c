"""Mini-batch SGD for the encoders with regression, classification and clustering heads."""
from dataclasses import dataclass, field
import csv
import io
import logging
import math
import time

import numpy as np

from . import encoders, layers
from .encoders import Kind

log = logging.getLogger(__name__)

LOSSES = ("regression", "classification", "clustering")


class TrainingDivergence(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.0
    batch_size: int = 128
    epochs: int = 50
    sigma0: float = 0.2
    sigma_divisor: float = 10.0
    sigma_floor: float = 0.01
    loss: str = "regression"
    n_classes: int = 0
    balance: float = 1.0
    grad_clip: float = None
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.momentum != 0:
            raise ValueError("only plain SGD (momentum 0) is supported")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0 <= self.sigma_floor <= self.sigma0 < 1 or self.sigma0 <= 0:
            raise ValueError("need 0 <= sigma_floor <= sigma0 < 1")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.loss != "regression" and self.n_classes < 2:
            raise ValueError("classification/clustering need n_classes >= 2")


@dataclass
class TrainReport:
    rows: list = field(default_factory=list)

    def add(self, epoch, loss, metric, sigma, seconds):
        self.rows.append({"epoch": epoch, "loss": loss, "metric": metric,
                          "sigma": sigma, "seconds": seconds})

    def to_csv(self, fingerprint=None, with_time=True):
        buf = io.StringIO()
        if fingerprint:
            buf.write(f"# config {fingerprint}\n")
        cols = ["epoch", "loss", "metric", "sigma", "seconds"]
        if not with_time:
            cols = cols[:-1]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([r["epoch"]] + [repr(float(r[c])) for c in cols[1:]])
        return buf.getvalue()


def sigma_schedule(epoch, cfg):
    """``max(sigma0 / divisor**epoch, floor)``."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return max(cfg.sigma0 / cfg.sigma_divisor ** epoch, cfg.sigma_floor)


# -- losses -----------------------------------------------------------------

def loss_code_regression(pred, target):
    """Mean over the batch of ``0.5 * ||pred - target||^2`` and its gradient."""
    pred = np.atleast_2d(pred)
    target = np.atleast_2d(target)
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target
    n = len(diff)
    return 0.5 * float(np.einsum("ij,ij->", diff, diff)) / n, diff / n


def loss_classification(codes, labels, omega):
    """Softmax cross-entropy; returns ``(loss, grad_codes, grad_omega)``."""
    loss, tape = layers.softmax_xent_fwd(codes, omega, labels)
    ga, gw = layers.softmax_xent_bwd(tape)
    return loss, ga, gw


def loss_clustering(codes, omega, n_clusters, balance=1.0):
    """Pseudo-label clustering loss.

    Each sample is assigned to the cluster maximizing ``p_ij / q_j``, where
    ``q`` is the batch-mean probability, so a nearly uniform head does not
    push every sample into one cluster. The loss is the cross-entropy toward
    those (fixed) assignments plus ``balance * KL(q || uniform)``.
    Returns ``(loss, grad_codes, grad_omega, assignments)``.
    """
    A = np.atleast_2d(codes)
    if omega.shape[0] != n_clusters or n_clusters < 2:
        raise ValueError("omega must have one row per cluster and n_clusters >= 2")
    n = len(A)
    P = layers.softmax_probs(A, omega)
    q = P.mean(axis=0)
    qs = np.maximum(q, 1e-300)
    assign = np.argmax(P / qs, axis=1)
    ce, tape = layers.softmax_xent_fwd(A, omega, assign)
    ga, gw = layers.softmax_xent_bwd(tape)

    kl = float(np.sum(q * np.log(qs * n_clusters)))
    dP = np.broadcast_to((np.log(qs * n_clusters) + 1.0) / n, P.shape)
    dz = P * (dP - np.einsum("ij,ij->i", P, dP)[:, None])
    dz *= balance
    ga = ga - dz @ omega
    gw = gw - dz.T @ A
    return ce + balance * kl, ga, gw, assign


# -- SGD --------------------------------------------------------------------

def init_head(p, n_classes, seed=0, scale=0.01):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n_classes, p)) * scale


def _loss_and_grad(params, codes, cfg, targets, labels):
    if cfg.loss == "regression":
        loss, g = loss_code_regression(codes, targets)
        return loss, g, None
    if cfg.loss == "classification":
        return loss_classification(codes, labels, params.head)
    loss, g, gw, _ = loss_clustering(codes, params.head, cfg.n_classes, cfg.balance)
    return loss, g, gw


def _clip(grads, limit):
    total = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if total > limit:
        for g in grads.values():
            g *= limit / total


def sgd_train(params, X, cfg, targets=None, labels=None, eval_fn=None):
    """Train ``params`` in place with plain SGD and return ``(params, TrainReport)``.

    ``X`` may also be a :class:`~deepl0.solvers.SparseProblem`, whose codes
    become the regression targets. ``eval_fn(params)`` (optional) supplies the
    per-epoch metric column.
    """
    if hasattr(X, "samples"):
        targets = X.codes if targets is None else targets
        X = X.samples
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = len(X)
    if cfg.loss == "regression":
        if targets is None:
            raise ValueError("code regression needs target codes")
        targets = np.atleast_2d(targets)
        if len(targets) != n:
            raise ValueError("targets must align with samples")
    elif cfg.loss == "classification":
        if labels is None:
            raise ValueError("classification needs labels")
        labels = np.asarray(labels)
    if cfg.loss != "regression" and params.head is None:
        params.head = init_head(params.p, cfg.n_classes, seed=cfg.seed + 1)

    rng = np.random.default_rng(cfg.seed)
    drop_rng = np.random.default_rng([cfg.seed, 1])
    report = TrainReport()
    tensors = params.tensors()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        sigma = sigma_schedule(epoch, cfg)
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            codes, trace = encoders.forward(params, X[idx], mode="train", sigma=sigma,
                                            rng_seed=drop_rng)
            loss, g_codes, g_head = _loss_and_grad(
                params, codes, cfg,
                None if targets is None else targets[idx],
                None if labels is None else labels[idx])
            if not math.isfinite(loss):
                raise TrainingDivergence(f"non-finite loss at epoch {epoch}, batch {bi}")
            grads = encoders.backward(params, trace, g_codes)
            if g_head is not None:
                grads["head"] = g_head
            if cfg.grad_clip:
                _clip(grads, cfg.grad_clip)
            for name, g in grads.items():
                tensors[name] -= cfg.learning_rate * g
            if params.theta is not None and params.kind is Kind.L0REG:
                np.maximum(params.theta, encoders.THETA_FLOOR, out=params.theta)
            total += loss * len(idx)
            seen += len(idx)
        metric = float(eval_fn(params)) if eval_fn is not None else float("nan")
        report.add(epoch, total / max(seen, 1), metric, sigma, time.perf_counter() - t0)
        log.info("epoch %d loss %.6g metric %.6g sigma %.3g", epoch, total / max(seen, 1),
                 metric, sigma)
    return params, report
