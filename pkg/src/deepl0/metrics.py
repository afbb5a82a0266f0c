"""Evaluation metrics: code prediction error, support error, classification and clustering error."""
from dataclasses import dataclass
import csv
import hashlib
import io
import itertools
import json
import math

import numpy as np
from scipy.optimize import linear_sum_assignment


class UndefinedMetricError(ValueError):
    pass


@dataclass
class EvalReport:
    metric: str
    value: float
    n_samples: int
    config_hash: str = ""

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise UndefinedMetricError(f"{self.metric} is not finite")


def config_fingerprint(config):
    """Short stable hash of a JSON-serializable config (keys sorted)."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def reports_to_csv(reports, header=True):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(["metric", "value", "n", "config_hash"])
    for r in reports:
        w.writerow([r.metric, repr(float(r.value)), r.n_samples, r.config_hash])
    return buf.getvalue()


def append_reports(path, reports):
    new = not _nonempty(path)
    with open(path, "a", newline="") as f:
        f.write(reports_to_csv(reports, header=new))


def _nonempty(path):
    try:
        with open(path, "rb") as f:
            return bool(f.read(1))
    except FileNotFoundError:
        return False


def _aligned(pred, opt):
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    opt = np.atleast_2d(np.asarray(opt, dtype=np.float64))
    if pred.shape != opt.shape:
        raise ValueError(f"predicted {pred.shape} and reference {opt.shape} codes differ")
    return pred, opt


def prediction_error(pred_codes, opt_codes, per_sample=False):
    """Normalized squared error in percent.

    Aggregate form: ``100 * sum ||pred - opt||^2 / sum ||opt||^2``. With
    ``per_sample`` the ratio is taken per sample and averaged (samples with
    zero reference codes are skipped).
    """
    pred, opt = _aligned(pred_codes, opt_codes)
    err = np.einsum("ij,ij->i", pred - opt, pred - opt)
    ref = np.einsum("ij,ij->i", opt, opt)
    if per_sample:
        ok = ref > 0
        if not np.any(ok):
            raise UndefinedMetricError("all reference codes are zero")
        return 100.0 * float(np.mean(err[ok] / ref[ok]))
    if ref.sum() == 0:
        raise UndefinedMetricError("all reference codes are zero")
    return 100.0 * float(err.sum() / ref.sum())


def support_error(pred_codes, opt_codes):
    """Mean size of the symmetric difference of the exact-nonzero supports."""
    pred, opt = _aligned(pred_codes, opt_codes)
    return float(np.mean(np.count_nonzero((pred != 0) != (opt != 0), axis=1)))


def classification_error(assignments, labels):
    a = np.asarray(assignments)
    y = np.asarray(labels)
    if a.shape != y.shape:
        raise ValueError("assignments and labels must align")
    return 100.0 * float(np.mean(a != y))


def clustering_error(assignments, labels, K):
    """Error under the best one-to-one cluster-to-label mapping, in percent.

    Exhaustive over permutations for ``K <= 8``, Hungarian assignment beyond.
    """
    a = np.asarray(assignments, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if a.shape != y.shape:
        raise ValueError("assignments and labels must align")
    if a.size and (a.max() >= K or y.max() >= K or a.min() < 0 or y.min() < 0):
        raise ValueError(f"cluster ids and labels must lie in [0, {K})")
    counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(counts, (a, y), 1)
    if K <= 8:
        perms = np.array(list(itertools.permutations(range(K))))
        best = counts[np.arange(K), perms].sum(axis=1).max()
    else:
        rows, cols = linear_sum_assignment(-counts)
        best = counts[rows, cols].sum()
    return 100.0 * (1.0 - best / len(a))
