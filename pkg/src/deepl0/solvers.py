"""Iterative sparse coders (ISTA, IHT, M-sparse IHT) and dictionary learning.

Every solver accepts a single sample ``x`` of shape ``(m,)`` or a batch of
shape ``(n, m)`` (one sample per row) and works with the *scaled*
dictionary, whose spectral norm is 0.99, so the unit-step iterations are
stable and the IHT objectives never increase.
"""
from dataclasses import dataclass, field
import logging
import warnings

import numpy as np

from . import kernels
from .core_linalg import ConvergenceWarning, ShapeError, as_matrix, spectral_norm

log = logging.getLogger(__name__)

#: target operator norm of the scaled dictionary
SPECTRAL_TARGET = 0.99


class DivergenceError(FloatingPointError):
    """An iterate became non-finite (dictionary scaling was violated)."""


@dataclass
class Dictionary:
    """Unit-norm atoms ``D`` plus the scale that brings ``||scale * D||_2`` to 0.99.

    ``column_norms`` keeps the norms of the raw atoms before normalization.
    """

    D: np.ndarray
    column_norms: np.ndarray
    spectral_scale: float

    @classmethod
    def from_matrix(cls, raw, tol=1e-12):
        raw = as_matrix(raw, "dictionary")
        norms = np.linalg.norm(raw, axis=0)
        if np.any(norms == 0.0):
            raise ValueError("dictionary has an all-zero atom")
        D = raw / norms
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            top = spectral_norm(D, tol=tol)
        if any(issubclass(w.category, ConvergenceWarning) for w in caught):
            # nearly tied top singular values stall power iteration
            top = float(np.linalg.norm(D, 2))
        scale = SPECTRAL_TARGET / top
        return cls(D=D, column_norms=norms, spectral_scale=float(scale))

    @property
    def scaled(self):
        return self.D * self.spectral_scale

    @property
    def m(self):
        return self.D.shape[0]

    @property
    def p(self):
        return self.D.shape[1]


@dataclass(frozen=True)
class L0Reg:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")


@dataclass(frozen=True)
class MSparse:
    M: int


@dataclass
class SparseProblem:
    dictionary: Dictionary
    samples: np.ndarray
    regime: object
    codes: np.ndarray = None

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.shape[1] != self.dictionary.m:
            raise ShapeError("sample length does not match dictionary rows")
        if isinstance(self.regime, MSparse) and not 1 <= self.regime.M <= self.dictionary.p:
            raise ValueError(f"M={self.regime.M} outside [1, {self.dictionary.p}]")
        if self.codes is not None:
            self.codes = np.atleast_2d(np.asarray(self.codes, dtype=np.float64))
            if self.codes.shape != (self.samples.shape[0], self.dictionary.p):
                raise ShapeError("codes must align one-to-one with samples")


@dataclass
class SolveTrace:
    """Result of an IHT run.

    ``objective_per_iter[0]`` is the objective at the starting point and
    ``objective_per_iter[k]`` after iteration ``k``; for a batch it has
    shape ``(iterates + 1, n)``.
    """

    iterates: int
    objective_per_iter: np.ndarray
    final_code: np.ndarray
    history: list = field(default_factory=list, repr=False)


def _prep(x, dictionary):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.ndim != 2 or X.shape[1] != dictionary.m:
        raise ShapeError(f"samples of shape {x.shape} do not match dictionary with m={dictionary.m}")
    return X, single


def _prep_codes(a, n, p, name="a0"):
    A = np.atleast_2d(np.asarray(a, dtype=np.float64))
    if A.shape == (1, p) and n > 1:
        A = np.repeat(A, n, axis=0)
    if A.shape != (n, p):
        raise ShapeError(f"{name} has shape {np.shape(a)}, expected ({n}, {p}) or ({p},)")
    return A.copy()


def _check_finite(A, it):
    if not np.all(np.isfinite(A)):
        raise DivergenceError(f"non-finite iterate at iteration {it}")


def _gradient_point(A, X, Ds):
    # a + D^T (x - D a), row-wise; overflow surfaces through _check_finite
    with np.errstate(over="ignore", invalid="ignore"):
        return A + (X - A @ Ds.T) @ Ds


def hard_threshold_topm(U, M):
    """Keep the M largest-magnitude entries of each row (lower index wins ties)."""
    U = np.atleast_2d(U)
    idx = kernels.topm_indices(U, M)
    out = np.zeros_like(U)
    np.put_along_axis(out, idx, np.take_along_axis(U, idx, axis=1), axis=1)
    return out


def objective_l0reg(x, dictionary, a, lam):
    """``||x - D a||^2 + lam * ||a||_0`` per sample (no 1/2 factor)."""
    X, single = _prep(x, dictionary)
    A = _prep_codes(a, X.shape[0], dictionary.p, "a")
    R = X - A @ dictionary.scaled.T
    val = np.einsum("ij,ij->i", R, R) + lam * np.count_nonzero(A, axis=1)
    return float(val[0]) if single else val


def objective_msparse(x, dictionary, a):
    """``||x - D a||^2`` per sample."""
    X, single = _prep(x, dictionary)
    A = _prep_codes(a, X.shape[0], dictionary.p, "a")
    R = X - A @ dictionary.scaled.T
    val = np.einsum("ij,ij->i", R, R)
    return float(val[0]) if single else val


def ista_solve(x, dictionary, lam, iters=100):
    """ISTA for the l1-relaxed problem, unit step, starting from zero."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    X, single = _prep(x, dictionary)
    Ds = dictionary.scaled
    theta = np.full(dictionary.p, float(lam))
    A = np.zeros((X.shape[0], dictionary.p))
    for it in range(iters):
        U = _gradient_point(A, X, Ds)
        _check_finite(U, it)
        A = kernels.soft_shrink(U, theta)
    return A[0] if single else A


def _warm_start(X, dictionary, a0, warm_start, lam, ista_iters):
    n, p = X.shape[0], dictionary.p
    if a0 is not None:
        return _prep_codes(a0, n, p)
    if warm_start:
        return ista_solve(X, dictionary, lam, ista_iters)
    return np.zeros((n, p))


def _run_iht(X, dictionary, A, iters, step, objective, keep_history):
    Ds = dictionary.scaled
    objs = [objective(A)]
    history = [A.copy()] if keep_history else []
    done = 0
    for it in range(iters):
        U = _gradient_point(A, X, Ds)
        _check_finite(U, it)
        A_new = step(U)
        done += 1
        objs.append(objective(A_new))
        if keep_history:
            history.append(A_new.copy())
        if np.array_equal(A_new, A):
            # exact fixed point: every further iterate is identical
            A = A_new
            break
        A = A_new
    return A, np.asarray(objs), done, history


def iht_l0reg_solve(x, dictionary, lam, iters, a0=None, *, warm_start=True,
                    ista_iters=100, keep_history=False):
    """Iterative hard thresholding for the l0-regularized problem.

    Iterates ``a <- h_{sqrt(lam)}(a + D^T (x - D a))``. Without ``a0`` the
    start point is the ISTA solution (``warm_start=True``) or zero.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    X, single = _prep(x, dictionary)
    A = _warm_start(X, dictionary, a0, warm_start, lam, ista_iters)
    theta = np.full(dictionary.p, np.sqrt(lam))
    Ds = dictionary.scaled

    def objective(A):
        R = X - A @ Ds.T
        return np.einsum("ij,ij->i", R, R) + lam * np.count_nonzero(A, axis=1)

    A, objs, done, hist = _run_iht(X, dictionary, A, iters,
                                   lambda U: kernels.hard_threshold(U, theta),
                                   objective, keep_history)
    if single:
        return SolveTrace(done, objs[:, 0], A[0], [h[0] for h in hist])
    return SolveTrace(done, objs, A, hist)


def iht_msparse_solve(x, dictionary, M, iters, a0=None, *, warm_start=True,
                      warm_lam=0.1, ista_iters=100, keep_history=False):
    """Iterative hard thresholding onto the set of M-sparse codes."""
    M = int(M)
    if not 1 <= M <= dictionary.p:
        raise ValueError(f"M={M} outside [1, {dictionary.p}]")
    X, single = _prep(x, dictionary)
    A = _warm_start(X, dictionary, a0, warm_start, warm_lam, ista_iters)
    Ds = dictionary.scaled

    def objective(A):
        R = X - A @ Ds.T
        return np.einsum("ij,ij->i", R, R)

    if np.any(np.count_nonzero(A, axis=1) > M):
        # the objective is only defined on the feasible set
        A = hard_threshold_topm(A, M)
    A, objs, done, hist = _run_iht(X, dictionary, A, iters,
                                   lambda U: hard_threshold_topm(U, M),
                                   objective, keep_history)
    if single:
        return SolveTrace(done, objs[:, 0], A[0], [h[0] for h in hist])
    return SolveTrace(done, objs, A, hist)


def _replace_atoms(dct, A, R, overlap=0.99):
    """Swap unused or duplicated atoms for the worst-reconstructed residuals."""
    G = np.abs(dct.D.T @ dct.D)
    dup = np.any(np.triu(G, 1) > overlap, axis=0)
    bad = np.flatnonzero(dup | (np.count_nonzero(A, axis=0) == 0))
    if len(bad) == 0:
        return dct, 0
    err = np.einsum("ij,ij->i", R, R)
    worst = np.argsort(-err, kind="stable")[:len(bad)]
    worst = worst[err[worst] > 0]
    if len(worst) == 0:
        return dct, 0
    D = dct.D.copy()
    D[:, bad[:len(worst)]] = R[worst].T
    return Dictionary.from_matrix(D, tol=1e-9), len(worst)


def learn_dictionary(samples, p, lam, epochs, *, batch_size=128, ista_iters=50,
                     seed=0, init=None, return_history=False):
    """Online alternating minimization for a dictionary with ``p`` atoms.

    Each mini-batch is coded by ISTA against the current scaled dictionary,
    then the scaled dictionary takes one gradient step on the batch
    reconstruction error (step ``1/||A^T A / b||``). Columns are re-normalized
    and the spectral scale recomputed after every step. After each epoch,
    atoms that went unused or duplicate another atom are re-seeded with the
    residuals of the worst-reconstructed samples.
    """
    X = as_matrix(np.atleast_2d(samples), "samples")
    n, m = X.shape
    if not np.any(X):
        raise ValueError("cannot learn a dictionary from all-zero samples")
    if n < p:
        log.warning("only %d samples for %d atoms", n, p)
    rng = np.random.default_rng(seed)
    if init is None:
        nz = np.flatnonzero(np.linalg.norm(X, axis=1) > 0)
        pick = rng.choice(nz, size=p, replace=len(nz) < p)
        raw = X[pick].T + 1e-3 * rng.standard_normal((m, p))
    else:
        raw = as_matrix(init, "init")
    dct = Dictionary.from_matrix(raw, tol=1e-9)

    def coded(d):
        A = ista_solve(X, d, lam, ista_iters)
        return A, X - A @ d.scaled.T

    A, R = coded(dct)
    history = [float(np.einsum("ij,ij->", R, R) / n)]
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            Xb = X[order[start:start + batch_size]]
            Ab = ista_solve(Xb, dct, lam, ista_iters)
            gram = Ab.T @ Ab / len(Xb)
            L = np.linalg.norm(gram, 2)
            if L <= 0.0:
                continue
            Ds = dct.scaled
            grad = -(Xb - Ab @ Ds.T).T @ Ab / len(Xb)
            Ds = Ds - grad / L
            norms = np.linalg.norm(Ds, axis=0)
            # atoms that collapsed keep their previous direction
            dead = norms == 0.0
            Ds[:, dead] = dct.D[:, dead]
            dct = Dictionary.from_matrix(Ds, tol=1e-9)
        A, R = coded(dct)
        dct, replaced = _replace_atoms(dct, A, R)
        if replaced:
            A, R = coded(dct)
        history.append(float(np.einsum("ij,ij->", R, R) / n))
        log.info("dictionary epoch %d: reconstruction error %.6g (%d atoms replaced)",
                 epoch + 1, history[-1], replaced)
    dct = Dictionary.from_matrix(dct.D)
    if return_history:
        return dct, history
    return dct
