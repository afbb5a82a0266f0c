import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepl0 import encoders, layers, solvers
from deepl0.core_linalg import ShapeError
from deepl0.encoders import EncoderParams
from gradients import gradcheck, safe
from conftest import random_dictionary


def make(kind, rng, m=5, p=7, K=2, lam=0.3, M=3):
    d = random_dictionary(rng, m, p)
    return d, encoders.init_from_dictionary(d, kind, lam=lam, M=M, K=K)


# -- initialization -------------------------------------------------------------

def test_init_thresholds(rng):
    d = random_dictionary(rng, 4, 6)
    assert np.all(encoders.init_from_dictionary(d, "l0reg", lam=0.25).theta == 0.5)
    assert np.all(encoders.init_from_dictionary(d, "lista", lam=0.25).theta == 0.25)
    p = encoders.init_from_dictionary(d, "msparse", M=2)
    assert np.allclose(p.W, d.scaled.T) and np.allclose(p.S, np.eye(6) - d.scaled.T @ d.scaled)


def test_init_requires_hyperparameters(rng):
    d = random_dictionary(rng, 4, 6)
    with pytest.raises(ValueError):
        encoders.init_from_dictionary(d, "l0reg")
    with pytest.raises(ValueError):
        encoders.init_from_dictionary(d, "msparse", M=7)


def test_params_validation(rng):
    W, S = rng.standard_normal((6, 4)), rng.standard_normal((6, 6))
    with pytest.raises(ValueError):
        EncoderParams("l0reg", W=W, S=S, theta=np.zeros(6))
    with pytest.raises(ShapeError):
        EncoderParams("l0reg", W=W, S=S[:5, :5], theta=np.ones(6))
    with pytest.raises(ValueError):
        EncoderParams("msparse", W=W, S=S, M=2, K=0)
    with pytest.raises(ShapeError):
        EncoderParams("lista", W=W, S=S, theta=np.ones(5))


# -- untrained equivalence -------------------------------------------------------

@pytest.mark.parametrize("K", [1, 2, 3])
def test_untrained_l0reg_equals_iht(backend, K):
    r = np.random.default_rng(K)
    d, params = make("l0reg", r, m=16, p=32, K=K, lam=0.1)
    X = r.standard_normal((1000, 16))
    ref = solvers.iht_l0reg_solve(X, d, 0.1, K + 1, warm_start=False).final_code
    assert np.max(np.abs(encoders.encode(params, X) - ref)) < 1e-12


@pytest.mark.parametrize("K", [1, 2, 3])
def test_untrained_msparse_equals_iht(backend, K):
    r = np.random.default_rng(10 + K)
    d, params = make("msparse", r, m=16, p=32, K=K, M=5)
    X = r.standard_normal((1000, 16))
    ref = solvers.iht_msparse_solve(X, d, 5, K + 1, warm_start=False).final_code
    assert np.max(np.abs(encoders.encode(params, X) - ref)) < 1e-12


@pytest.mark.parametrize("K", [1, 2, 3])
def test_untrained_lista_equals_ista(backend, K):
    r = np.random.default_rng(20 + K)
    d, params = make("lista", r, m=16, p=32, K=K, lam=0.1)
    X = r.standard_normal((1000, 16))
    ref = solvers.ista_solve(X, d, 0.1, K + 1)
    assert np.max(np.abs(encoders.encode(params, X) - ref)) < 1e-12


# -- special cases -----------------------------------------------------------------

@pytest.mark.parametrize("kind", ["l0reg", "msparse", "lista"])
def test_zero_input_zero_code(rng, kind):
    _, params = make(kind, rng)
    assert not np.any(encoders.encode(params, np.zeros((3, 5))))
    if kind == "l0reg":
        codes, _ = encoders.forward(params, np.zeros(5), mode="train", sigma=0.2)
        assert not np.any(codes)


def test_msparse_full_is_linear_recursion(rng):
    _, params = make("msparse", rng, M=7)
    X = rng.standard_normal((4, 5))
    b = X @ params.W.T
    z = b
    for _ in range(params.K):
        z = b + z @ params.S.T
    assert np.allclose(encoders.encode(params, X), z, rtol=0, atol=1e-13)


def test_lista_zero_threshold_is_linear_recursion(rng):
    _, params = make("lista", rng)
    params.theta[:] = 0.0
    X = rng.standard_normal((4, 5))
    b = X @ params.W.T
    z = b
    for _ in range(params.K):
        z = b + z @ params.S.T
    assert np.allclose(encoders.encode(params, X), z, rtol=0, atol=1e-13)


def test_stages_share_parameters(rng):
    _, params = make("l0reg", rng)
    X = rng.standard_normal((3, 5))
    assert params.tensors()["W"] is params.W and params.tensors()["S"] is params.S
    before = encoders.encode(params, X)
    params.S *= 0.5
    after = encoders.encode(params, X)
    b = X @ params.W.T
    z = layers.hard_threshold(b, params.theta)
    for _ in range(params.K):
        z = layers.hard_threshold(b + z @ params.S.T, params.theta)
    assert np.array_equal(after, z)
    assert not np.array_equal(before, after)


@pytest.mark.parametrize("kind", ["l0reg", "msparse", "lista", "mlp"])
def test_eval_deterministic(rng, kind):
    params = encoders.init_baseline(5, 7, seed=1) if kind == "mlp" else make(kind, rng)[1]
    X = rng.standard_normal((6, 5))
    assert np.array_equal(encoders.encode(params, X), encoders.encode(params, X))


def test_baseline_shapes_and_zero_weights():
    params = encoders.init_baseline(5, 7, seed=0)
    assert [W.shape for W, _ in params.mlp_weights] == [(7, 5), (7, 7), (7, 7), (7, 7)]
    for W, b in params.mlp_weights:
        W[:] = 0.0
        b[:] = 0.0
    assert not np.any(encoders.encode(params, np.ones((2, 5))))


def test_baseline_dropout_only_in_train():
    params = encoders.init_baseline(5, 7, seed=0)
    X = np.ones((4, 5))
    a, _ = encoders.forward(params, X, mode="train", rng_seed=1)
    b, _ = encoders.forward(params, X, mode="train", rng_seed=2)
    assert not np.array_equal(a, b)
    assert np.array_equal(encoders.forward(params, X, mode="eval", rng_seed=1)[0],
                          encoders.forward(params, X, mode="eval", rng_seed=2)[0])


def test_train_mode_needs_sigma(rng):
    _, params = make("l0reg", rng)
    with pytest.raises(ValueError):
        encoders.forward(params, np.ones(5), mode="train")


def test_copy_is_deep(rng):
    _, params = make("l0reg", rng)
    c = params.copy()
    c.W += 1.0
    assert not np.array_equal(c.W, params.W)


# -- hard sparsity guarantee ---------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), M=st.integers(1, 9), K=st.integers(1, 4),
       mode=st.sampled_from(["train", "eval"]))
def test_msparse_output_sparsity(seed, M, K, mode):
    r = np.random.default_rng(seed)
    params = EncoderParams("msparse", W=r.standard_normal((9, 4)) * 10,
                           S=r.standard_normal((9, 9)) * 10, M=M, K=K)
    codes, _ = encoders.forward(params, r.standard_normal((5, 4)), mode=mode)
    assert np.all(np.count_nonzero(codes, axis=1) <= M)


# -- gradients ---------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["l0reg", "msparse", "lista"])
def test_encoder_gradcheck(backend, kind):
    sigma = 0.2
    for seed in range(50):
        r = np.random.default_rng(seed)
        _, params = make(kind, r, lam=0.3, M=3)
        params.W += 0.1 * r.standard_normal(params.W.shape)
        params.S += 0.1 * r.standard_normal(params.S.shape)
        X = r.standard_normal((3, 5)) * 1.5
        if safe(params, X, sigma):
            break
    else:
        pytest.fail("no kink-free instance found")
    gradcheck(params, X, sigma, r)


def test_baseline_gradcheck():
    for seed in range(50):
        r = np.random.default_rng(seed)
        params = encoders.init_baseline(4, 6, seed=seed)
        X = r.standard_normal((3, 4))
        h, ok = X, True
        for W, b in params.mlp_weights[:3]:
            h = h @ W.T + b
            ok &= np.min(np.abs(h)) > 1e-3
            h = np.maximum(h, 0)
        if ok:
            break
    gradcheck(params, X, None, r)


@pytest.mark.parametrize("kind", ["l0reg", "msparse", "lista", "mlp"])
def test_zero_upstream_zero_grads(rng, kind):
    params = encoders.init_baseline(5, 7) if kind == "mlp" else make(kind, rng)[1]
    X = rng.standard_normal((4, 5))
    _, trace = encoders.forward(params, X, mode="train", sigma=0.2, rng_seed=0)
    grads = encoders.backward(params, trace, np.zeros((4, 7)))
    assert all(not np.any(g) for g in grads.values())


def test_backward_single_use(rng):
    _, params = make("msparse", rng)
    _, trace = encoders.forward(params, np.ones((2, 5)))
    encoders.backward(params, trace, np.ones((2, 7)))
    with pytest.raises(layers.TapeError):
        encoders.backward(params, trace, np.ones((2, 7)))


def test_msparse_guard_is_active(msparse_guard, rng):
    _, params = make("msparse", rng)
    encoders.encode(params, np.ones(5))
    assert msparse_guard.calls == 1
