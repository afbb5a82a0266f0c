import numpy as np
import pytest

from deepl0 import kernels
from deepl0.solvers import Dictionary

BACKENDS = ["python"] + (["cython"] if kernels.compiled_backend is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run a test once per available kernel backend."""
    prev = kernels.BACKEND
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_dictionary(rng, m, p):
    return Dictionary.from_matrix(rng.standard_normal((m, p)))


@pytest.fixture
def small_dict(rng):
    return random_dictionary(rng, 8, 10)


@pytest.fixture(autouse=True)
def msparse_guard(monkeypatch):
    """Every M-sparse encoder output produced by any test must have <= M nonzeros."""
    from deepl0 import encoders

    inner = encoders.forward_msparse

    def checked(params, X, mode="eval"):
        codes, trace = inner(params, X, mode)
        nnz = np.count_nonzero(np.atleast_2d(codes), axis=1)
        assert np.all(nnz <= params.M), f"{nnz.max()} nonzeros with M={params.M}"
        checked.calls += 1
        return codes, trace

    checked.calls = 0
    monkeypatch.setattr(encoders, "forward_msparse", checked)
    yield checked


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.RESULTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(acceptance_log.RESULTS):
            terminalreporter.write_line(line)
