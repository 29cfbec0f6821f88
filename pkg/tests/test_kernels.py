import numpy as np
import pytest

from sata_lab import kernels
from sata_lab.kernels import _py


def problem(seed, B=16, K=7, N=5, F=9):
    rng = np.random.default_rng(seed)
    E = rng.standard_normal((B, F))
    P = rng.standard_normal((K, F))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    S = rng.standard_normal((B, N, F))
    if N:
        S /= np.linalg.norm(S, axis=2, keepdims=True)
    y = rng.integers(0, K, B)
    return E, y, P, S


def test_python_backend_always_available():
    assert "python" in kernels.available_backends()
    assert kernels.backend in kernels.available_backends()


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_kernel("fortran")


needs_cext = pytest.mark.skipif("cython" not in kernels.available_backends(), reason="extension not built")


@needs_cext
@pytest.mark.parametrize("N", [0, 1, 5])
@pytest.mark.parametrize("aux_t", [1.0, 0.4])
def test_cython_matches_python(N, aux_t):
    for seed in range(10):
        E, y, P, S = problem(seed, N=N)
        a = _py.batch_loss_grad(E, y, P, S, 0.05, 0.5, 0.3, 0.7, aux_t)
        b = kernels.get_kernel("cython")(E, y, P, S, 0.05, 0.5, 0.3, 0.7, aux_t)
        for x, z in zip(a, b):
            assert np.allclose(x, z, rtol=1e-12, atol=1e-13)


@needs_cext
def test_cython_single_category():
    E, y, P, S = problem(1, K=1)
    a = _py.batch_loss_grad(E, y, P, S, 0.1, 0.5, 0.2, 0.2)
    b = kernels.get_kernel("cython")(E, y, P, S, 0.1, 0.5, 0.2, 0.2)
    assert np.all(b[2] == 0.0)
    for x, z in zip(a, b):
        assert np.allclose(x, z, rtol=1e-12, atol=1e-13)


@needs_cext
def test_cython_zero_norm_raises():
    E, y, P, S = problem(2)
    E[3] = 0.0
    with pytest.raises(ValueError):
        kernels.get_kernel("cython")(E, y, P, S, 0.1, 0.5, 0.2, 0.2)


def test_python_zero_norm_raises():
    E, y, P, S = problem(2)
    E[0] = 0.0
    with pytest.raises(ValueError):
        _py.batch_loss_grad(E, y, P, S, 0.1, 0.5, 0.2, 0.2)


def test_set_backend_round_trip():
    before = kernels.backend
    try:
        kernels.set_backend("python")
        assert kernels.batch_loss_grad is _py.batch_loss_grad
    finally:
        kernels.set_backend(before)
    assert kernels.backend == before


def test_kernels_deterministic():
    E, y, P, S = problem(3)
    for name in kernels.available_backends():
        k = kernels.get_kernel(name)
        a, b = k(E, y, P, S, 0.01, 0.5, 0.2, 0.2), k(E, y, P, S, 0.01, 0.5, 0.2, 0.2)
        for x, z in zip(a, b):
            assert np.array_equal(x, z)
