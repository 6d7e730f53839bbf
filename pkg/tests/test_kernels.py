import numpy as np
import pytest

from lingpmpc.exceptions import InputContractError
from lingpmpc.kernels import (
    KernelHyper,
    se_cross_grad,
    se_gram,
    se_kernel,
    se_kernel_derivatives,
)


def test_zero_distance_gives_signal_variance():
    hyper = KernelHyper(1.0, [0.3, 2.0])
    assert se_kernel([0.4, -1.0], [0.4, -1.0], hyper) == pytest.approx(1.0)


def test_unit_exponent_1d():
    ell = 0.7
    hyper = KernelHyper(1.3, [ell])
    val = se_kernel([0.0], [ell * np.sqrt(2.0)], hyper)
    assert val == pytest.approx(1.3 * np.exp(-1.0), rel=1e-12)


def test_2d_analytic_value():
    hyper = KernelHyper(2.0, [1.0, 2.0])
    val = se_kernel([0.0, 0.0], [1.0, 2.0], hyper)
    assert val == pytest.approx(2.0 * np.exp(-1.0), abs=1e-12)
    assert val == pytest.approx(0.735759, abs=1e-6)


def test_symmetry_and_range():
    rng = np.random.default_rng(0)
    hyper = KernelHyper(1.7, [0.5, 1.5, 0.9])
    for _ in range(20):
        x, xp = rng.normal(size=3), rng.normal(size=3)
        k1 = se_kernel(x, xp, hyper)
        k2 = se_kernel(xp, x, hyper)
        assert k1 == pytest.approx(k2, rel=1e-14)
        assert 0.0 < k1 <= hyper.signal_variance


def test_dimension_mismatch_raises():
    hyper = KernelHyper(1.0, [1.0, 1.0])
    with pytest.raises(InputContractError):
        se_kernel([0.0], [0.0, 0.0], hyper)
    with pytest.raises(InputContractError):
        se_kernel_derivatives([0.0, 0.0, 0.0], [0.0, 0.0], hyper)


def test_derivatives_at_zero_offset():
    hyper = KernelHyper(2.5, [0.5, 1.0, 2.0])
    x = np.array([0.3, -0.2, 1.1])
    k10, k01, k11 = se_kernel_derivatives(x, x, hyper)
    assert np.allclose(k10, 0.0)
    assert np.allclose(k01, 0.0)
    assert np.allclose(k11, np.diag(2.5 / hyper.lengthscales**2))


def test_first_derivative_antisymmetry():
    rng = np.random.default_rng(1)
    hyper = KernelHyper(1.2, [0.8, 1.4])
    for _ in range(10):
        x, xp = rng.normal(size=2), rng.normal(size=2)
        k10, k01, _ = se_kernel_derivatives(x, xp, hyper)
        assert np.allclose(k10, -k01, atol=1e-14)


def _central_diff(f, x, i, step):
    e = np.zeros_like(x)
    e[i] = step
    return (f(x + e) - f(x - e)) / (2.0 * step)


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(42)
    hyper = KernelHyper(1.6, [0.6, 1.1, 0.9])
    step = 1e-5
    for _ in range(5):
        x, xp = rng.normal(size=3), rng.normal(size=3)
        k10, k01, k11 = se_kernel_derivatives(x, xp, hyper)
        for i in range(3):
            fd = _central_diff(lambda v: se_kernel(v, xp, hyper), x, i, step)
            assert k10[i] == pytest.approx(fd, abs=1e-6)
            fd = _central_diff(lambda v: se_kernel(x, v, hyper), xp, i, step)
            assert k01[i] == pytest.approx(fd, abs=1e-6)
        for i in range(3):
            for j in range(3):
                def dk01_j(v):
                    return se_kernel_derivatives(v, xp, hyper)[1][j]
                fd = _central_diff(dk01_j, x, i, step)
                assert k11[i, j] == pytest.approx(fd, abs=1e-6)


def test_cross_grad_consistency():
    rng = np.random.default_rng(7)
    hyper = KernelHyper(1.1, [0.9, 0.5])
    X = rng.normal(size=(2, 6))
    x = rng.normal(size=2)
    kvec, G = se_cross_grad(x, X, hyper)
    for j in range(6):
        assert kvec[j] == pytest.approx(se_kernel(x, X[:, j], hyper), rel=1e-14)
        k10, _, _ = se_kernel_derivatives(x, X[:, j], hyper)
        assert np.allclose(G[:, j], k10, atol=1e-14)


def test_gram_positive_definite_with_noise_floor():
    rng = np.random.default_rng(3)
    hyper = KernelHyper(1.0, [0.4, 0.8], 0.0)
    X = rng.uniform(-1, 1, size=(2, 50))
    K = se_gram(X, hyper) + 1e-8 * np.eye(50)
    # must factor without failure
    np.linalg.cholesky(K)
    assert np.linalg.eigvalsh(K)[0] > 0.0
