"""Squared-exponential (RBF) kernel with ARD lengthscales and its derivatives.

Conventions: training inputs are stored as columns, i.e. ``X`` is ``(n, N)``
for ``N`` points in ``n`` dimensions.  All derivative blocks are taken with
respect to kernel arguments, so for

    k(x, x') = sf2 * exp(-0.5 * sum_i (x_i - x'_i)^2 / ell_i^2)

the blocks are

    k10_i(x, x')  = d k / d x_i        = -(x_i - x'_i) / ell_i^2 * k
    k01_j(x, x')  = d k / d x'_j       = +(x_j - x'_j) / ell_j^2 * k
    k11_ij(x, x') = d^2 k / d x_i d x'_j
                  = (delta_ij / ell_i^2
                     - (x_i - x'_i)(x_j - x'_j) / (ell_i^2 ell_j^2)) * k
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputContractError


@dataclass(frozen=True)
class KernelHyper:
    """SE kernel hyperparameters.

    signal_variance : sf2 > 0, output units squared
    lengthscales    : ell, strictly positive, one per input dimension
    noise_variance  : sn2 >= 0, observation noise variance
    """

    signal_variance: float
    lengthscales: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        ell = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ell)
        if not np.isfinite(self.signal_variance) or self.signal_variance <= 0:
            raise InputContractError("signal_variance must be finite and > 0")
        if ell.ndim != 1 or ell.size == 0 or not np.all(np.isfinite(ell)) or np.any(ell <= 0):
            raise InputContractError("lengthscales must be a positive 1-d vector")
        if not np.isfinite(self.noise_variance) or self.noise_variance < 0:
            raise InputContractError("noise_variance must be finite and >= 0")

    @property
    def input_dim(self) -> int:
        return self.lengthscales.size


def _check_dim(x: np.ndarray, hyper: KernelHyper, name: str) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.size != hyper.input_dim:
        raise InputContractError(
            f"{name} has dimension {x.size}, expected {hyper.input_dim}"
        )
    return x


def se_kernel(x, x_prime, hyper: KernelHyper) -> float:
    """Evaluate the SE kernel at a single pair of points."""
    x = _check_dim(x, hyper, "x")
    xp = _check_dim(x_prime, hyper, "x_prime")
    d = (x - xp) / hyper.lengthscales
    return float(hyper.signal_variance * np.exp(-0.5 * np.dot(d, d)))


def se_kernel_derivatives(x, x_prime, hyper: KernelHyper):
    """First and mixed second derivatives of the SE kernel at one pair.

    Returns ``(k10, k01, k11)`` with shapes ``(n,)``, ``(n,)``, ``(n, n)``.
    """
    x = _check_dim(x, hyper, "x")
    xp = _check_dim(x_prime, hyper, "x_prime")
    ell2 = hyper.lengthscales**2
    diff = x - xp
    k = hyper.signal_variance * np.exp(-0.5 * np.sum(diff**2 / ell2))
    k10 = -(diff / ell2) * k
    k01 = -k10
    k11 = (np.diag(1.0 / ell2) - np.outer(diff / ell2, diff / ell2)) * k
    return k10, k01, k11


def se_gram(X: np.ndarray, hyper: KernelHyper) -> np.ndarray:
    """Gram matrix K(X, X) for columns-as-points ``X`` of shape (n, N)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != hyper.input_dim:
        raise InputContractError(
            f"X must be (n, N) with n={hyper.input_dim}, got {X.shape}"
        )
    Z = X / hyper.lengthscales[:, None]
    sq = np.sum(Z**2, axis=0)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (Z.T @ Z)
    np.maximum(d2, 0.0, out=d2)
    return hyper.signal_variance * np.exp(-0.5 * d2)


def se_cross(x: np.ndarray, X: np.ndarray, hyper: KernelHyper) -> np.ndarray:
    """Vector k(x, X) of shape (N,)."""
    x = _check_dim(x, hyper, "x")
    diff = (x[:, None] - X) / hyper.lengthscales[:, None]
    return hyper.signal_variance * np.exp(-0.5 * np.sum(diff**2, axis=0))


def se_cross_grad(x: np.ndarray, X: np.ndarray, hyper: KernelHyper):
    """k(x, X) together with its gradient in the first argument.

    Returns ``(kvec, G)`` where ``kvec`` is (N,) and ``G`` is (n, N) with
    ``G[i, j] = d k(x, X[:, j]) / d x_i``.
    """
    x = _check_dim(x, hyper, "x")
    ell2 = (hyper.lengthscales**2)[:, None]
    diff = x[:, None] - X
    kvec = hyper.signal_variance * np.exp(-0.5 * np.sum(diff**2 / ell2, axis=0))
    G = -(diff / ell2) * kvec[None, :]
    return kvec, G


def se_scaled_sqdists(X: np.ndarray, hyper: KernelHyper) -> np.ndarray:
    """Per-dimension scaled squared distances D_i = (x_i - x'_i)^2 / ell_i^2.

    Shape (n, N, N).  Used by the marginal-likelihood gradient, where
    dK/dlog(ell_i) = K * D_i.
    """
    diff = X[:, :, None] - X[:, None, :]
    return diff**2 / (hyper.lengthscales**2)[:, None, None]
