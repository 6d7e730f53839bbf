"""Linearized GP: joint posterior of function value and gradient at a point.

Conditioning the GP jointly on observations and on the derivative process
gives a Gaussian over ``[f(x), grad f(x)]`` with mean ``m_hat`` (length
``1 + n_active``) and covariance ``V_hat``.  The induced local model at a
displacement ``delta`` has mean ``m_hat' @ [1, delta]`` (affine) and variance
``[1, delta]' @ V_hat @ [1, delta]`` (convex quadratic, non-negative because
``V_hat`` is a genuine posterior covariance).

Dimensions that are held fixed can be masked out; the corresponding rows and
columns of the joint covariance simply drop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import InputContractError, NumericalConsistencyError
from .gp import GpModel
from .kernels import se_cross_grad, se_kernel_derivatives

# Eigenvalues of V_hat below this are treated as evidence of broken kernel
# derivatives rather than roundoff.
EIG_FLOOR_TOL = -1e-8


@dataclass(frozen=True)
class LinGp:
    """Local value-and-gradient posterior at ``center``.

    ``V_sqrt`` satisfies ``V_sqrt.T @ V_sqrt = V_hat`` (eigen square root, so
    rank-deficient posteriors factor cleanly).
    """

    center: np.ndarray        # (n,) linearization input
    active: np.ndarray        # (n,) boolean mask of varying dimensions
    m_hat: np.ndarray         # (1 + n_active,)
    V_hat: np.ndarray         # (1 + n_active, 1 + n_active), symmetric PSD
    V_sqrt: np.ndarray        # same shape, V_sqrt.T @ V_sqrt = V_hat

    @property
    def n_active(self) -> int:
        return self.m_hat.size - 1


def lingp_build(model: GpModel, x, active_mask=None) -> LinGp:
    """Construct the joint [value, gradient] posterior at ``x``.

    Uses the cached Cholesky factor (two triangular solves, no explicit
    inverse).  ``active_mask`` selects the dimensions the displacement may
    vary over; rows/columns for the fixed dimensions are removed.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = model.input_dim
    if x.size != n or not np.all(np.isfinite(x)):
        raise InputContractError(f"x must be a finite vector of length {n}")
    if active_mask is None:
        active = np.ones(n, dtype=bool)
    else:
        active = np.asarray(active_mask, dtype=bool)
        if active.size != n:
            raise InputContractError("active_mask length must equal input dim")

    idx = np.flatnonzero(active)
    kvec, G = se_cross_grad(x, model.X, model.hyper)
    B = np.vstack([kvec, G[idx]])                      # (1+na, N)

    m_hat = B @ model.alpha

    _, _, k11 = se_kernel_derivatives(x, x, model.hyper)
    na = idx.size
    prior = np.empty((1 + na, 1 + na))
    prior[0, 0] = model.hyper.signal_variance
    prior[0, 1:] = 0.0                                 # k01(x, x) = 0 for SE
    prior[1:, 0] = 0.0
    prior[1:, 1:] = k11[np.ix_(idx, idx)]

    V = solve_triangular(model.chol, B.T, lower=True, check_finite=False)
    V_hat = prior - V.T @ V
    V_hat = 0.5 * (V_hat + V_hat.T)

    w, U = np.linalg.eigh(V_hat)
    if w[0] < EIG_FLOOR_TOL:
        raise NumericalConsistencyError(
            f"joint posterior covariance has eigenvalue {w[0]:.3e} < {EIG_FLOOR_TOL:g}"
        )
    w = np.maximum(w, 0.0)
    V_hat = (U * w) @ U.T
    V_hat = 0.5 * (V_hat + V_hat.T)
    V_sqrt = np.sqrt(w)[:, None] * U.T

    return LinGp(center=x, active=active, m_hat=m_hat, V_hat=V_hat, V_sqrt=V_sqrt)


def lingp_eval(lg: LinGp, delta) -> tuple[float, float]:
    """Local mean and variance at displacement ``delta`` (active dims only)."""
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if delta.size != lg.n_active:
        raise InputContractError(
            f"delta has dimension {delta.size}, expected {lg.n_active}"
        )
    xi = np.concatenate(([1.0], delta))
    mean = float(lg.m_hat @ xi)
    r = lg.V_sqrt @ xi
    return mean, float(r @ r)
