"""Exact GP regression with a zero mean function and SE-ARD kernel.

A trained model caches the lower Cholesky factor ``L`` of
``K(X, X) + sn2*I`` and the weight vector ``alpha = (K + sn2*I)^{-1} Y``;
prediction never forms an explicit inverse.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .exceptions import (
    FactorizationError,
    FitError,
    InputContractError,
    NumericalConsistencyError,
)
from .kernels import KernelHyper, se_cross, se_gram, se_scaled_sqdists

# Diagonal jitter ladder applied when the Cholesky factorization fails.
JITTER_START = 1e-10
JITTER_MAX = 1e-4

# Negative predictive variance beyond this magnitude signals a bug rather
# than roundoff; anything in (-VAR_CLAMP_TOL, 0) clamps to 0.
VAR_CLAMP_TOL = 1e-12


def chol_with_jitter(A: np.ndarray):
    """Lower Cholesky factor of A, escalating diagonal jitter on failure.

    Returns ``(L, jitter_used)``.  Jitter starts at 1e-10 and grows by
    factors of 10 up to 1e-4, after which FactorizationError is raised.
    """
    jitter = 0.0
    eye = np.eye(A.shape[0])
    while True:
        try:
            L = np.linalg.cholesky(A + jitter * eye if jitter else A)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise FactorizationError(
                    f"Cholesky failed with jitter up to {JITTER_MAX:g}"
                ) from None


@dataclass(frozen=True)
class GpModel:
    """Trained GP: data, hyperparameters, and cached factorization."""

    X: np.ndarray          # (n, N), columns are training inputs
    Y: np.ndarray          # (N,)
    hyper: KernelHyper
    chol: np.ndarray       # lower triangular, chol @ chol.T = K + sn2*I (+ jitter)
    alpha: np.ndarray      # (K + sn2*I)^{-1} Y

    @property
    def input_dim(self) -> int:
        return self.X.shape[0]

    @property
    def n_train(self) -> int:
        return self.X.shape[1]

    @staticmethod
    def build(X, Y, hyper: KernelHyper) -> "GpModel":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.asarray(Y, dtype=float).ravel()
        if X.shape[0] != hyper.input_dim:
            raise InputContractError(
                f"X rows ({X.shape[0]}) must equal input dim ({hyper.input_dim})"
            )
        if X.shape[1] != Y.size or Y.size < 1:
            raise InputContractError("X columns and Y length must match, N >= 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InputContractError("training data must be finite")
        K = se_gram(X, hyper) + hyper.noise_variance * np.eye(Y.size)
        L, _ = chol_with_jitter(K)
        alpha = cho_solve((L, True), Y)
        return GpModel(X=X, Y=Y, hyper=hyper, chol=L, alpha=alpha)


def gp_predict(model: GpModel, x_star) -> tuple[float, float]:
    """Posterior mean and variance at a single input (noise-free latent)."""
    k_star = se_cross(x_star, model.X, model.hyper)
    mean = float(k_star @ model.alpha)
    v = solve_triangular(model.chol, k_star, lower=True, check_finite=False)
    var = float(model.hyper.signal_variance - v @ v)
    if var < 0.0:
        if var < -VAR_CLAMP_TOL:
            raise NumericalConsistencyError(
                f"predictive variance {var:.3e} below -{VAR_CLAMP_TOL:g}"
            )
        var = 0.0
    return mean, var


def log_marginal_likelihood(X, Y, hyper: KernelHyper):
    """Gaussian log marginal likelihood and its analytic gradient.

    The gradient is taken in log-hyperparameter space, ordered
    ``[log ell_1 .. log ell_n, log sf2, log sn2]``, via the trace identity
    d/dtheta = 0.5 * tr((alpha alpha' - K^{-1}) dK/dtheta).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    N = Y.size
    if N < 1:
        raise InputContractError("need N >= 1")
    K = se_gram(X, hyper)
    Kn = K + hyper.noise_variance * np.eye(N)
    L, _ = chol_with_jitter(Kn)
    alpha = cho_solve((L, True), Y)
    value = float(
        -0.5 * Y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * N * np.log(2.0 * np.pi)
    )

    Kinv = cho_solve((L, True), np.eye(N))
    A = np.outer(alpha, alpha) - Kinv
    D = se_scaled_sqdists(X, hyper)
    n = hyper.input_dim
    grad = np.empty(n + 2)
    for i in range(n):
        grad[i] = 0.5 * np.sum(A * (K * D[i]))
    grad[n] = 0.5 * np.sum(A * K)                       # d/dlog sf2
    grad[n + 1] = 0.5 * hyper.noise_variance * np.trace(A)  # d/dlog sn2
    return value, grad


@dataclass(frozen=True)
class FitConfig:
    """Controls the multi-start likelihood maximization.

    ``noise_variance=None`` fits sn2 jointly; a float fixes it.
    """

    n_starts: int = 5
    seed: int = 0
    max_iter: int = 150
    noise_variance: float | None = None

    def __post_init__(self):
        if self.n_starts < 1:
            raise InputContractError("n_starts must be >= 1")


def _fit_bounds(X: np.ndarray, fix_noise: bool) -> list[tuple[float, float]]:
    n = X.shape[0]
    ranges = np.ptp(X, axis=1)
    ranges = np.where(ranges > 0, ranges, 1.0)
    bounds = [(np.log(r) - 5.0, np.log(r) + 5.0) for r in ranges]
    bounds.append((-10.0, 10.0))       # log sf2
    if not fix_noise:
        bounds.append((-12.0, 2.0))    # log sn2
    return bounds


def fit(X, Y, fit_config: FitConfig | None = None) -> GpModel:
    """Fit hyperparameters by multi-start L-BFGS ascent on the log marginal
    likelihood in log space, then build the model with cached factors."""
    cfg = fit_config or FitConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    if X.shape[1] != Y.size or Y.size < 1:
        raise InputContractError("X columns and Y length must match, N >= 1")
    if not np.all(np.isfinite(X)):
        raise InputContractError("training inputs must be finite")
    n = X.shape[0]
    fix_noise = cfg.noise_variance is not None
    bounds = _fit_bounds(X, fix_noise)

    def unpack(theta: np.ndarray) -> KernelHyper:
        ell = np.exp(theta[:n])
        sf2 = float(np.exp(theta[n]))
        sn2 = float(cfg.noise_variance) if fix_noise else float(np.exp(theta[n + 1]))
        return KernelHyper(sf2, ell, sn2)

    def objective(theta: np.ndarray):
        try:
            value, grad = log_marginal_likelihood(X, Y, unpack(theta))
        except FactorizationError:
            return 1e25, np.zeros(theta.size)
        if not np.isfinite(value):
            return 1e25, np.zeros(theta.size)
        g = -grad if not fix_noise else -grad[: n + 1]
        return -value, g

    rng = np.random.default_rng(cfg.seed)
    yvar = float(np.var(Y)) if Y.size > 1 else float(Y[0] ** 2)
    yvar = max(yvar, 1e-6)
    ranges = np.ptp(X, axis=1)
    ranges = np.where(ranges > 0, ranges, 1.0)
    base = np.concatenate([
        np.log(0.5 * ranges),
        [np.log(yvar)],
        [] if fix_noise else [np.log(0.1 * yvar + 1e-8)],
    ])

    best = None
    for start in range(cfg.n_starts):
        theta0 = base if start == 0 else base + rng.uniform(-2.0, 2.0, size=base.size)
        theta0 = np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = minimize(
            objective,
            theta0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": cfg.max_iter},
        )
        if np.isfinite(res.fun) and res.fun < 1e24 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitError("no start produced a finite marginal likelihood")
    return GpModel.build(X, Y, unpack(best.x))


# ---------------------------------------------------------------------------
# Persistence: JSON model files and CSV training data.
# ---------------------------------------------------------------------------

def model_to_json(model: GpModel) -> str:
    """Serialize to the single-document JSON schema; factors are not stored."""
    n, N = model.X.shape
    doc = {
        "n": n,
        "N": N,
        "X": model.X.flatten(order="F").tolist(),
        "Y": model.Y.tolist(),
        "lengthscales": model.hyper.lengthscales.tolist(),
        "signal_variance": model.hyper.signal_variance,
        "noise_variance": model.hyper.noise_variance,
    }
    return json.dumps(doc)


def model_from_json(text: str) -> GpModel:
    doc = json.loads(text)
    n, N = int(doc["n"]), int(doc["N"])
    X = np.asarray(doc["X"], dtype=float).reshape((n, N), order="F")
    hyper = KernelHyper(
        float(doc["signal_variance"]),
        np.asarray(doc["lengthscales"], dtype=float),
        float(doc["noise_variance"]),
    )
    return GpModel.build(X, np.asarray(doc["Y"], dtype=float), hyper)


def save_model(model: GpModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(model_to_json(model))


def load_model(path) -> GpModel:
    with open(path) as fh:
        return model_from_json(fh.read())


def save_training_data(X: np.ndarray, Y: np.ndarray, path) -> None:
    """CSV with header x1,...,xn,y; one row per training point."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).ravel()
    n = X.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(n)] + ["y"])
        for j in range(Y.size):
            writer.writerow([repr(float(v)) for v in X[:, j]] + [repr(float(Y[j]))])


def load_training_data(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "y" or header[0] != "x1":
            raise InputContractError("expected CSV header x1,...,xn,y")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise InputContractError("malformed training data CSV")
    return data[:, :-1].T.copy(), data[:, -1].copy()
