import numpy as np
import pytest

from lingpmpc.gp import FitConfig, fit
from lingpmpc.plant import generate_training_data


@pytest.fixture(scope="session")
def plant_model_200():
    """GP of the benchmark plant trained on 200 points (shared, seeded)."""
    X, Y = generate_training_data(200, seed=11)
    return fit(X, Y, FitConfig(n_starts=3, max_iter=80, seed=0))


@pytest.fixture(scope="session")
def linear_model():
    """Near-noiseless GP of the linear map y+ = 0.8 y + 0.2 u."""
    rng = np.random.default_rng(5)
    N = 200
    X = np.vstack([rng.uniform(-1, 1, N), rng.uniform(-1, 1, N)])
    Y = 0.8 * X[0] + 0.2 * X[1] + 1e-5 * rng.normal(size=N)
    return fit(X, Y, FitConfig(n_starts=3, seed=2))
