"""Benchmark plant: scalar nonlinear system with noisy output.

State update ``x+ = x - 0.5 tanh(x + u^3)`` with measurement ``y = x + w``,
``w ~ N(0, 0.025^2)``.  Training data pair the previous measured output and
the current input with the resulting output, matching the autoregressive
regressor ``[y_prev, u]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputContractError

NOISE_STD = 0.025

# Input constraints the benchmark signals respect.
U_MIN, U_MAX = -1.0, 1.0
DU_MAX = 0.5


@dataclass
class PlantState:
    """Plant state plus its private noise stream (deterministic per seed)."""

    x: float
    rng_seed: int
    rng: np.random.Generator

    @staticmethod
    def create(seed: int, x0: float = 0.0) -> "PlantState":
        return PlantState(x=float(x0), rng_seed=int(seed),
                          rng=np.random.default_rng(seed))


def measure(state: PlantState, noise_on: bool = True) -> float:
    """Current output y = x + w."""
    w = NOISE_STD * state.rng.standard_normal() if noise_on else 0.0
    return state.x + w


def plant_step(state: PlantState, u: float, noise_on: bool = True):
    """Advance one step and measure the new output."""
    u = float(u)
    if not (np.isfinite(state.x) and np.isfinite(u)):
        raise InputContractError("plant state and input must be finite")
    x_new = state.x - 0.5 * np.tanh(state.x + u**3)
    new_state = PlantState(x=float(x_new), rng_seed=state.rng_seed, rng=state.rng)
    return new_state, measure(new_state, noise_on)


def input_signal(n_steps: int, seed: int, hold: int = 3) -> np.ndarray:
    """Piecewise-constant excitation: uniform draws on [-1, 1] held ``hold``
    steps, clipped to the rate limit relative to the previous applied value
    (chain starts at 0)."""
    rng = np.random.default_rng(seed)
    u = np.empty(n_steps)
    prev = 0.0
    target = 0.0
    for k in range(n_steps):
        if k % hold == 0:
            target = rng.uniform(U_MIN, U_MAX)
        val = np.clip(target, prev - DU_MAX, prev + DU_MAX)
        u[k] = np.clip(val, U_MIN, U_MAX)
        prev = u[k]
    return u


def generate_training_data(N: int, seed: int, noise_on: bool = True):
    """Drive the plant with the excitation signal and collect regression rows.

    Returns ``(X, Y)`` with ``X`` of shape (2, N): row 0 the previous measured
    output, row 1 the applied input; ``Y[k]`` the resulting measured output.
    """
    if N < 1:
        raise InputContractError("N must be >= 1")
    seq = np.random.SeedSequence(seed)
    input_seed, plant_seed = (int(s.generate_state(1)[0]) for s in seq.spawn(2))
    u = input_signal(N, input_seed)
    state = PlantState.create(plant_seed, x0=0.0)
    y_prev = measure(state, noise_on)
    X = np.empty((2, N))
    Y = np.empty(N)
    for k in range(N):
        state, y_new = plant_step(state, u[k], noise_on)
        X[0, k] = y_prev
        X[1, k] = u[k]
        Y[k] = y_new
        y_prev = y_new
    return X, Y


def make_reference(breakpoints) -> "callable":
    """Step reference from (start_step, value) pairs, e.g. the benchmark's
    [(0, -0.5), (51, -0.2)]."""
    pts = sorted((int(s), float(v)) for s, v in breakpoints)
    if not pts or pts[0][0] != 0:
        raise InputContractError("reference breakpoints must start at step 0")

    def ref(t: int) -> float:
        val = pts[0][1]
        for start, v in pts:
            if t >= start:
                val = v
            else:
                break
        return val

    return ref


DEFAULT_REFERENCE = ((0, -0.5), (51, -0.2))
