"""Autoregressive GP dynamics: state bookkeeping and mean-only rollout.

The model state at step k stacks the last ``l`` expected outputs and the
last ``m`` inputs; the GP regressor is that state concatenated with the
current input, so the GP input dimension is ``l + m*n_u + n_u``.

Multistep prediction uses zero-variance propagation: each step feeds the
predictive *mean* back into the history and records the variance without
propagating it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InputContractError
from .gp import GpModel, gp_predict


@dataclass(frozen=True)
class ArSpec:
    """Lag structure: ``output_lag`` past outputs, ``input_lag`` past inputs."""

    output_lag: int
    input_lag: int = 0
    input_dim: int = 1

    def __post_init__(self):
        if self.output_lag < 1:
            raise InputContractError("output_lag must be >= 1")
        if self.input_lag < 0:
            raise InputContractError("input_lag must be >= 0")
        if self.input_dim < 1:
            raise InputContractError("input_dim must be >= 1")

    @property
    def gp_input_dim(self) -> int:
        return self.output_lag + (self.input_lag + 1) * self.input_dim

    @property
    def state_dim(self) -> int:
        return self.output_lag + self.input_lag * self.input_dim


@dataclass(frozen=True)
class ArState:
    """History snapshot: ``past_means`` (l,), ``past_inputs`` (m, n_u)."""

    past_means: np.ndarray
    past_inputs: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "past_means", np.atleast_1d(np.asarray(self.past_means, dtype=float))
        )
        pi = np.asarray(self.past_inputs, dtype=float)
        if pi.ndim == 0:
            pi = pi.reshape(1, 1)
        elif pi.ndim == 1:
            pi = pi.reshape(-1, 1)
        object.__setattr__(self, "past_inputs", pi)

    def check(self, spec: ArSpec) -> None:
        if self.past_means.size != spec.output_lag:
            raise InputContractError(
                f"past_means has length {self.past_means.size}, expected {spec.output_lag}"
            )
        if self.past_inputs.shape != (spec.input_lag, spec.input_dim) and spec.input_lag > 0:
            raise InputContractError(
                f"past_inputs has shape {self.past_inputs.shape}, "
                f"expected {(spec.input_lag, spec.input_dim)}"
            )
        if spec.input_lag == 0 and self.past_inputs.shape[0] != 0:
            raise InputContractError("past_inputs must be empty when input_lag is 0")

    def vector(self) -> np.ndarray:
        """Flatten to the model-state layout [y_hist, u_hist]."""
        return np.concatenate([self.past_means, self.past_inputs.ravel()])

    def advance(self, new_mean: float, applied_input: np.ndarray) -> "ArState":
        """Shift the history by one step."""
        means = np.append(self.past_means[1:], new_mean)
        if self.past_inputs.shape[0] > 0:
            inputs = np.vstack([self.past_inputs[1:], np.atleast_1d(applied_input)])
        else:
            inputs = self.past_inputs
        return ArState(means, inputs)


def gp_input(state: ArState, u) -> np.ndarray:
    """GP regressor [y_hist, u_hist, u_now]."""
    return np.concatenate([state.vector(), np.atleast_1d(np.asarray(u, dtype=float))])


@dataclass(frozen=True)
class Rollout:
    """Mean-only multistep prediction over a horizon H."""

    means: np.ndarray          # (H,)
    variances: np.ndarray      # (H,)
    states: tuple              # H ArState snapshots, states[j] fed at step j

    @property
    def horizon(self) -> int:
        return self.means.size


def rollout_mean(model: GpModel, spec: ArSpec, init: ArState, inputs) -> Rollout:
    """Roll the GP forward H steps, feeding back predictive means only."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.ndim != 2 or inputs.shape[1] != spec.input_dim:
        raise InputContractError(
            f"inputs must be (H, {spec.input_dim}), got {inputs.shape}"
        )
    H = inputs.shape[0]
    if H < 1:
        raise InputContractError("horizon must be >= 1")
    init.check(spec)
    if model.input_dim != spec.gp_input_dim:
        raise InputContractError(
            f"model input dim {model.input_dim} != spec dim {spec.gp_input_dim}"
        )

    means = np.empty(H)
    variances = np.empty(H)
    states = []
    state = init
    for j in range(H):
        states.append(state)
        mean, var = gp_predict(model, gp_input(state, inputs[j]))
        means[j] = mean
        variances[j] = var
        state = state.advance(mean, inputs[j])
    return Rollout(means=means, variances=variances, states=tuple(states))


def delta_state_entries(spec: ArSpec, step: int):
    """Describe the entries of the state displacement at horizon index ``step``.

    Returns a list over the state-vector layout.  Each item is ``None`` (the
    entry is pre-horizon history, displacement fixed at zero), ``("y", i)``
    for the output displacement at horizon index ``i``, or ``("u", i, c)``
    for component ``c`` of the input displacement at horizon index ``i``.
    """
    entries = []
    for j in range(spec.output_lag):
        i = step - spec.output_lag + j
        entries.append(("y", i) if i >= 0 else None)
    for j in range(spec.input_lag):
        i = step - spec.input_lag + j
        for c in range(spec.input_dim):
            entries.append(("u", i, c) if i >= 0 else None)
    return entries


def delta_state(nominal: Rollout, tilde_y_deltas, input_deltas) -> list[np.ndarray]:
    """Assemble state displacements over the horizon from output/input deltas.

    Pre-horizon history is measured exactly, so its displacement is zero.
    """
    dy = np.atleast_1d(np.asarray(tilde_y_deltas, dtype=float))
    du = np.atleast_2d(np.asarray(input_deltas, dtype=float))
    H = nominal.horizon
    if dy.size != H or du.shape[0] != H:
        raise InputContractError("delta lengths must match the rollout horizon")
    first = nominal.states[0]
    spec = ArSpec(
        output_lag=first.past_means.size,
        input_lag=first.past_inputs.shape[0],
        input_dim=du.shape[1],
    )
    out = []
    for k in range(H):
        dx = np.zeros(spec.state_dim)
        for pos, entry in enumerate(delta_state_entries(spec, k)):
            if entry is None:
                continue
            if entry[0] == "y":
                dx[pos] = dy[entry[1]]
            else:
                dx[pos] = du[entry[1], entry[2]]
        out.append(dx)
    return out
