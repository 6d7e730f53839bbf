"""Trust-region sequential convex programming for GP tracking MPC.

Each outer iteration linearizes the GP (value-and-gradient posterior at the
nominal trajectory), solves a convex conic subproblem in the displacement
variables, re-simulates the exact GP at the candidate inputs, and applies a
ratio test between actual and predicted reduction of the exact penalty cost
to accept or reject and to adapt the trust region.

Soft output constraints (confidence band and terminal band) enter the
subproblem through non-negative hinge slacks weighted by the penalty;
input box and rate constraints are kept hard.  The predicted standard
deviation enters constraints through a per-step epigraph scalar bounded by a
second-order cone, which is exact because the local standard deviation is
the norm of an affine function of the displacements.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .conic import ConicProgram, SocConstraint, SolverSettings, solve
from .dynamics import ArSpec, ArState, Rollout, gp_input, rollout_mean
from .exceptions import (
    InputContractError,
    NumericalConsistencyError,
    SubproblemError,
)
from .gp import GpModel
from .lingp import LinGp, lingp_build, lingp_eval


@dataclass(frozen=True)
class TrackingMpcSpec:
    """Tracking MPC over a scalar GP output with confidence-tightened bands.

    The stage cost is ``Q (y_k - r)^2 + R (u_k - u_{k-1})^2 + S sigma_k^2``;
    the output must stay inside ``[y_lo, y_hi]`` tightened by ``kappa`` times
    the predicted standard deviation, and the terminal output must lie within
    ``terminal_halfwidth`` of the reference under the same tightening.
    """

    horizon: int = 12
    weight_output: float = 10.0
    weight_input_rate: float = 0.1
    weight_variance: float = 0.0
    u_min: np.ndarray = -1.0
    u_max: np.ndarray = 1.0
    du_min: np.ndarray = -0.5
    du_max: np.ndarray = 0.5
    y_lo: float = -1.2
    y_hi: float = 1.2
    kappa: float = 2.0
    terminal_halfwidth: float = 0.075
    reference: float = 0.0

    def __post_init__(self):
        for name in ("u_min", "u_max", "du_min", "du_max"):
            object.__setattr__(
                self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            )
        if self.horizon < 1:
            raise InputContractError("horizon must be >= 1")
        if min(self.weight_output, self.weight_input_rate, self.weight_variance) < 0:
            raise InputContractError("cost weights must be >= 0")
        if np.any(self.u_min > self.u_max) or np.any(self.du_min > self.du_max):
            raise InputContractError("bound orderings violated")
        if self.y_lo > self.y_hi:
            raise InputContractError("y_lo must be <= y_hi")
        if self.kappa < 0 or self.terminal_halfwidth <= 0:
            raise InputContractError("kappa >= 0 and terminal_halfwidth > 0 required")

    @property
    def input_dim(self) -> int:
        return self.u_min.size


@dataclass(frozen=True)
class ScpConfig:
    """Trust-region loop parameters (see the four-branch ratio test)."""

    rho0: float = 0.5
    penalty_weight: float = 1e3
    r0: float = 0.01
    r1: float = 0.25
    r2: float = 0.7
    beta_fail: float = 0.5
    beta_succ: float = 2.0
    epsilon: float = 1e-4
    j_max: int = 30
    penalty_growth: float = 10.0
    penalty_cap: float = 1e7
    penalty_retries: int = 3
    violation_tol: float = 1e-6
    rho_floor: float = 1e-6
    reset_rho: bool = True

    def __post_init__(self):
        if self.rho0 <= 0 or self.penalty_weight <= 0:
            raise InputContractError("rho0 and penalty_weight must be > 0")
        if not (0.0 < self.r0 < self.r1 < self.r2 < 1.0):
            raise InputContractError("0 < r0 < r1 < r2 < 1 required")
        if not (self.beta_fail < 1.0 < self.beta_succ):
            raise InputContractError("beta_fail < 1 < beta_succ required")
        if self.epsilon <= 0 or self.j_max < 1:
            raise InputContractError("epsilon > 0 and j_max >= 1 required")
        if self.penalty_growth < 1.0:
            raise InputContractError("penalty_growth must be >= 1")


@dataclass
class ScpIteration:
    """One outer-iteration record.  ``ratio`` is None when the iteration
    terminated at the stop test (no ratio branch was taken)."""

    phi: float
    delta_actual: float
    delta_predicted: float
    ratio: float | None
    rho: float
    accepted: bool
    subproblem_time: float
    rollout_time: float
    linearize_time: float

    def to_dict(self) -> dict:
        return {
            "phi": self.phi,
            "delta_actual": self.delta_actual,
            "delta_predicted": self.delta_predicted,
            "ratio": self.ratio,
            "rho": self.rho,
            "accepted": self.accepted,
            "subproblem_time": self.subproblem_time,
            "rollout_time": self.rollout_time,
            "linearize_time": self.linearize_time,
        }


@dataclass
class ScpRound:
    """One run of the trust-region loop at a fixed penalty weight."""

    penalty_weight: float
    iterations: list[ScpIteration]
    converged: bool
    stop_reason: str     # "epsilon" | "j_max" | "rho_floor"

    def to_dict(self) -> dict:
        return {
            "penalty_weight": self.penalty_weight,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "iterations": [it.to_dict() for it in self.iterations],
        }


@dataclass
class ScpReport:
    rounds: list[ScpRound]
    final_inputs: np.ndarray       # (H, n_u)
    final_phi: float
    final_violation: float
    converged: bool
    total_time: float

    @property
    def iterations(self) -> list[ScpIteration]:
        """All iteration records across penalty rounds."""
        return [it for rnd in self.rounds for it in rnd.iterations]

    def to_dict(self) -> dict:
        return {
            "rounds": [r.to_dict() for r in self.rounds],
            "final_inputs": self.final_inputs.tolist(),
            "final_phi": self.final_phi,
            "final_violation": self.final_violation,
            "converged": self.converged,
            "total_time": self.total_time,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ---------------------------------------------------------------------------
# Exact penalty cost.
# ---------------------------------------------------------------------------

def _stage_costs(spec: TrackingMpcSpec, means, inputs, u_prev) -> float:
    means = np.asarray(means, dtype=float)
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    prev = np.vstack([np.atleast_1d(u_prev), inputs[:-1]])
    track = spec.weight_output * np.sum((means - spec.reference) ** 2)
    rate = spec.weight_input_rate * np.sum((inputs - prev) ** 2)
    return float(track + rate)


def constraint_violations(spec: TrackingMpcSpec, means, variances) -> np.ndarray:
    """Hinge values of the band and terminal constraints, in builder order
    (band lower 0..H-1, band upper 0..H-1, terminal lower, terminal upper)."""
    means = np.asarray(means, dtype=float)
    sig = np.sqrt(np.maximum(np.asarray(variances, dtype=float), 0.0))
    lo = np.maximum(0.0, spec.y_lo - (means - spec.kappa * sig))
    hi = np.maximum(0.0, (means + spec.kappa * sig) - spec.y_hi)
    dev = means[-1] - spec.reference
    term_lo = max(0.0, -spec.terminal_halfwidth - (dev - spec.kappa * sig[-1]))
    term_hi = max(0.0, (dev + spec.kappa * sig[-1]) - spec.terminal_halfwidth)
    return np.concatenate([lo, hi, [term_lo, term_hi]])


def _phi(spec, means, variances, inputs, u_prev, penalty_weight) -> float:
    J = _stage_costs(spec, means, inputs, u_prev)
    J += spec.weight_variance * float(np.sum(np.maximum(variances, 0.0)))
    viol = constraint_violations(spec, means, variances)
    return J + penalty_weight * float(np.sum(viol))


def penalty_cost(
    spec: TrackingMpcSpec,
    rollout: Rollout,
    inputs,
    penalty_weight: float,
    u_prev,
) -> float:
    """Exact penalized cost: tracking objective plus weighted hinge
    violations of the soft output constraints, on exact GP outputs.

    Input box and rate constraints are hard and never penalized; ``u_prev``
    is the input applied before the horizon (needed by the first rate term).
    """
    if rollout.horizon != spec.horizon:
        raise InputContractError("rollout horizon does not match the MPC spec")
    return _phi(spec, rollout.means, rollout.variances, inputs, u_prev, penalty_weight)


def total_violation(spec: TrackingMpcSpec, rollout: Rollout) -> float:
    return float(np.sum(constraint_violations(spec, rollout.means, rollout.variances)))


# ---------------------------------------------------------------------------
# Subproblem construction.
# ---------------------------------------------------------------------------

def step_active_mask(arspec: ArSpec, step: int) -> np.ndarray:
    """GP-input dimensions whose displacement varies at horizon index ``step``
    (pre-horizon history is measured, hence fixed)."""
    mask = np.zeros(arspec.gp_input_dim, dtype=bool)
    for j in range(arspec.output_lag):
        mask[j] = step - arspec.output_lag + j >= 0
    off = arspec.output_lag
    for j in range(arspec.input_lag):
        live = step - arspec.input_lag + j >= 0
        mask[off + j * arspec.input_dim : off + (j + 1) * arspec.input_dim] = live
    mask[arspec.state_dim :] = True     # current input always varies
    return mask


@dataclass(frozen=True)
class SubproblemLayout:
    """Index map of the subproblem decision vector
    ``[du (H*n_u) | dy (H) | s (H, optional) | hinge slacks (2H+2)]``."""

    horizon: int
    input_dim: int
    has_sigma: bool
    objective_offset: float

    @property
    def n_du(self) -> int:
        return self.horizon * self.input_dim

    def idx_du(self, k: int, c: int = 0) -> int:
        return k * self.input_dim + c

    def idx_dy(self, k: int) -> int:
        return self.n_du + k

    def idx_s(self, k: int) -> int:
        if not self.has_sigma:
            raise InputContractError("layout has no sigma epigraph block")
        return self.n_du + self.horizon + k

    def idx_slack(self, j: int) -> int:
        base = self.n_du + self.horizon + (self.horizon if self.has_sigma else 0)
        return base + j

    @property
    def dim(self) -> int:
        return self.idx_slack(2 * self.horizon + 2 - 1) + 1

    def split(self, z: np.ndarray):
        """Extract (du (H, n_u), dy (H,), s (H,) or None) from a solution."""
        du = z[: self.n_du].reshape(self.horizon, self.input_dim)
        dy = z[self.n_du : self.n_du + self.horizon]
        s = z[self.n_du + self.horizon : self.n_du + 2 * self.horizon] if self.has_sigma else None
        return du, dy, s


def _xi_index_map(arspec: ArSpec, layout: SubproblemLayout, step: int):
    """Decision-vector indices backing each active entry of xi_k (after the
    leading constant 1)."""
    idx = []
    for j in range(arspec.output_lag):
        i = step - arspec.output_lag + j
        if i >= 0:
            idx.append(layout.idx_dy(i))
    for j in range(arspec.input_lag):
        i = step - arspec.input_lag + j
        if i >= 0:
            idx.extend(layout.idx_du(i, c) for c in range(arspec.input_dim))
    idx.extend(layout.idx_du(step, c) for c in range(arspec.input_dim))
    return idx


def build_subproblem(
    spec: TrackingMpcSpec,
    lingps: list[LinGp],
    nominal: Rollout,
    nominal_inputs: np.ndarray,
    u_prev,
    rho: float,
    penalty_weight: float,
    arspec: ArSpec,
) -> tuple[ConicProgram, SubproblemLayout]:
    """Assemble the convex trust-region subproblem around the nominal
    trajectory.  ``lingps[k]`` must be built at the nominal GP input of step
    ``k`` with the mask from :func:`step_active_mask`."""
    H = spec.horizon
    n_u = spec.input_dim
    if len(lingps) != H or nominal.horizon != H:
        raise InputContractError("need one local model per horizon step")
    u_star = np.atleast_2d(np.asarray(nominal_inputs, dtype=float))
    if u_star.shape != (H, n_u):
        raise InputContractError(f"nominal inputs must be ({H}, {n_u})")
    u_prev = np.atleast_1d(np.asarray(u_prev, dtype=float))
    y_star = nominal.means
    has_sigma = spec.kappa > 0.0 or spec.weight_variance > 0.0

    rate_star = np.vstack([u_prev[None, :], u_star])
    rate_star = u_star - rate_star[:-1]
    offset = float(
        spec.weight_output * np.sum((y_star - spec.reference) ** 2)
        + spec.weight_input_rate * np.sum(rate_star**2)
    )
    layout = SubproblemLayout(H, n_u, has_sigma, offset)
    d = layout.dim

    Q, R, S = spec.weight_output, spec.weight_input_rate, spec.weight_variance
    P = np.zeros((d, d))
    q = np.zeros(d)
    for k in range(H):
        iy = layout.idx_dy(k)
        P[iy, iy] += 2.0 * Q
        q[iy] += 2.0 * Q * (y_star[k] - spec.reference)
        for c in range(n_u):
            iu = layout.idx_du(k, c)
            P[iu, iu] += 2.0 * R
            q[iu] += 2.0 * R * rate_star[k, c]
            if k > 0:
                ip = layout.idx_du(k - 1, c)
                P[ip, ip] += 2.0 * R
                P[iu, ip] -= 2.0 * R
                P[ip, iu] -= 2.0 * R
                q[ip] -= 2.0 * R * rate_star[k, c]
        if has_sigma and S > 0.0:
            js = layout.idx_s(k)
            P[js, js] += 2.0 * S
    for j in range(2 * H + 2):
        q[layout.idx_slack(j)] = penalty_weight

    lb = np.full(d, -np.inf)
    ub = np.full(d, np.inf)
    for k in range(H):
        for c in range(n_u):
            iu = layout.idx_du(k, c)
            lo = max(-rho, spec.u_min[c] - u_star[k, c])
            hi = min(rho, spec.u_max[c] - u_star[k, c])
            if k == 0:
                lo = max(lo, spec.du_min[c] - rate_star[0, c])
                hi = min(hi, spec.du_max[c] - rate_star[0, c])
            lb[iu], ub[iu] = lo, hi
        iy = layout.idx_dy(k)
        lb[iy], ub[iy] = -rho, rho
        if has_sigma:
            lb[layout.idx_s(k)] = 0.0
    for j in range(2 * H + 2):
        lb[layout.idx_slack(j)] = 0.0

    A_eq = np.zeros((H, d))
    b_eq = np.zeros(H)
    cones: list[SocConstraint] = []
    for k in range(H):
        lg = lingps[k]
        live = _xi_index_map(arspec, layout, k)
        if len(live) != lg.n_active:
            raise InputContractError(
                f"local model at step {k} has {lg.n_active} active dims, "
                f"expected {len(live)}"
            )
        A_eq[k, layout.idx_dy(k)] = 1.0
        A_eq[k, live] -= lg.m_hat[1:]
        b_eq[k] = lg.m_hat[0] - y_star[k]
        if has_sigma:
            nxi = 1 + lg.n_active
            E = np.zeros((nxi, d))
            E[np.arange(1, nxi), live] = 1.0
            cvec = np.zeros(d)
            cvec[layout.idx_s(k)] = 1.0
            cones.append(
                SocConstraint(F=lg.V_sqrt @ E, g=lg.V_sqrt[:, 0], c=cvec, d0=0.0)
            )

    empty = np.zeros((0, d))
    for k in range(1, H):
        for c in range(n_u):
            if np.isfinite(spec.du_max[c]):
                cvec = np.zeros(d)
                cvec[layout.idx_du(k, c)] = -1.0
                cvec[layout.idx_du(k - 1, c)] = 1.0
                cones.append(SocConstraint(empty, [], cvec,
                                           spec.du_max[c] - rate_star[k, c]))
            if np.isfinite(spec.du_min[c]):
                cvec = np.zeros(d)
                cvec[layout.idx_du(k, c)] = 1.0
                cvec[layout.idx_du(k - 1, c)] = -1.0
                cones.append(SocConstraint(empty, [], cvec,
                                           rate_star[k, c] - spec.du_min[c]))

    kap = spec.kappa
    for k in range(H):
        cvec = np.zeros(d)
        cvec[layout.idx_slack(k)] = 1.0
        cvec[layout.idx_dy(k)] = 1.0
        if has_sigma:
            cvec[layout.idx_s(k)] = -kap
        cones.append(SocConstraint(empty, [], cvec, y_star[k] - spec.y_lo))
        cvec = np.zeros(d)
        cvec[layout.idx_slack(H + k)] = 1.0
        cvec[layout.idx_dy(k)] = -1.0
        if has_sigma:
            cvec[layout.idx_s(k)] = -kap
        cones.append(SocConstraint(empty, [], cvec, spec.y_hi - y_star[k]))

    dev = y_star[H - 1] - spec.reference
    cvec = np.zeros(d)
    cvec[layout.idx_slack(2 * H)] = 1.0
    cvec[layout.idx_dy(H - 1)] = 1.0
    if has_sigma:
        cvec[layout.idx_s(H - 1)] = -kap
    cones.append(SocConstraint(empty, [], cvec, spec.terminal_halfwidth + dev))
    cvec = np.zeros(d)
    cvec[layout.idx_slack(2 * H + 1)] = 1.0
    cvec[layout.idx_dy(H - 1)] = -1.0
    if has_sigma:
        cvec[layout.idx_s(H - 1)] = -kap
    cones.append(SocConstraint(empty, [], cvec, spec.terminal_halfwidth - dev))

    prog = ConicProgram(P=P, q=q, A_eq=A_eq, b_eq=b_eq, lb=lb, ub=ub, cones=cones)
    return prog, layout


def project_inputs(inputs, u_prev, spec: TrackingMpcSpec) -> np.ndarray:
    """Project an input sequence onto the hard constraint set (box and rate
    limits) by clipping forward through the rate chain."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    out = np.empty_like(inputs)
    prev = np.atleast_1d(np.asarray(u_prev, dtype=float)).copy()
    for k in range(inputs.shape[0]):
        lo = np.maximum(spec.u_min, prev + spec.du_min)
        hi = np.minimum(spec.u_max, prev + spec.du_max)
        out[k] = np.clip(inputs[k], lo, hi)
        prev = out[k]
    return out


# ---------------------------------------------------------------------------
# The trust-region loop.
# ---------------------------------------------------------------------------

def _scp_round(
    model: GpModel,
    spec: TrackingMpcSpec,
    arspec: ArSpec,
    init: ArState,
    u0: np.ndarray,
    u_prev: np.ndarray,
    config: ScpConfig,
    penalty_weight: float,
    rho0: float,
    solver_settings: SolverSettings,
) -> tuple[ScpRound, np.ndarray, Rollout]:
    H = spec.horizon
    masks = [step_active_mask(arspec, k) for k in range(H)]
    u_cur = u0.copy()
    rollout = rollout_mean(model, arspec, init, u_cur)
    phi = penalty_cost(spec, rollout, u_cur, penalty_weight, u_prev)
    rho = rho0
    records: list[ScpIteration] = []
    converged = False
    stop_reason = "j_max"

    for _ in range(config.j_max):
        t0 = time.perf_counter()
        lingps = [
            lingp_build(model, gp_input(rollout.states[k], u_cur[k]), masks[k])
            for k in range(H)
        ]
        t_lin = time.perf_counter() - t0

        prog, layout = build_subproblem(
            spec, lingps, rollout, u_cur, u_prev, rho, penalty_weight, arspec
        )
        t0 = time.perf_counter()
        sol = solve(prog, solver_settings)
        t_sub = time.perf_counter() - t0
        if sol.status != "optimal":
            raise SubproblemError(
                f"subproblem returned status={sol.status} "
                f"(residuals={sol.residuals}); slack-relaxed subproblems "
                "must be solvable"
            )
        du, dy, _ = layout.split(sol.z)
        u_trial = u_cur + du

        lin_means = np.empty(H)
        lin_vars = np.empty(H)
        for k in range(H):
            delta = sol.z[_xi_index_map(arspec, layout, k)]
            lin_means[k], lin_vars[k] = lingp_eval(lingps[k], delta)
        phi_lin = _phi(spec, lin_means, lin_vars, u_trial, u_prev, penalty_weight)

        t0 = time.perf_counter()
        trial_rollout = rollout_mean(model, arspec, init, u_trial)
        t_roll = time.perf_counter() - t0
        phi_trial = penalty_cost(spec, trial_rollout, u_trial, penalty_weight, u_prev)

        delta_actual = phi - phi_trial
        delta_pred = phi - phi_lin

        if abs(delta_pred) <= config.epsilon:
            records.append(ScpIteration(
                phi=phi, delta_actual=delta_actual, delta_predicted=delta_pred,
                ratio=None, rho=rho, accepted=False,
                subproblem_time=t_sub, rollout_time=t_roll, linearize_time=t_lin,
            ))
            converged = True
            stop_reason = "epsilon"
            break
        if delta_pred < 0.0:
            raise NumericalConsistencyError(
                f"predicted reduction {delta_pred:.3e} is negative beyond the "
                "stop tolerance; the nominal point should be subproblem-feasible"
            )

        ratio = delta_actual / delta_pred
        accepted = ratio >= config.r0
        records.append(ScpIteration(
            phi=phi, delta_actual=delta_actual, delta_predicted=delta_pred,
            ratio=ratio, rho=rho, accepted=accepted,
            subproblem_time=t_sub, rollout_time=t_roll, linearize_time=t_lin,
        ))
        if accepted:
            u_cur = u_trial
            rollout = trial_rollout
            phi = phi_trial
        if ratio < config.r1:
            rho *= config.beta_fail
        elif ratio >= config.r2:
            rho *= config.beta_succ
        if rho < config.rho_floor:
            stop_reason = "rho_floor"
            break

    rnd = ScpRound(
        penalty_weight=penalty_weight,
        iterations=records,
        converged=converged,
        stop_reason=stop_reason,
    )
    return rnd, u_cur, rollout


def scp_solve(
    model: GpModel,
    spec: TrackingMpcSpec,
    arspec: ArSpec,
    init: ArState,
    u_init,
    config: ScpConfig | None = None,
    u_prev=0.0,
    rho_init: float | None = None,
    solver_settings: SolverSettings | None = None,
) -> ScpReport:
    """Run the full trust-region loop, growing the penalty weight and
    re-running when a converged solution still carries hinge violation."""
    config = config or ScpConfig()
    solver_settings = solver_settings or SolverSettings()
    if spec.input_dim != arspec.input_dim:
        raise InputContractError("spec and arspec disagree on the input dimension")
    u_prev = np.atleast_1d(np.asarray(u_prev, dtype=float))
    if u_prev.size != spec.input_dim:
        raise InputContractError("u_prev must have the input dimension")
    u_cur = project_inputs(u_init, u_prev, spec)
    if u_cur.shape != (spec.horizon, spec.input_dim):
        raise InputContractError("u_init must be (H, n_u)")

    t_start = time.perf_counter()
    rho0 = config.rho0 if rho_init is None else max(rho_init, 10.0 * config.rho_floor)
    lam = config.penalty_weight
    rounds: list[ScpRound] = []
    rollout = None
    for attempt in range(1 + config.penalty_retries):
        rnd, u_cur, rollout = _scp_round(
            model, spec, arspec, init, u_cur, u_prev, config, lam, rho0,
            solver_settings,
        )
        rounds.append(rnd)
        viol = total_violation(spec, rollout)
        if not rnd.converged or viol <= config.violation_tol:
            break
        if lam >= config.penalty_cap or attempt == config.penalty_retries:
            break
        lam = min(lam * config.penalty_growth, config.penalty_cap)

    final_phi = penalty_cost(spec, rollout, u_cur, config.penalty_weight, u_prev)
    return ScpReport(
        rounds=rounds,
        final_inputs=u_cur,
        final_phi=final_phi,
        final_violation=total_violation(spec, rollout),
        converged=rounds[-1].converged,
        total_time=time.perf_counter() - t_start,
    )
