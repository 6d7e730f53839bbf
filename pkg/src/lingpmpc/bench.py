"""Closed-loop MPC harness, derivative-free oracle, and the scaling benchmark."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import ArSpec, ArState, gp_input, rollout_mean
from .exceptions import (
    FitError,
    InputContractError,
    NumericalConsistencyError,
    SubproblemError,
)
from .gp import FitConfig, GpModel, fit, gp_predict
from .plant import DEFAULT_REFERENCE, PlantState, generate_training_data, make_reference, measure, plant_step
from .scp import (
    ScpConfig,
    ScpReport,
    TrackingMpcSpec,
    penalty_cost,
    project_inputs,
    scp_solve,
)


@dataclass
class StepRecord:
    step: int
    reference: float
    applied_u: float
    measured_y: float
    plant_x: float
    pred_mean: float
    pred_sigma: float
    solve_time: float
    n_iterations: int
    subproblem_time_mean: float
    converged: bool
    failed: bool
    violation: float


@dataclass
class ClosedLoopLog:
    records: list[StepRecord] = field(default_factory=list)
    traces: list[ScpReport] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.asarray([getattr(r, name) for r in self.records])

    _FIELDS = (
        "step", "reference", "applied_u", "measured_y", "plant_x",
        "pred_mean", "pred_sigma", "solve_time", "n_iterations",
        "subproblem_time_mean", "converged", "failed", "violation",
    )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self._FIELDS)
            for r in self.records:
                writer.writerow([getattr(r, f) for f in self._FIELDS])


def run_closed_loop(
    model: GpModel,
    mpc_spec: TrackingMpcSpec,
    steps: int,
    seed: int,
    arspec: ArSpec | None = None,
    config: ScpConfig | None = None,
    reference=None,
    x0: float = 0.0,
    u_prev0: float = 0.0,
    noise_on: bool = True,
    keep_traces: bool = False,
) -> ClosedLoopLog:
    """Receding-horizon simulation against the noisy plant.

    At every step the controller state is rebuilt from measured outputs and
    applied inputs, the SCP solve is warm-started from the shifted previous
    solution, and the first optimized input is applied.  A solver failure is
    logged and the previous input is held for that step.
    """
    arspec = arspec or ArSpec(1, 0, 1)
    config = config or ScpConfig()
    if arspec.input_dim != 1:
        raise InputContractError("the benchmark plant is single-input")
    ref = reference or make_reference(DEFAULT_REFERENCE)
    H = mpc_spec.horizon

    log = ClosedLoopLog()
    if steps <= 0:
        return log

    plant = PlantState.create(seed, x0=x0)
    y_meas = measure(plant, noise_on)
    hist_y = np.full(arspec.output_lag, y_meas)
    hist_u = np.full((arspec.input_lag, 1), float(u_prev0))
    u_prev = np.atleast_1d(float(u_prev0))
    warm = None
    rho_carry = None

    for t in range(steps):
        spec_t = replace(mpc_spec, reference=float(ref(t)))
        state = ArState(hist_y.copy(), hist_u.copy())
        u_init = warm if warm is not None else np.zeros((H, 1))
        t0 = time.perf_counter()
        failed = False
        report = None
        try:
            report = scp_solve(
                model, spec_t, arspec, state, u_init, config,
                u_prev=u_prev,
                rho_init=None if config.reset_rho else rho_carry,
            )
            u_t = float(report.final_inputs[0, 0])
        except (SubproblemError, NumericalConsistencyError):
            failed = True
            u_t = float(u_prev[0])
        solve_time = time.perf_counter() - t0

        # enforce the hard input constraints exactly on the applied value
        lo = max(spec_t.u_min[0], u_prev[0] + spec_t.du_min[0])
        hi = min(spec_t.u_max[0], u_prev[0] + spec_t.du_max[0])
        u_t = float(np.clip(u_t, lo, hi))

        pred_mean, pred_var = gp_predict(model, gp_input(state, [u_t]))
        plant, y_meas = plant_step(plant, u_t, noise_on)

        if report is not None:
            iters = report.iterations
            sub_times = [it.subproblem_time for it in iters]
            rec = StepRecord(
                step=t, reference=spec_t.reference, applied_u=u_t,
                measured_y=y_meas, plant_x=plant.x,
                pred_mean=pred_mean, pred_sigma=float(np.sqrt(pred_var)),
                solve_time=solve_time, n_iterations=len(iters),
                subproblem_time_mean=float(np.mean(sub_times)) if sub_times else 0.0,
                converged=report.converged, failed=False,
                violation=report.final_violation,
            )
            warm = np.vstack([report.final_inputs[1:], report.final_inputs[-1:]])
            warm = project_inputs(warm, np.atleast_1d(u_t), spec_t)
            if report.rounds and report.rounds[-1].iterations:
                rho_carry = report.rounds[-1].iterations[-1].rho
            if keep_traces:
                log.traces.append(report)
        else:
            rec = StepRecord(
                step=t, reference=spec_t.reference, applied_u=u_t,
                measured_y=y_meas, plant_x=plant.x,
                pred_mean=pred_mean, pred_sigma=float(np.sqrt(pred_var)),
                solve_time=solve_time, n_iterations=0,
                subproblem_time_mean=0.0, converged=False, failed=True,
                violation=float("nan"),
            )
            warm = None
        log.records.append(rec)

        hist_y = np.append(hist_y[1:], y_meas)
        if arspec.input_lag > 0:
            hist_u = np.vstack([hist_u[1:], [[u_t]]])
        u_prev = np.atleast_1d(u_t)
    return log


def oracle_solve(
    model: GpModel,
    mpc_spec: TrackingMpcSpec,
    init: ArState,
    restarts: int = 20,
    seed: int = 0,
    arspec: ArSpec | None = None,
    u_prev=0.0,
    penalty_weight: float = 1e3,
    step0: float = 0.25,
    step_min: float = 1e-4,
):
    """Derivative-free reference minimizer of the exact penalized cost.

    Multi-start projected compass search over the horizon's input sequence:
    each candidate coordinate move is projected through the box and rate
    chain before evaluation.  Deliberately independent of the SCP path; slow
    but adequate at desk scale (H <= ~8 recommended).
    """
    arspec = arspec or ArSpec(1, 0, 1)
    H, n_u = mpc_spec.horizon, mpc_spec.input_dim
    u_prev = np.atleast_1d(np.asarray(u_prev, dtype=float))
    rng = np.random.default_rng(seed)

    def cost(U: np.ndarray) -> float:
        ro = rollout_mean(model, arspec, init, U)
        return penalty_cost(mpc_spec, ro, U, penalty_weight, u_prev)

    def polish(U: np.ndarray):
        U = project_inputs(U, u_prev, mpc_spec)
        best = cost(U)
        step = step0
        while step >= step_min:
            improved = False
            for k in range(H):
                for c in range(n_u):
                    for sign in (1.0, -1.0):
                        cand = U.copy()
                        cand[k, c] += sign * step
                        cand = project_inputs(cand, u_prev, mpc_spec)
                        val = cost(cand)
                        if val < best - 1e-12:
                            U, best = cand, val
                            improved = True
            if not improved:
                step *= 0.5
        return U, best

    best_u, best_val = polish(np.zeros((H, n_u)))
    for _ in range(max(0, restarts - 1)):
        start = rng.uniform(mpc_spec.u_min, mpc_spec.u_max, size=(H, n_u))
        u, val = polish(start)
        if val < best_val:
            best_u, best_val = u, val
    return best_u, best_val


@dataclass
class BenchRow:
    n_train: int
    step: int
    solve_time: float
    subproblem_time: float
    n_iterations: int
    tracking_error: float
    margin_lo: float
    margin_hi: float
    converged: bool


@dataclass
class BenchResult:
    rows: list[BenchRow] = field(default_factory=list)
    failures: list[tuple[int, str]] = field(default_factory=list)
    logs: dict = field(default_factory=dict)        # n_train -> ClosedLoopLog

    _FIELDS = (
        "n_train", "step", "solve_time", "subproblem_time", "n_iterations",
        "tracking_error", "margin_lo", "margin_hi", "converged",
    )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self._FIELDS)
            for r in self.rows:
                writer.writerow([getattr(r, f) for f in self._FIELDS])

    def per_n(self, column: str, skip_warmup: bool = True):
        """Column values grouped by training size; step 0 excluded by default
        (allocator and cache warm-up distorts timing)."""
        out: dict[int, np.ndarray] = {}
        for n in sorted({r.n_train for r in self.rows}):
            vals = [
                getattr(r, column)
                for r in self.rows
                if r.n_train == n and (not skip_warmup or r.step > 0)
            ]
            out[n] = np.asarray(vals, dtype=float)
        return out

    def median_by_n(self, column: str) -> dict[int, float]:
        return {n: float(np.median(v)) for n, v in self.per_n(column).items()}


def benchmark(
    n_grid,
    steps: int,
    seed: int,
    mpc_spec: TrackingMpcSpec | None = None,
    config: ScpConfig | None = None,
    fit_config: FitConfig | None = None,
    arspec: ArSpec | None = None,
    keep_traces: bool = False,
) -> BenchResult:
    """Train one model per grid size and run the closed loop for each,
    recording per-step wall-clock totals and per-iteration subproblem times."""
    mpc_spec = mpc_spec or TrackingMpcSpec()
    config = config or ScpConfig()
    fit_config = fit_config or FitConfig(n_starts=3, max_iter=80)
    arspec = arspec or ArSpec(1, 0, 1)
    result = BenchResult()
    for n_train in n_grid:
        data_seed = 100000 * seed + n_train
        loop_seed = 200000 * seed + n_train
        X, Y = generate_training_data(n_train, data_seed)
        try:
            model = fit(X, Y, fit_config)
        except FitError as exc:
            result.failures.append((n_train, str(exc)))
            continue
        log = run_closed_loop(
            model, mpc_spec, steps, loop_seed,
            arspec=arspec, config=config, keep_traces=keep_traces,
        )
        result.logs[n_train] = log
        for rec in log.records:
            result.rows.append(BenchRow(
                n_train=n_train,
                step=rec.step,
                solve_time=rec.solve_time,
                subproblem_time=rec.subproblem_time_mean,
                n_iterations=rec.n_iterations,
                tracking_error=abs(rec.pred_mean - rec.reference),
                margin_lo=(rec.pred_mean - 2.0 * rec.pred_sigma) - mpc_spec.y_lo,
                margin_hi=mpc_spec.y_hi - (rec.pred_mean + 2.0 * rec.pred_sigma),
                converged=rec.converged,
            ))
    return result
