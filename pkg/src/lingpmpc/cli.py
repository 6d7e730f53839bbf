"""Command-line interface.

Subcommands: gen-data, train, run, bench, oracle.  ``run`` and ``bench``
write a CSV and render a companion PNG figure next to it.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import benchmark, oracle_solve, run_closed_loop
from .dynamics import ArSpec, ArState
from .exceptions import InputContractError
from .gp import (
    FitConfig,
    fit,
    load_model,
    load_training_data,
    save_model,
    save_training_data,
)
from .plant import DEFAULT_REFERENCE, generate_training_data, make_reference
from .scp import ScpConfig, TrackingMpcSpec

_MPC_KEYS = {
    "horizon", "weight_output", "weight_input_rate", "weight_variance",
    "u_min", "u_max", "du_min", "du_max", "y_lo", "y_hi", "kappa",
    "terminal_halfwidth",
}
_SCP_KEYS = {
    "rho0", "penalty_weight", "r0", "r1", "r2", "beta_fail", "beta_succ",
    "epsilon", "j_max", "penalty_growth", "penalty_cap", "penalty_retries",
    "violation_tol", "rho_floor", "reset_rho",
}
_AR_KEYS = {"output_lag", "input_lag", "input_dim"}
_SIM_KEYS = {"reference", "x0", "u_prev", "noise"}


def load_config(path):
    """Parse the optional JSON config into (TrackingMpcSpec, ScpConfig,
    ArSpec, sim-options dict); every field is optional."""
    doc = {}
    if path:
        with open(path) as fh:
            doc = json.load(fh)
    unknown = set(doc) - _MPC_KEYS - _SCP_KEYS - _AR_KEYS - _SIM_KEYS
    if unknown:
        raise InputContractError(f"unknown config keys: {sorted(unknown)}")
    mpc = TrackingMpcSpec(**{k: doc[k] for k in _MPC_KEYS & set(doc)})
    scp = ScpConfig(**{k: doc[k] for k in _SCP_KEYS & set(doc)})
    ar = ArSpec(**{
        "output_lag": doc.get("output_lag", 1),
        "input_lag": doc.get("input_lag", 0),
        "input_dim": doc.get("input_dim", 1),
    })
    ref_spec = doc.get("reference", list(DEFAULT_REFERENCE))
    if isinstance(ref_spec, (int, float)):
        ref = make_reference([(0, float(ref_spec))])
    else:
        ref = make_reference(ref_spec)
    sim = {
        "reference": ref,
        "x0": float(doc.get("x0", 0.0)),
        "u_prev": float(doc.get("u_prev", 0.0)),
        "noise": bool(doc.get("noise", True)),
    }
    return mpc, scp, ar, sim


def _parse_grid(text: str) -> list[int]:
    """'100:1500:100' -> [100, 200, ..., 1500]; also accepts '100,400,900'."""
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) != 3:
            raise InputContractError("grid must be start:stop:step")
        start, stop, step = parts
        return list(range(start, stop + 1, step))
    return [int(p) for p in text.split(",")]


def cmd_gen_data(args) -> int:
    X, Y = generate_training_data(args.n, args.seed, noise_on=not args.no_noise)
    save_training_data(X, Y, args.out)
    print(f"wrote {Y.size} rows to {args.out}")
    return 0


def cmd_train(args) -> int:
    X, Y = load_training_data(args.data)
    cfg = FitConfig(
        n_starts=args.starts,
        seed=args.seed,
        max_iter=args.max_iter,
        noise_variance=args.fix_noise,
    )
    model = fit(X, Y, cfg)
    save_model(model, args.out)
    h = model.hyper
    print(
        f"trained on N={model.n_train}: lengthscales={np.round(h.lengthscales, 5).tolist()} "
        f"signal_variance={h.signal_variance:.6g} noise_variance={h.noise_variance:.6g}"
    )
    print(f"wrote {args.out}")
    return 0


def cmd_run(args) -> int:
    model = load_model(args.model)
    mpc, scp, ar, sim = load_config(args.config)
    log = run_closed_loop(
        model, mpc, args.steps, args.seed,
        arspec=ar, config=scp, reference=sim["reference"],
        x0=sim["x0"], u_prev0=sim["u_prev"], noise_on=sim["noise"],
        keep_traces=args.trace,
    )
    out = Path(args.out)
    log.to_csv(out)
    print(f"wrote {len(log)} steps to {out}")
    if args.trace:
        trace_path = out.with_name(out.stem + "_trace.json")
        with open(trace_path, "w") as fh:
            json.dump([rep.to_dict() for rep in log.traces], fh)
        print(f"wrote solver traces to {trace_path}")
    if not args.no_plot:
        from .plots import save_closed_loop_figure

        print(f"wrote figure to {save_closed_loop_figure(log, mpc, out.with_suffix('.png'))}")
    n_fail = int(np.sum(log.column("failed")))
    if n_fail:
        print(f"warning: {n_fail} steps held the previous input after solver failure")
    return 0


def cmd_bench(args) -> int:
    mpc, scp, ar, _ = load_config(args.config)
    fit_cfg = FitConfig(n_starts=args.starts, max_iter=args.max_iter)
    result = benchmark(
        _parse_grid(args.n_grid), args.steps, args.seed,
        mpc_spec=mpc, config=scp, fit_config=fit_cfg, arspec=ar,
    )
    out = Path(args.out)
    result.to_csv(out)
    print(f"wrote {len(result.rows)} rows to {out}")
    med_tot = result.median_by_n("solve_time")
    med_sub = result.median_by_n("subproblem_time")
    for n in sorted(med_tot):
        print(f"  N={n:5d}  median step {med_tot[n]*1e3:8.2f} ms   "
              f"median subproblem {med_sub[n]*1e3:7.2f} ms")
    if not args.no_plot:
        from .plots import save_bench_figure

        print(f"wrote figure to {save_bench_figure(result, out.with_suffix('.png'))}")
    if result.failures:
        for n, msg in result.failures:
            print(f"error: training failed for N={n}: {msg}", file=sys.stderr)
        return 1
    return 0


def cmd_oracle(args) -> int:
    model = load_model(args.model)
    mpc, scp, ar, sim = load_config(args.config)
    if args.horizon is not None:
        mpc = replace(mpc, horizon=args.horizon)
    init = ArState(
        np.full(ar.output_lag, sim["x0"]),
        np.full((ar.input_lag, ar.input_dim), sim["u_prev"]),
    )
    mpc = replace(mpc, reference=sim["reference"](0))
    inputs, cost = oracle_solve(
        model, mpc, init,
        restarts=args.restarts, seed=args.seed, arspec=ar,
        u_prev=sim["u_prev"], penalty_weight=scp.penalty_weight,
    )
    doc = {"cost": cost, "inputs": inputs.ravel().tolist()}
    print(json.dumps(doc, indent=2))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lingpmpc",
        description="GP tracking MPC via linearized-GP sequential convex programming",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="simulate the plant and write training CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--no-noise", action="store_true")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit GP hyperparameters and write model JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=150)
    p.add_argument("--fix-noise", type=float, default=None,
                   help="fix the noise variance instead of fitting it")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="closed-loop MPC simulation; writes CSV + PNG")
    p.add_argument("--model", required=True)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", action="store_true",
                   help="also write per-step solver traces as JSON")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="solve-time scaling across model sizes")
    p.add_argument("--n-grid", default="100:1500:100",
                   help="start:stop:step or comma list")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--starts", type=int, default=3)
    p.add_argument("--max-iter", type=int, default=80)
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("oracle", help="derivative-free reference solve of one instance")
    p.add_argument("--model", required=True)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
