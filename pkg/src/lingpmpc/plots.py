"""Figure rendering for closed-loop logs and benchmark results.

Figures are written next to the delimited output files; the CSVs remain the
machine-readable contract.  Uses the Agg backend so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({
    "figure.figsize": (7.0, 4.6),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
})


def save_closed_loop_figure(log, spec, path) -> str:
    """Two panels: output tracking with the confidence band, and the input."""
    t = log.column("step")
    fig, (ax_y, ax_u) = plt.subplots(2, 1, sharex=True, figsize=(7.0, 5.4))

    mean = log.column("pred_mean")
    sig = log.column("pred_sigma")
    ax_y.fill_between(t, mean - 2 * sig, mean + 2 * sig, alpha=0.25,
                      label="predicted $\\pm 2\\sigma$")
    ax_y.plot(t, log.column("measured_y"), ".", ms=3, label="measured")
    ax_y.plot(t, mean, lw=1.2, label="predicted mean")
    ax_y.step(t, log.column("reference"), "k--", lw=1, where="post", label="reference")
    ax_y.axhline(spec.y_lo, color="r", lw=0.8, ls=":")
    ax_y.axhline(spec.y_hi, color="r", lw=0.8, ls=":")
    ax_y.set_ylabel("output")
    ax_y.legend(loc="best", ncol=2)

    ax_u.step(t, log.column("applied_u"), lw=1.2, where="post")
    ax_u.axhline(spec.u_min[0], color="r", lw=0.8, ls=":")
    ax_u.axhline(spec.u_max[0], color="r", lw=0.8, ls=":")
    ax_u.set_ylabel("input")
    ax_u.set_xlabel("step")

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def save_bench_figure(result, path) -> str:
    """Median per-step solve time and per-iteration subproblem time vs N."""
    tot = result.median_by_n("solve_time")
    sub = result.median_by_n("subproblem_time")
    ns = sorted(tot)
    fig, ax = plt.subplots()
    ax.plot(ns, [tot[n] for n in ns], "o-", label="total per MPC step")
    ax.plot(ns, [sub[n] for n in ns], "s-", label="subproblem per iteration")
    ax.set_xlabel("training data size $N$")
    ax.set_ylabel("median time (s)")
    ax.set_ylim(bottom=0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
