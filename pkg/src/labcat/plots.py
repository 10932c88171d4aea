"""Figure rendering for the CLI report path.

Renders regret/best-so-far curves from report rows to an image file next to
the delimited output.  Uses the non-interactive Agg backend; the library's
benchmark module stays plotting-free.
"""
from __future__ import annotations

import math

import numpy as np

from .bench import REGRET_LOG_FLOOR, BenchReport


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_bench_figure(report: BenchReport, path) -> None:
    """Per-function regret curves (one thin line per run, median overlaid)."""
    plt = _pyplot()
    functions = [s.function for s in report.summaries]
    fig, axes = plt.subplots(
        1, len(functions), figsize=(4.5 * len(functions), 3.5), squeeze=False
    )
    run_function = {r.run_id: r.function for r in report.runs}
    for ax, fn_name in zip(axes[0], functions):
        curves = {}
        for row in report.rows:
            if run_function.get(row.run_id) == fn_name:
                curves.setdefault(row.run_id, []).append(max(row.regret, REGRET_LOG_FLOOR))
        for curve in curves.values():
            ax.semilogy(range(1, len(curve) + 1), curve, color="steelblue", alpha=0.25, lw=0.7)
        if curves:
            length = min(len(c) for c in curves.values())
            stacked = np.array([c[:length] for c in curves.values()])
            ax.semilogy(
                range(1, length + 1),
                np.median(stacked, axis=0),
                color="crimson",
                lw=1.8,
                label="median",
            )
            ax.legend(loc="upper right", frameon=False)
        ax.set_title(fn_name)
        ax.set_xlabel("evaluation")
        ax.set_ylabel("regret")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_trace_figure(rows, path, title: str = "optimization trace") -> None:
    """Best-so-far curve of one run; falls back to best_y when regret is NaN."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    regrets = [row.regret for row in rows]
    if regrets and all(math.isfinite(r) for r in regrets):
        ax.semilogy(
            range(1, len(rows) + 1),
            [max(r, REGRET_LOG_FLOOR) for r in regrets],
            color="steelblue",
        )
        ax.set_ylabel("regret")
    else:
        ax.plot(range(1, len(rows) + 1), [row.best_y for row in rows], color="steelblue")
        ax.set_ylabel("best value")
    ax.set_xlabel("evaluation")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
