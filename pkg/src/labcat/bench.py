"""Synthetic test functions, multi-run benchmark execution, and report output.

Reports hold one row per objective evaluation and are written as CSV (fixed
column schema) or JSON (same rows plus a config echo and per-function summary).
All numbers are serialized with 17 significant digits so written values parse
back bitwise-identically.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .optimizer import LabcatConfig, OptResult, minimize

REGRET_LOG_FLOOR = 1e-18  # floor applied before taking log10 of a regret


class DimensionMismatch(Exception):
    """Evaluation point has the wrong dimension for the test function."""


class IoFailure(Exception):
    """Report could not be written to the requested path."""


@dataclass(frozen=True)
class TestFunction:
    name: str
    dimension: int
    bounds: np.ndarray                  # (d, 2)
    f_min: float
    x_min: tuple[np.ndarray, ...] | None

    def __call__(self, x) -> float:
        return eval_testfn(self, x)


def _sphere(x: np.ndarray) -> float:
    return float(np.sum(x * x))


def _quartic(x: np.ndarray) -> float:
    coeff = np.arange(1, x.size + 1)
    return float(np.sum(coeff * x**4))


def _booth(x: np.ndarray) -> float:
    return float((x[0] + 2.0 * x[1] - 7.0) ** 2 + (2.0 * x[0] + x[1] - 5.0) ** 2)


def _rosenbrock(x: np.ndarray) -> float:
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (x[:-1] - 1.0) ** 2))


def _branin(x: np.ndarray) -> float:
    a = 1.0
    b = 5.1 / (4.0 * math.pi**2)
    c = 5.0 / math.pi
    r = 6.0
    s = 10.0
    t = 1.0 / (8.0 * math.pi)
    return float(a * (x[1] - b * x[0] ** 2 + c * x[0] - r) ** 2 + s * (1.0 - t) * math.cos(x[0]) + s)


def _levy(x: np.ndarray) -> float:
    w = 1.0 + (x - 1.0) / 4.0
    head = math.sin(math.pi * w[0]) ** 2
    tail = (w[-1] - 1.0) ** 2 * (1.0 + math.sin(2.0 * math.pi * w[-1]) ** 2)
    mid = np.sum((w[:-1] - 1.0) ** 2 * (1.0 + 10.0 * np.sin(math.pi * w[:-1] + 1.0) ** 2))
    return float(head + mid + tail)


_EVALUATORS = {
    "sphere": _sphere,
    "quartic": _quartic,
    "booth": _booth,
    "rosenbrock": _rosenbrock,
    "branin": _branin,
    "levy": _levy,
}

_DOMAINS = {
    "sphere": (-5.12, 5.12),
    "quartic": (-1.28, 1.28),
    "booth": (-10.0, 10.0),
    "rosenbrock": (-5.0, 10.0),
    "levy": (-10.0, 10.0),
}

_FIXED_DIMENSION = {"booth": 2, "branin": 2}

FUNCTION_NAMES = tuple(sorted(_EVALUATORS))


def get_function(name: str, dimension: int = 2) -> TestFunction:
    """Look up a test function by name at the requested dimension."""
    key = name.lower()
    if key not in _EVALUATORS:
        raise KeyError(f"unknown test function {name!r}; choose from {FUNCTION_NAMES}")
    if key in _FIXED_DIMENSION and dimension != _FIXED_DIMENSION[key]:
        raise DimensionMismatch(f"{key} is only defined for d={_FIXED_DIMENSION[key]}")
    if dimension < 1:
        raise ValueError("dimension must be positive")

    if key == "branin":
        bounds = np.array([[-5.0, 10.0], [0.0, 15.0]])
        f_min = 5.0 / (4.0 * math.pi)
        x_min = (
            np.array([-math.pi, 12.275]),
            np.array([math.pi, 2.275]),
            np.array([3.0 * math.pi, 2.475]),
        )
    else:
        lo, hi = _DOMAINS[key]
        bounds = np.tile(np.array([lo, hi]), (dimension, 1))
        f_min = 0.0
        if key == "booth":
            x_min = (np.array([1.0, 3.0]),)
        elif key in ("rosenbrock", "levy"):
            x_min = (np.ones(dimension),)
        else:
            x_min = (np.zeros(dimension),)
    return TestFunction(name=key, dimension=dimension, bounds=bounds, f_min=f_min, x_min=x_min)


def eval_testfn(fn: TestFunction, x) -> float:
    """Evaluate a test function; points outside the bounds are permitted."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != fn.dimension:
        raise DimensionMismatch(f"{fn.name} expects d={fn.dimension}, got {x.size}")
    return _EVALUATORS[fn.name](x)


@dataclass(frozen=True)
class EvalRow:
    """One report row: an evaluation within a numbered run."""

    run_id: int
    eval_index: int
    x: np.ndarray
    y: float
    best_y: float
    regret: float
    wall_ns: int


@dataclass(frozen=True)
class RunSummary:
    run_id: int
    function: str
    seed: int
    status: str                  # "ok" or an error description
    n_evals: int
    n_restarts: int
    termination: str | None
    final_best: float
    final_regret: float
    wall_ns_total: int


@dataclass(frozen=True)
class FunctionSummary:
    function: str
    n_runs: int
    n_failed: int
    final_log_regret_mean: float
    final_log_regret_std: float   # population standard deviation
    wall_s_mean: float
    wall_s_std: float


@dataclass(frozen=True)
class BenchReport:
    dimension: int
    rows: tuple[EvalRow, ...]
    runs: tuple[RunSummary, ...]
    summaries: tuple[FunctionSummary, ...]
    config: LabcatConfig
    seeds: tuple[int, ...]


def rows_from_result(result: OptResult, f_min: float, run_id: int = 0) -> list[EvalRow]:
    """Flatten an optimization trace into report rows.

    Regret is best-so-far minus ``f_min``, clipped at zero to absorb float
    noise at the optimum; pass ``f_min=nan`` when the optimum is unknown.
    """
    rows = []
    for rec in result.trace:
        regret = rec.best_y - f_min
        if regret < 0.0:
            regret = 0.0
        rows.append(
            EvalRow(
                run_id=run_id,
                eval_index=rec.eval_index,
                x=rec.x,
                y=rec.y,
                best_y=rec.best_y,
                regret=regret,
                wall_ns=rec.wall_ns,
            )
        )
    return rows


def _run_one(fn: TestFunction, config: LabcatConfig, seed: int, budget: int):
    cfg = replace(config, seed=seed, max_evals=budget)
    return minimize(lambda x: eval_testfn(fn, x), fn.bounds, cfg)


def run_benchmark(
    fns,
    config: LabcatConfig,
    n_runs: int,
    budget: int,
    base_seed: int,
    jobs: int = 1,
) -> BenchReport:
    """Run ``n_runs`` independent minimizations per function and collect rows.

    Run ``j`` of function ``i`` uses seed ``base_seed + j`` and run_id
    ``i * n_runs + j``.  Runs are independent, so ``jobs > 1`` executes them on
    a thread pool; results are merged in run_id order either way.  A failed run
    is recorded in its summary without aborting the batch.
    """
    fns = list(fns)
    if n_runs < 1:
        raise ValueError("n_runs must be positive")
    if not fns:
        raise ValueError("need at least one test function")
    dims = {fn.dimension for fn in fns}
    if len(dims) > 1:
        raise ValueError("all functions in one report must share a dimension")

    tasks = [
        (i * n_runs + j, fn, base_seed + j)
        for i, fn in enumerate(fns)
        for j in range(n_runs)
    ]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(
                pool.map(lambda t: _guarded_run(t[1], config, t[2], budget), tasks)
            )
    else:
        outcomes = [_guarded_run(fn, config, seed, budget) for _, fn, seed in tasks]

    rows: list[EvalRow] = []
    runs: list[RunSummary] = []
    for (run_id, fn, seed), (result, error) in zip(tasks, outcomes):
        if error is not None:
            runs.append(
                RunSummary(
                    run_id=run_id,
                    function=fn.name,
                    seed=seed,
                    status=f"error: {error}",
                    n_evals=0,
                    n_restarts=0,
                    termination=None,
                    final_best=math.nan,
                    final_regret=math.nan,
                    wall_ns_total=0,
                )
            )
            continue
        run_rows = rows_from_result(result, fn.f_min, run_id)
        rows.extend(run_rows)
        runs.append(
            RunSummary(
                run_id=run_id,
                function=fn.name,
                seed=seed,
                status="ok",
                n_evals=result.n_evals,
                n_restarts=result.n_restarts,
                termination=result.termination.value,
                final_best=result.best_y,
                final_regret=run_rows[-1].regret if run_rows else math.nan,
                wall_ns_total=sum(r.wall_ns for r in run_rows),
            )
        )

    summaries = []
    for fn in fns:
        ok = [r for r in runs if r.function == fn.name and r.status == "ok"]
        failed = [r for r in runs if r.function == fn.name and r.status != "ok"]
        if ok:
            log_regrets = np.log10([max(r.final_regret, REGRET_LOG_FLOOR) for r in ok])
            wall_s = np.array([r.wall_ns_total for r in ok]) / 1e9
            summaries.append(
                FunctionSummary(
                    function=fn.name,
                    n_runs=len(ok) + len(failed),
                    n_failed=len(failed),
                    final_log_regret_mean=float(np.mean(log_regrets)),
                    final_log_regret_std=float(np.std(log_regrets)),
                    wall_s_mean=float(np.mean(wall_s)),
                    wall_s_std=float(np.std(wall_s)),
                )
            )
        else:
            summaries.append(
                FunctionSummary(fn.name, len(failed), len(failed), math.nan, math.nan, math.nan, math.nan)
            )

    return BenchReport(
        dimension=fns[0].dimension,
        rows=tuple(rows),
        runs=tuple(runs),
        summaries=tuple(summaries),
        config=config,
        seeds=tuple(base_seed + j for j in range(n_runs)),
    )


def _guarded_run(fn, config, seed, budget):
    try:
        return _run_one(fn, config, seed, budget), None
    except Exception as exc:  # recorded per run; the batch continues
        return None, f"{type(exc).__name__}: {exc}"


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def csv_header(dimension: int) -> list[str]:
    return (
        ["run_id", "eval_index"]
        + [f"x_{i}" for i in range(dimension)]
        + ["y", "best_y", "regret", "wall_ns"]
    )


def _config_echo(config: LabcatConfig) -> dict:
    return {
        "beta": config.beta,
        "rho": config.rho,
        "sigma_prior": config.sigma_prior,
        "hyper_steps": config.hyper_steps,
        "doe_size": config.doe_size,
        "max_evals": config.max_evals,
        "target_value": config.target_value,
        "range_tolerance": config.range_tolerance,
        "seed": config.seed,
        "rotation_enabled": config.rotation_enabled,
        "uniform_lengthscale_prior": config.uniform_lengthscale_prior,
    }


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_report(report: BenchReport, path, fmt: str = "csv") -> None:
    """Write the report rows (and, for JSON, the summary) to ``path``.

    CSV carries one row per evaluation under a fixed header; JSON mirrors the
    rows and adds the config echo, seeds, and per-function/per-run summaries.
    Output is UTF-8 with LF line endings and '.' decimal separators regardless
    of locale.
    """
    path = Path(path)
    try:
        if fmt == "csv":
            lines = [",".join(csv_header(report.dimension))]
            for row in report.rows:
                fields = [str(row.run_id), str(row.eval_index)]
                fields += [_fmt(v) for v in row.x]
                fields += [_fmt(row.y), _fmt(row.best_y), _fmt(row.regret), str(row.wall_ns)]
                lines.append(",".join(fields))
            path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        elif fmt == "json":
            doc = {
                "dimension": report.dimension,
                "config": {k: _json_safe(v) for k, v in _config_echo(report.config).items()},
                "seeds": list(report.seeds),
                "summary": [
                    {
                        "function": s.function,
                        "n_runs": s.n_runs,
                        "n_failed": s.n_failed,
                        "final_log_regret_mean": _json_safe(s.final_log_regret_mean),
                        "final_log_regret_std": _json_safe(s.final_log_regret_std),
                        "wall_s_mean": _json_safe(s.wall_s_mean),
                        "wall_s_std": _json_safe(s.wall_s_std),
                    }
                    for s in report.summaries
                ],
                "runs": [
                    {
                        "run_id": r.run_id,
                        "function": r.function,
                        "seed": r.seed,
                        "status": r.status,
                        "n_evals": r.n_evals,
                        "n_restarts": r.n_restarts,
                        "termination": r.termination,
                        "final_best": _json_safe(r.final_best),
                        "final_regret": _json_safe(r.final_regret),
                        "wall_ns_total": r.wall_ns_total,
                    }
                    for r in report.runs
                ],
                "rows": [
                    {
                        "run_id": row.run_id,
                        "eval_index": row.eval_index,
                        "x": [float(v) for v in row.x],
                        "y": _json_safe(row.y),
                        "best_y": _json_safe(row.best_y),
                        "regret": _json_safe(row.regret),
                        "wall_ns": row.wall_ns,
                    }
                    for row in report.rows
                ],
            }
            path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8", newline="\n")
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise IoFailure(f"cannot write report to {path}: {exc}") from exc


def read_report_csv(path) -> tuple[list[str], list[list[float]]]:
    """Parse a CSV report back into (header, numeric rows); used by tests."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.split("\n") if ln]
    header = lines[0].split(",")
    rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    return header, rows
