"""Command-line interface: single runs, benchmark batches, and self-tests.

Exit codes: 0 on success, 1 on a usage error (synopsis goes to stderr), 2 on a
runtime failure.  Writing a report also renders a companion figure next to the
delimited output unless ``--no-plot`` is given.
"""
from __future__ import annotations

import argparse
import math
import os
import shlex
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import selftest as selftest_checks
from .bench import (
    FUNCTION_NAMES,
    get_function,
    rows_from_result,
    run_benchmark,
    write_report,
    BenchReport,
    RunSummary,
    FunctionSummary,
)
from .optimizer import LabcatConfig, ObjectiveNonFinite, minimize
from .plots import render_bench_figure, render_trace_figure

DEFAULT_EVAL_TIMEOUT = 60.0


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def external_objective(command: str, x: np.ndarray, timeout: float = DEFAULT_EVAL_TIMEOUT) -> float:
    """Evaluate an external command as the objective.

    The point is written to the command's stdin as whitespace-separated
    decimals; the command must print one decimal number.  Spawn failures,
    timeouts, nonzero exits, and non-numeric or non-finite replies raise
    :class:`ObjectiveNonFinite`.
    """
    payload = " ".join(format(float(v), ".17g") for v in x) + "\n"
    try:
        proc = subprocess.run(
            shlex.split(command),
            input=payload,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise ObjectiveNonFinite(f"external objective failed: {exc}", x=x) from exc
    if proc.returncode != 0:
        raise ObjectiveNonFinite(
            f"external objective exited with {proc.returncode}: {proc.stderr.strip()}", x=x
        )
    reply = proc.stdout.strip().split()
    try:
        value = float(reply[-1])
    except (IndexError, ValueError):
        raise ObjectiveNonFinite(
            f"external objective printed no number: {proc.stdout!r}", x=x
        ) from None
    if not math.isfinite(value):
        raise ObjectiveNonFinite(f"external objective returned {value!r}", x=x)
    return value


def _parse_bounds(text: str, dim: int) -> np.ndarray:
    pairs = []
    for chunk in text.split(","):
        lo, _, hi = chunk.partition(":")
        try:
            pairs.append((float(lo), float(hi)))
        except ValueError:
            raise _UsageError(f"cannot parse bounds chunk {chunk!r}; expected lo:hi") from None
    if len(pairs) == 1 and dim > 1:
        pairs = pairs * dim
    if len(pairs) != dim:
        raise _UsageError(f"expected {dim} bound pairs, got {len(pairs)}")
    return np.array(pairs)


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("LABCAT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise _UsageError(f"LABCAT_SEED must be an integer, got {env!r}") from None
    return 0


def _config_from_args(args) -> LabcatConfig:
    return LabcatConfig(
        beta=args.beta,
        rho=args.rho,
        sigma_prior=args.sigma_prior,
        hyper_steps=args.hyper_steps,
        max_evals=args.budget,
        target_value=getattr(args, "target", None),
        seed=_resolve_seed(args),
        rotation_enabled=not args.no_rotation,
        uniform_lengthscale_prior=args.uniform_prior,
    )


def _add_common_options(sub):
    sub.add_argument("--budget", type=int, default=150, help="total objective evaluations")
    sub.add_argument("--seed", type=int, default=None, help="RNG seed (default: $LABCAT_SEED or 0)")
    sub.add_argument("--beta", type=float, default=None, help="trust-region half width (default 1/d clamped to [0.1, 1])")
    sub.add_argument("--rho", type=int, default=7, help="observation cache size factor")
    sub.add_argument("--sigma-prior", type=float, default=0.1, help="log length-scale prior std")
    sub.add_argument("--hyper-steps", type=int, default=1, help="length-scale update steps per iteration")
    sub.add_argument("--no-rotation", action="store_true", help="disable the principal-component rotation")
    sub.add_argument("--uniform-prior", action="store_true", help="drop the length-scale prior")
    sub.add_argument("--out", type=Path, default=None, help="output file for the trace/report")
    sub.add_argument("--format", choices=("csv", "json"), default="csv", help="output file format")
    sub.add_argument("--no-plot", action="store_true", help="skip the companion figure")


def _build_parser() -> _Parser:
    parser = _Parser(prog="labcat", description=__doc__.splitlines()[0])
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = commands.add_parser("run", help="optimize one objective instance")
    run.add_argument("--fn", choices=FUNCTION_NAMES, default=None, help="built-in test function")
    run.add_argument("--cmd", default=None, help="external objective command (reads x on stdin, prints y)")
    run.add_argument("--dim", type=int, default=2, help="problem dimension")
    run.add_argument("--bounds", default=None, help="lo:hi[,lo:hi...] for --cmd objectives (default -1:1)")
    run.add_argument("--target", type=float, default=None, help="stop when the best value reaches this")
    run.add_argument("--eval-timeout", type=float, default=DEFAULT_EVAL_TIMEOUT, help="per-evaluation timeout for --cmd")
    _add_common_options(run)

    bench = commands.add_parser("bench", help="run a benchmark batch")
    bench.add_argument("--fn", default="sphere", help="comma-separated test functions, or 'all'")
    bench.add_argument("--dim", type=int, default=2, help="problem dimension")
    bench.add_argument("--runs", type=int, default=50, help="independent runs per function")
    bench.add_argument("--jobs", type=int, default=1, help="worker threads for independent runs")
    _add_common_options(bench)

    commands.add_parser("selftest", help="run the built-in invariant checks")
    return parser


def _figure_path(out: Path) -> Path:
    return out.with_suffix(".png")


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    if (args.fn is None) == (args.cmd is None):
        raise _UsageError("exactly one of --fn or --cmd is required")

    if args.fn is not None:
        fn = get_function(args.fn, args.dim)
        bounds = fn.bounds
        objective = fn
        f_min = fn.f_min
        label = fn.name
    else:
        bounds = (
            _parse_bounds(args.bounds, args.dim)
            if args.bounds is not None
            else np.tile(np.array([-1.0, 1.0]), (args.dim, 1))
        )
        objective = lambda x: external_objective(args.cmd, x, args.eval_timeout)
        f_min = math.nan
        label = "external"

    config = config.resolve(bounds.shape[0])
    result = minimize(objective, bounds, config)

    print(f"function: {label}")
    print("best_x: " + " ".join(format(v, ".17g") for v in result.best_x))
    print(f"best_y: {result.best_y:.17g}")
    print(
        f"evals: {result.n_evals}  restarts: {result.n_restarts}  "
        f"termination: {result.termination.value}"
    )
    if args.out is not None:
        rows = rows_from_result(result, f_min)
        report = BenchReport(
            dimension=bounds.shape[0],
            rows=tuple(rows),
            runs=(
                RunSummary(
                    run_id=0,
                    function=label,
                    seed=config.seed,
                    status="ok",
                    n_evals=result.n_evals,
                    n_restarts=result.n_restarts,
                    termination=result.termination.value,
                    final_best=result.best_y,
                    final_regret=rows[-1].regret if rows else math.nan,
                    wall_ns_total=sum(r.wall_ns for r in rows),
                )
            ,),
            summaries=(),
            config=config,
            seeds=(config.seed,),
        )
        write_report(report, args.out, args.format)
        print(f"trace: {args.out}")
        if not args.no_plot:
            fig = _figure_path(args.out)
            render_trace_figure(rows, fig, title=label)
            print(f"figure: {fig}")
    return 0


def _cmd_bench(args) -> int:
    names = FUNCTION_NAMES if args.fn == "all" else tuple(s.strip() for s in args.fn.split(","))
    try:
        fns = [get_function(name, args.dim) for name in names]
    except KeyError as exc:
        raise _UsageError(str(exc)) from None
    config = _config_from_args(args).resolve(args.dim)
    report = run_benchmark(
        fns, config, n_runs=args.runs, budget=args.budget,
        base_seed=config.seed, jobs=args.jobs,
    )
    for summary in report.summaries:
        print(
            f"{summary.function}: log10 regret {summary.final_log_regret_mean:+.3f} "
            f"+/- {summary.final_log_regret_std:.3f} "
            f"({summary.n_runs - summary.n_failed}/{summary.n_runs} runs ok, "
            f"{summary.wall_s_mean:.3f} s/run)"
        )
    if args.out is not None:
        write_report(report, args.out, args.format)
        print(f"report: {args.out}")
        if not args.no_plot:
            fig = _figure_path(args.out)
            render_bench_figure(report, fig)
            print(f"figure: {fig}")
    return 0


def _cmd_selftest(args) -> int:
    failures = 0
    for name, ok, detail in selftest_checks.run_all():
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {name}"
        if detail:
            line += f" ({detail})"
        print(line)
        failures += 0 if ok else 1
    if failures:
        print(f"{failures} check(s) failed", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {"run": _cmd_run, "bench": _cmd_bench, "selftest": _cmd_selftest}[args.command]
        return handler(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except ObjectiveNonFinite as exc:
        print(f"objective failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure -> exit 2, per the CLI contract
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
