"""Built-in invariant checks behind the ``selftest`` CLI subcommand.

A compact subset of the full test suite that can run in an installed
environment: derivative checks against finite differences, transform update
identities, the closed-form expected-improvement value, default consistency
between the CLI and the library, and run determinism.
"""
from __future__ import annotations

import math

import numpy as np

from .acquisition import _ei_values
from .bench import get_function
from .gp import fit, likelihood_derivatives, log_likelihood
from .optimizer import LabcatConfig, minimize
from .transform import init_from_bounds, normalize_outputs, recenter, rescale, rotate


def _random_gp(rng, n, d):
    inputs = rng.normal(scale=1.5, size=(d, n))
    targets = rng.normal(size=n)
    ell = np.exp(rng.uniform(-0.5, 0.5, size=d))
    return fit(inputs, targets, ell)


def check_kernel_value() -> tuple[bool, str]:
    from .gp import KernelParams, kernel_se_ard

    params = KernelParams(np.array([1.0, 1.0]), 1.0, 0.0)
    value = kernel_se_ard(np.array([1.0, 0.0]), np.array([0.0, 0.0]), params)
    err = abs(value - math.exp(-0.5))
    return err < 1e-12, f"|err|={err:.2e}"


def check_derivatives() -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    h = 1e-5
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(3, 8))
        d = int(rng.integers(1, 4))
        gp = _random_gp(rng, n, d)
        derivs = likelihood_derivatives(gp, 0.1)
        log_ell = np.log(gp.params.lengthscales)

        def ll_at(log_ell_vec):
            trial = fit(
                gp.inputs,
                gp.targets,
                np.exp(log_ell_vec),
                signal_variance=gp.params.signal_variance,
                noise_variance=gp.params.noise_variance,
                mean=gp.mean_const,
            )
            return log_likelihood(trial, 0.1)

        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            fd = (ll_at(log_ell + e) - ll_at(log_ell - e)) / (2 * h)
            denom = max(1.0, abs(derivs.jacobian[i]))
            worst = max(worst, abs(fd - derivs.jacobian[i]) / denom)
    return worst < 1e-4, f"max rel err={worst:.2e}"


def check_transform_identities() -> tuple[bool, str]:
    rng = np.random.default_rng(11)
    d, n = 3, 12
    bounds = np.column_stack([-rng.uniform(1, 5, d), rng.uniform(1, 5, d)])
    x0 = rng.uniform(bounds[:, 0][:, None], bounds[:, 1][:, None], size=(d, n))
    y0 = rng.normal(size=n)
    obs, state = init_from_bounds(x0, y0, bounds)
    original = state.to_objective_batch(obs.inputs)
    worst = 0.0
    for _ in range(200):
        normalize_outputs(state, obs)
        recenter(state, obs)
        rotate(state, obs)
        rescale(state, obs, np.exp(rng.uniform(-0.2, 0.2, d)))
        recon = state.to_objective_batch(obs.inputs)
        scale = max(1.0, float(np.max(np.abs(original))))
        worst = max(worst, float(np.max(np.abs(recon - original))) / scale)
        worst = max(worst, state.orthogonality_drift())
    return worst < 1e-8, f"max err={worst:.2e}"


def check_ei_closed_form() -> tuple[bool, str]:
    ei = float(_ei_values(np.array([0.0]), np.array([1.0]))[0])
    err = abs(ei - 1.0 / math.sqrt(2 * math.pi))
    return err < 1e-12, f"|err|={err:.2e}"


def check_cli_defaults() -> tuple[bool, str]:
    from .cli import _build_parser

    parser = _build_parser()
    args = parser.parse_args(["run", "--fn", "sphere"])
    config = LabcatConfig()
    pairs = [
        (args.rho, config.rho),
        (args.sigma_prior, config.sigma_prior),
        (args.hyper_steps, config.hyper_steps),
        (args.budget, config.max_evals),
        (args.beta, config.beta),
        (not args.no_rotation, config.rotation_enabled),
        (args.uniform_prior, config.uniform_lengthscale_prior),
    ]
    ok = all(a == b for a, b in pairs)
    return ok, "" if ok else f"mismatch: {pairs}"


def check_determinism() -> tuple[bool, str]:
    fn = get_function("sphere", 2)
    config = LabcatConfig(max_evals=40, seed=20240605)
    first = minimize(fn, fn.bounds, config)
    second = minimize(fn, fn.bounds, config)
    same = all(
        np.array_equal(a.x, b.x) and a.y == b.y and a.best_y == b.best_y
        for a, b in zip(first.trace, second.trace)
    ) and len(first.trace) == len(second.trace)
    return same, ""


def run_all():
    checks = [
        ("kernel closed form", check_kernel_value),
        ("likelihood derivatives vs finite differences", check_derivatives),
        ("transform update identities", check_transform_identities),
        ("expected improvement closed form", check_ei_closed_form),
        ("CLI defaults equal library defaults", check_cli_defaults),
        ("run determinism", check_determinism),
    ]
    results = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results
