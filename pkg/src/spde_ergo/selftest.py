"""Fast built-in invariant suites for the `selftest` subcommand.

Each suite is a pure check that runs in well under a second and guards one
structural property: transform exactness, geometric-sum closed form,
strict monotonicity of the implicit operator, Newton uniqueness, Jacobian
consistency, and stream determinism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import allen_cahn_model, nemytskii_drift, nemytskii_jacobian
from .noise import NoiseStream
from .scheme import SchemeParams, implicit_solve, run_path
from .spectral import analyze, eigenvalues, geometric_decay_sum, synthesize

__all__ = ["SuiteResult", "run_selftest"]


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str


def _suite_parseval(rng) -> SuiteResult:
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 16))
        q = int(rng.integers(n, 4 * n + 8))
        c = rng.standard_normal(n)
        back = analyze(synthesize(c, q), n).coeffs
        worst = max(worst, float(np.max(np.abs(back - c))))
    return SuiteResult("parseval_roundtrip", worst <= 1e-12,
                       f"max roundtrip error {worst:.3e}")


def _suite_geometric_sum(rng) -> SuiteResult:
    worst = 0.0
    for _ in range(100):
        lam = float(rng.uniform(0.5, 2000.0))
        tau = float(rng.uniform(0.001, 0.9))
        j = int(rng.integers(1, 1001))
        r = (1.0 + tau * lam) ** -2
        brute = float(np.sum(r ** np.arange(1, j + 1)))
        closed = geometric_decay_sum(lam, tau, j)
        worst = max(worst, abs(closed - brute) / brute)
    return SuiteResult("geometric_sum", worst <= 1e-12,
                       f"max relative error {worst:.3e}")


def _paper_setup():
    model = allen_cahn_model(0.5)
    params = SchemeParams(n_modes=10, tau=0.05)
    return model, params


def _hat_f(x, params, model):
    lam = eigenvalues(x.size)
    q = params.resolved_quadrature(model)
    return (1.0 + params.tau * lam) * x - params.tau * nemytskii_drift(
        x, model, q).coeffs


def _suite_monotonicity(rng) -> SuiteResult:
    model, params = _paper_setup()
    c0 = 1.0 - (model.constants.K1 - eigenvalues(1)[0]) * params.tau
    worst_ip = math.inf
    worst_exp = math.inf
    for _ in range(1000):
        x = rng.standard_normal(params.n_modes)
        y = rng.standard_normal(params.n_modes)
        d = x - y
        fd = _hat_f(x, params, model) - _hat_f(y, params, model)
        worst_ip = min(worst_ip, float(d @ fd) - c0 * float(d @ d))
        worst_exp = min(worst_exp,
                        float(np.linalg.norm(fd))
                        - c0 * float(np.linalg.norm(d)))
    ok = worst_ip >= -1e-8 and worst_exp >= -1e-8
    return SuiteResult("strict_monotonicity", ok,
                       f"min margins: inner product {worst_ip:.3e}, "
                       f"expansion {worst_exp:.3e}")


def _suite_newton_uniqueness(rng) -> SuiteResult:
    model, params = _paper_setup()
    worst = 0.0
    for _ in range(20):
        rhs = rng.standard_normal(params.n_modes)
        a, _ = implicit_solve(rhs, params, model, guess=rng.standard_normal(10))
        b, _ = implicit_solve(rhs, params, model, guess=rng.standard_normal(10))
        worst = max(worst, float(np.max(np.abs(a.coeffs - b.coeffs))))
    return SuiteResult("newton_uniqueness", worst <= 1e-8,
                       f"max solution spread {worst:.3e}")


def _suite_jacobian_fd(rng) -> SuiteResult:
    model, params = _paper_setup()
    q = params.resolved_quadrature(model)
    worst = 0.0
    h = 1e-6
    for _ in range(10):
        x = rng.standard_normal(params.n_modes)
        jac = nemytskii_jacobian(x, model, q)
        scale = np.max(np.abs(jac)) + 1.0
        for m in range(params.n_modes):
            e = np.zeros(params.n_modes)
            e[m] = h
            fd = (nemytskii_drift(x + e, model, q).coeffs
                  - nemytskii_drift(x - e, model, q).coeffs) / (2 * h)
            worst = max(worst, float(np.max(np.abs(fd - jac[:, m]))) / scale)
    return SuiteResult("jacobian_fd", worst <= 1e-6,
                       f"max relative FD mismatch {worst:.3e}")


def _suite_cubic_projection(rng) -> SuiteResult:
    # for f = 4(u - u^3) and x = a e_1 the projection has the closed form
    # (4a - 6a^3, 0, 2a^3, 0), from int sin^4 = 3/8, int sin^3 sin(3.) = -1/8
    model, _ = _paper_setup()
    worst = 0.0
    for _ in range(20):
        a = float(rng.uniform(-2.0, 2.0))
        c = np.array([a, 0.0, 0.0, 0.0])
        out = nemytskii_drift(c, model, 16).coeffs
        expected = np.array([4 * a - 6 * a**3, 0.0, 2 * a**3, 0.0])
        worst = max(worst, float(np.max(np.abs(out - expected))))
    return SuiteResult("cubic_projection", worst <= 1e-10,
                       f"max deviation from closed form {worst:.3e}")


def _suite_determinism(rng) -> SuiteResult:
    model, params = _paper_setup()
    x0 = rng.standard_normal(params.n_modes) * 0.3
    runs = []
    for _ in range(2):
        stream = NoiseStream(master_seed=12345, path_index=7)
        res = run_path(x0, 50, params, model, stream)
        runs.append((res.state.x.copy(), res.state.w.copy()))
    same = (np.array_equal(runs[0][0], runs[1][0])
            and np.array_equal(runs[0][1], runs[1][1]))
    return SuiteResult("determinism", same,
                       "bit-identical replay" if same else "replay mismatch")


def run_selftest(seed: int = 0) -> list[SuiteResult]:
    """Run every fast invariant suite with a fixed sampling seed."""
    suites = [
        _suite_parseval,
        _suite_geometric_sum,
        _suite_monotonicity,
        _suite_newton_uniqueness,
        _suite_jacobian_fd,
        _suite_cubic_projection,
        _suite_determinism,
    ]
    return [suite(np.random.default_rng(seed + i))
            for i, suite in enumerate(suites)]
