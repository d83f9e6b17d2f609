"""Drift-implicit Euler spectral-Galerkin time stepping.

One step advances the chain X by solving the strictly monotone implicit
equation

    (I + tau*Lambda) X' - tau * P_N F(X') = X + P_N G(X) dW

with damped Newton iteration, and advances the coupled stochastic
convolution W by one resolvent application of (W + noise).  The transform
Y = X - W then satisfies a pathwise (random) PDE recursion whose residual
is exposed as a consistency diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import (
    CoefficientModel,
    default_quadrature,
    validate_step_constraint,
)
from .noise import NoiseStream, PhiloxBlockSource, gaussian_increments
from .spectral import SpectralCoeffs, _coeff_array, basis_matrix, eigenvalues

__all__ = [
    "SchemeParams",
    "PathState",
    "StepDiagnostics",
    "PathResult",
    "NonConvergenceError",
    "SingularLinearSolveError",
    "implicit_solve",
    "dieg_step",
    "convolution_update",
    "random_pde_residual",
    "run_path",
    "run_paths_vectorized",
]


class NonConvergenceError(RuntimeError):
    """Newton iteration failed to reach the residual tolerance."""

    def __init__(self, residual: float, iterations: int, step: int | None = None):
        self.residual = residual
        self.iterations = iterations
        self.step = step
        at = "" if step is None else f" at step {step}"
        super().__init__(
            f"Newton failed{at}: residual {residual:.3e} after {iterations} iterations"
        )


class SingularLinearSolveError(RuntimeError):
    """Newton linear system singular; usually a violated step constraint."""


@dataclass(frozen=True)
class SchemeParams:
    """Everything fixing one DIEG discretization.

    quadrature=None resolves to the model's dealiasing floor at run time;
    noise_modes=None matches the Galerkin resolution N.
    """

    n_modes: int
    tau: float
    noise_modes: int | None = None
    quadrature: int | None = None
    newton_tol: float = 1e-10
    newton_max_iter: int = 50

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be >= 1, got {self.n_modes}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.noise_modes is not None and self.noise_modes < 1:
            raise ValueError("noise_modes must be >= 1")
        if self.newton_tol <= 0 or self.newton_max_iter < 1:
            raise ValueError("newton_tol must be positive, newton_max_iter >= 1")

    def resolved_noise_modes(self) -> int:
        return self.noise_modes if self.noise_modes is not None else self.n_modes

    def resolved_quadrature(self, model: CoefficientModel) -> int:
        floor = default_quadrature(self.n_modes, self.resolved_noise_modes(),
                                   model.constants)
        if self.quadrature is None:
            return floor
        if self.quadrature < floor:
            raise ValueError(
                f"quadrature Q={self.quadrature} below dealiasing floor {floor}"
            )
        return self.quadrature

    def validate(self, model: CoefficientModel) -> None:
        result = validate_step_constraint(model.constants, self.tau)
        if not result.ok:
            raise ValueError("; ".join(result.messages))


@dataclass
class PathState:
    """Coupled pair (X_j, W_j) with the path's noise stream.

    The convolution w starts at zero (its defining sum is empty at j = 0).
    """

    x: np.ndarray
    w: np.ndarray
    step: int
    stream: NoiseStream

    def __post_init__(self):
        self.x = _coeff_array(self.x)
        self.w = _coeff_array(self.w)
        if self.x.shape != self.w.shape:
            raise ValueError("x and w must share n_modes")
        if self.step < 0:
            raise ValueError("step must be nonnegative")

    @classmethod
    def initial(cls, x0, stream: NoiseStream) -> "PathState":
        arr = _coeff_array(x0)
        return cls(x=arr, w=np.zeros_like(arr), step=0, stream=stream)


@dataclass(frozen=True)
class StepDiagnostics:
    newton_iters: int
    final_residual: float
    c0: float


@dataclass
class PathResult:
    """Per-path outcome: final state plus solver diagnostics summary."""

    state: PathState
    n_steps_done: int
    max_newton_iters: int = 0
    max_residual: float = 0.0
    error: Exception | None = None


class _Workspace:
    """Precomputed quantities for repeated stepping of one (params, model)."""

    def __init__(self, params: SchemeParams, model: CoefficientModel):
        params.validate(model)
        self.params = params
        self.model = model
        self.n = params.n_modes
        self.n_w = params.resolved_noise_modes()
        self.q = params.resolved_quadrature(model)
        self.tau = params.tau
        lam = eigenvalues(self.n)
        self.one_plus = 1.0 + self.tau * lam
        self.res_factors = 1.0 / self.one_plus
        self.basis = basis_matrix(self.n, self.q)
        self.basis_w = (self.basis if self.n_w == self.n
                        else basis_matrix(self.n_w, self.q))
        self.weight = 1.0 / (self.q + 1)
        self.c0 = 1.0 - (model.constants.K1 - lam[0]) * self.tau
        self.tol = params.newton_tol
        self.max_iter = params.newton_max_iter

    def drift_proj(self, x: np.ndarray) -> np.ndarray:
        return self.basis.T @ self.model.drift(self.basis @ x) * self.weight

    def implicit_residual(self, x: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        return self.one_plus * x - self.tau * self.drift_proj(x) - rhs

    def newton_matrix(self, x: np.ndarray) -> np.ndarray:
        fp = self.model.drift_deriv(self.basis @ x)
        a = (self.basis * fp[:, None]).T @ self.basis * (-self.tau * self.weight)
        a[np.diag_indices(self.n)] += self.one_plus
        return a

    def noise_increment(self, x: np.ndarray, dbeta: np.ndarray) -> np.ndarray:
        gu = self.model.diffusion(self.basis @ x)
        return (self.basis * gu[:, None]).T @ (self.basis_w @ dbeta) * self.weight

    def solve(self, rhs: np.ndarray, guess: np.ndarray) -> tuple[np.ndarray, StepDiagnostics]:
        x = guess.copy()
        res = self.implicit_residual(x, rhs)
        res_norm = float(np.linalg.norm(res))
        iters = 0
        while res_norm > self.tol:
            if iters >= self.max_iter:
                raise NonConvergenceError(res_norm, iters)
            try:
                delta = np.linalg.solve(self.newton_matrix(x), -res)
            except np.linalg.LinAlgError as exc:
                raise SingularLinearSolveError(
                    "singular Newton system; check (K1 - lambda_1) tau < 1"
                ) from exc
            # Damped update: halve the step until the residual decreases.
            scale = 1.0
            for _ in range(40):
                x_new = x + scale * delta
                res_new = self.implicit_residual(x_new, rhs)
                new_norm = float(np.linalg.norm(res_new))
                if new_norm < res_norm:
                    break
                scale *= 0.5
            else:
                raise NonConvergenceError(res_norm, iters + 1)
            x, res, res_norm = x_new, res_new, new_norm
            iters += 1
        return x, StepDiagnostics(newton_iters=iters, final_residual=res_norm,
                                  c0=self.c0)


def implicit_solve(rhs, params: SchemeParams, model: CoefficientModel,
                   guess=None) -> tuple[SpectralCoeffs, StepDiagnostics]:
    """Solve F_hat(x) = rhs, F_hat(x) = (I + tau*Lambda) x - tau P_N F(x).

    The solution is unique whenever (K1 - lambda_1) tau < 1 (strict
    monotonicity of F_hat).
    """
    ws = _Workspace(params, model)
    rhs_arr = _coeff_array(rhs)
    guess_arr = rhs_arr if guess is None else _coeff_array(guess)
    x, diag = ws.solve(rhs_arr, guess_arr)
    return SpectralCoeffs(x), diag


def _step_arrays(x: np.ndarray, w: np.ndarray, stream: NoiseStream,
                 ws: _Workspace) -> tuple[np.ndarray, np.ndarray, StepDiagnostics]:
    dbeta = gaussian_increments(stream, ws.n_w, ws.tau)
    noise = ws.noise_increment(x, dbeta)
    x_new, diag = ws.solve(x + noise, x)
    w_new = ws.res_factors * (w + noise)
    return x_new, w_new, diag


def dieg_step(state: PathState, params: SchemeParams,
              model: CoefficientModel) -> tuple[PathState, StepDiagnostics]:
    """Advance one DIEG step; chain and convolution consume the same increments."""
    ws = _Workspace(params, model)
    try:
        x_new, w_new, diag = _step_arrays(state.x, state.w, state.stream, ws)
    except NonConvergenceError as exc:
        raise NonConvergenceError(exc.residual, exc.iterations, step=state.step) from exc
    new_state = PathState(x=x_new, w=w_new, step=state.step + 1,
                          stream=state.stream)
    return new_state, diag


def convolution_update(w, noise, params: SchemeParams) -> SpectralCoeffs:
    """One recursion of the discrete stochastic convolution: S_{N,tau} (w + noise)."""
    w_arr = _coeff_array(w)
    noise_arr = _coeff_array(noise)
    if w_arr.shape != noise_arr.shape:
        raise ValueError("w and noise must share n_modes")
    factors = 1.0 / (1.0 + params.tau * eigenvalues(w_arr.size))
    return SpectralCoeffs(factors * (w_arr + noise_arr))


def random_pde_residual(traj_x: Sequence, traj_w: Sequence,
                        params: SchemeParams, model: CoefficientModel) -> np.ndarray:
    """Residuals of the transformed recursion with Y = X - W.

    For each step j returns || (I + tau*Lambda) Y_{j+1} - Y_j
    - tau P_N F(X_{j+1}) ||; the transform is algebraically exact, so the
    values are bounded by a small multiple of the Newton tolerance.
    """
    if len(traj_x) != len(traj_w):
        raise ValueError("trajectories must have equal length")
    if len(traj_x) < 2:
        return np.zeros(0)
    ws = _Workspace(params, model)
    out = np.empty(len(traj_x) - 1)
    y_prev = _coeff_array(traj_x[0]) - _coeff_array(traj_w[0])
    for j in range(1, len(traj_x)):
        x_j = _coeff_array(traj_x[j])
        y_j = x_j - _coeff_array(traj_w[j])
        out[j - 1] = np.linalg.norm(
            ws.one_plus * y_j - y_prev - ws.tau * ws.drift_proj(x_j)
        )
        y_prev = y_j
    return out


class _BatchWorkspace(_Workspace):
    """Vectorized stepping of many independent paths at once.

    Numerically equivalent to stepping each path with _Workspace (up to
    BLAS kernel rounding); increments per (path, step) are identical to the
    per-path streams, so the reduction is independent of batching.
    """

    def drift_proj_batch(self, x: np.ndarray) -> np.ndarray:
        return self.model.drift(x @ self.basis.T) @ self.basis * self.weight

    def residual_batch(self, x: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        return self.one_plus * x - self.tau * self.drift_proj_batch(x) - rhs

    def newton_matrix_batch(self, x: np.ndarray) -> np.ndarray:
        fp = self.model.drift_deriv(x @ self.basis.T)
        a = np.einsum("pq,qn,qm->pnm", fp, self.basis, self.basis,
                      optimize=True) * (-self.tau * self.weight)
        idx = np.arange(self.n)
        a[:, idx, idx] += self.one_plus
        return a

    def noise_increment_batch(self, x: np.ndarray, dbeta: np.ndarray) -> np.ndarray:
        gu = self.model.diffusion(x @ self.basis.T)
        return (gu * (dbeta @ self.basis_w.T)) @ self.basis * self.weight

    def solve_batch(self, rhs: np.ndarray, guess: np.ndarray,
                    step: int) -> tuple[np.ndarray, int, float]:
        x = guess.copy()
        res = self.residual_batch(x, rhs)
        rnorm = np.linalg.norm(res, axis=1)
        iters = 0
        while True:
            active = rnorm > self.tol
            if not active.any():
                break
            if iters >= self.max_iter:
                raise NonConvergenceError(float(rnorm.max()), iters, step=step)
            try:
                delta = np.linalg.solve(self.newton_matrix_batch(x[active]),
                                        -res[active, :, None])[:, :, 0]
            except np.linalg.LinAlgError as exc:
                raise SingularLinearSolveError(
                    "singular Newton system; check (K1 - lambda_1) tau < 1"
                ) from exc
            x_act = x[active]
            rhs_act = rhs[active]
            rn_act = rnorm[active]
            scale = np.ones(len(x_act))
            for _ in range(40):
                x_try = x_act + scale[:, None] * delta
                res_try = self.residual_batch(x_try, rhs_act)
                rn_try = np.linalg.norm(res_try, axis=1)
                stuck = rn_try >= rn_act
                if not stuck.any():
                    break
                scale[stuck] *= 0.5
            else:
                raise NonConvergenceError(float(rn_act.max()), iters + 1, step=step)
            x[active] = x_try
            res[active] = res_try
            rnorm[active] = rn_try
            iters += 1
        return x, iters, float(rnorm.max())


BatchObserver = Callable[[int, np.ndarray, np.ndarray], None]


def run_paths_vectorized(x0, n_steps: int, params: SchemeParams,
                         model: CoefficientModel, master_seed: int,
                         n_paths: int,
                         observers: Sequence[BatchObserver] = (),
                         first_path_index: int = 0) -> tuple[int, float]:
    """Advance n_paths independent paths in lockstep.

    Observers are called as observer(step, X, W) with (n_paths, N) arrays
    whose row p corresponds to path index first_path_index + p. Increments
    match the per-path NoiseStream blocks exactly, so the result is a pure
    function of (master_seed, config) regardless of batching.

    Returns (max Newton iterations over steps, max final residual).
    """
    if n_steps < 0 or n_paths < 1:
        raise ValueError("n_steps must be >= 0 and n_paths >= 1")
    ws = _BatchWorkspace(params, model)
    x0_arr = _coeff_array(x0)
    if x0_arr.ndim == 1:
        x = np.tile(x0_arr, (n_paths, 1))
    else:
        x = x0_arr.copy()
        if x.shape != (n_paths, ws.n):
            raise ValueError(f"x0 must have shape ({n_paths}, {ws.n})")
    if x.shape[1] != ws.n:
        raise ValueError(f"x0 has {x.shape[1]} modes, scheme expects {ws.n}")
    w = np.zeros_like(x)
    source = PhiloxBlockSource(master_seed)
    dbeta = np.empty((n_paths, ws.n_w))
    sqrt_tau = math.sqrt(ws.tau)
    for obs in observers:
        obs(0, x, w)
    max_iters = 0
    max_res = 0.0
    for j in range(n_steps):
        for p in range(n_paths):
            dbeta[p] = source.normals(first_path_index + p, j, ws.n_w)
        dbeta *= sqrt_tau
        noise = ws.noise_increment_batch(x, dbeta)
        x, iters, res = ws.solve_batch(x + noise, x, step=j)
        w = ws.res_factors * (w + noise)
        max_iters = max(max_iters, iters)
        max_res = max(max_res, res)
        for obs in observers:
            obs(j + 1, x, w)
    return max_iters, max_res


Observer = Callable[[int, np.ndarray, np.ndarray], None]


def run_path(x0, n_steps: int, params: SchemeParams, model: CoefficientModel,
             stream: NoiseStream, observers: Sequence[Observer] = ()) -> PathResult:
    """Iterate the scheme n_steps times from x0 with the given stream.

    Observers are called as observer(step, x, w) for every step including
    the initial one; they accumulate functionals and norms in-stream so full
    trajectories need not be materialized.  On failure the partial result is
    preserved with the error attached.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be nonnegative")
    ws = _Workspace(params, model)
    x = _coeff_array(x0).copy()
    if x.size != ws.n:
        raise ValueError(f"x0 has {x.size} modes, scheme expects {ws.n}")
    w = np.zeros_like(x)
    result = PathResult(state=PathState(x=x, w=w, step=0, stream=stream),
                        n_steps_done=0)
    for obs in observers:
        obs(0, x, w)
    steps_done = 0
    max_iters = 0
    max_res = 0.0
    for j in range(n_steps):
        try:
            x, w, diag = _step_arrays(x, w, stream, ws)
        except (NonConvergenceError, SingularLinearSolveError) as exc:
            if isinstance(exc, NonConvergenceError):
                exc.step = j
            result.error = exc
            break
        steps_done = j + 1
        if diag.newton_iters > max_iters:
            max_iters = diag.newton_iters
        if diag.final_residual > max_res:
            max_res = diag.final_residual
        for obs in observers:
            obs(j + 1, x, w)
    result.state = PathState(x=x, w=w, step=steps_done, stream=stream)
    result.n_steps_done = steps_done
    result.max_newton_iters = max_iters
    result.max_residual = max_res
    return result
