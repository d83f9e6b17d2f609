"""Dirichlet sine eigenbasis on (0,1): eigenvalues, transforms, norms, resolvent.

States live in the span of the first N eigenvectors of the Dirichlet
Laplacian, e_k(xi) = sqrt(2) sin(k pi xi) with eigenvalue lambda_k = (k pi)^2.
Physical-space evaluation uses the uniform interior grid xi_q = q/(Q+1),
q = 1..Q, with equal weights 1/(Q+1); discrete sine orthogonality makes
analysis exact for any function whose sine bandwidth is at most Q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "SpectralCoeffs",
    "PhysicalGrid",
    "eigenvalue",
    "eigenvalues",
    "basis_eval",
    "basis_matrix",
    "grid_nodes",
    "synthesize",
    "analyze",
    "sobolev_norm",
    "resolvent_apply",
    "resolvent_factors",
    "geometric_decay_sum",
]


@dataclass(frozen=True)
class SpectralCoeffs:
    """Coefficients c_k of x = sum_k c_k e_k in the orthonormal sine basis."""

    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("coeffs must be a non-empty 1D array")
        if not np.all(np.isfinite(arr)):
            raise ValueError("coeffs must be finite")
        object.__setattr__(self, "coeffs", arr)

    @property
    def n_modes(self) -> int:
        return self.coeffs.size

    def norm(self) -> float:
        """L2 norm via Parseval."""
        return float(np.linalg.norm(self.coeffs))


@dataclass(frozen=True)
class PhysicalGrid:
    """Point values at the interior nodes xi_q = q/(Q+1), q = 1..Q."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("values must be a non-empty 1D array")
        object.__setattr__(self, "values", arr)

    @property
    def q_nodes(self) -> int:
        return self.values.size


def _coeff_array(c) -> np.ndarray:
    if isinstance(c, SpectralCoeffs):
        return c.coeffs
    return np.asarray(c, dtype=float)


def _value_array(v) -> np.ndarray:
    if isinstance(v, PhysicalGrid):
        return v.values
    return np.asarray(v, dtype=float)


def eigenvalue(k: int) -> float:
    """Eigenvalue lambda_k = (k pi)^2 of the negative Dirichlet Laplacian on (0,1)."""
    if k < 1:
        raise ValueError(f"mode index must be >= 1, got {k}")
    return (k * math.pi) ** 2


def eigenvalues(n_modes: int) -> np.ndarray:
    """First n_modes eigenvalues as an array."""
    if n_modes < 1:
        raise ValueError(f"n_modes must be >= 1, got {n_modes}")
    k = np.arange(1, n_modes + 1)
    return (k * math.pi) ** 2


def basis_eval(k: int, xi: float) -> float:
    """Evaluate the orthonormal eigenvector e_k(xi) = sqrt(2) sin(k pi xi)."""
    if k < 1:
        raise ValueError(f"mode index must be >= 1, got {k}")
    if not 0.0 < xi < 1.0:
        raise ValueError(f"xi must lie in (0,1), got {xi}")
    return math.sqrt(2.0) * math.sin(k * math.pi * xi)


def grid_nodes(q_nodes: int) -> np.ndarray:
    """Interior nodes xi_q = q/(Q+1), q = 1..Q."""
    if q_nodes < 1:
        raise ValueError(f"q_nodes must be >= 1, got {q_nodes}")
    return np.arange(1, q_nodes + 1) / (q_nodes + 1)


@lru_cache(maxsize=64)
def _basis_matrix_cached(n_modes: int, q_nodes: int) -> np.ndarray:
    xi = grid_nodes(q_nodes)
    k = np.arange(1, n_modes + 1)
    mat = math.sqrt(2.0) * np.sin(np.pi * np.outer(xi, k))
    mat.setflags(write=False)
    return mat

def basis_matrix(n_modes: int, q_nodes: int) -> np.ndarray:
    """(Q x N) matrix E with E[q,k] = e_{k+1}(xi_{q+1}); read-only, cached."""
    if n_modes < 1 or q_nodes < 1:
        raise ValueError("n_modes and q_nodes must be >= 1")
    return _basis_matrix_cached(n_modes, q_nodes)


def synthesize(c, q_nodes: int) -> PhysicalGrid:
    """Evaluate the expansion sum_k c_k e_k at the Q interior nodes.

    Requires Q >= N so the grid resolves every retained mode.
    """
    arr = _coeff_array(c)
    if q_nodes < arr.size:
        raise ValueError(f"Q={q_nodes} < N={arr.size} loses information")
    return PhysicalGrid(basis_matrix(arr.size, q_nodes) @ arr)


def analyze(v, n_modes: int) -> SpectralCoeffs:
    """Galerkin coefficients c_k = (1/(Q+1)) sum_q values[q] e_k(xi_q).

    Exact for any function in the sine span of bandwidth <= Q, by discrete
    sine orthogonality on the uniform interior grid.
    """
    arr = _value_array(v)
    q_nodes = arr.size
    if n_modes > q_nodes:
        raise ValueError(f"N={n_modes} > Q={q_nodes} is under-resolved")
    mat = basis_matrix(n_modes, q_nodes)
    return SpectralCoeffs(mat.T @ arr / (q_nodes + 1))


def sobolev_norm(c, beta: float) -> float:
    """Fractional Sobolev norm (sum_k lambda_k^beta c_k^2)^(1/2); beta=0 is L2."""
    arr = _coeff_array(c)
    lam = eigenvalues(arr.size)
    return float(np.sqrt(np.sum(lam**beta * arr**2)))


def resolvent_factors(n_modes: int, tau: float) -> np.ndarray:
    """Diagonal entries 1/(1 + tau*lambda_k) of the one-step resolvent."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return 1.0 / (1.0 + tau * eigenvalues(n_modes))


def resolvent_apply(c, tau: float) -> SpectralCoeffs:
    """Apply S_{N,tau} = (I - tau*Laplacian_N)^(-1): c_k -> c_k/(1 + tau*lambda_k)."""
    arr = _coeff_array(c)
    return SpectralCoeffs(arr * resolvent_factors(arr.size, tau))


def geometric_decay_sum(lam: float, tau: float, j) -> float:
    """Sum_{i=0}^{j-1} (1 + tau*lam)^(-2(j-i)) in closed form.

    With r = 1/(1 + tau*lam) the sum equals r^2 (1 - r^(2j)) / (1 - r^2).
    Pass j = math.inf (or None) for the limit 1/(tau*lam*(2 + tau*lam)).
    """
    if lam <= 0 or tau <= 0:
        raise ValueError("lam and tau must be positive")
    limit = 1.0 / (tau * lam * (2.0 + tau * lam))
    if j is None or j == math.inf:
        return limit
    j = int(j)
    if j < 1:
        raise ValueError(f"j must be >= 1 or infinite, got {j}")
    r2 = 1.0 / (1.0 + tau * lam) ** 2
    return limit * (1.0 - r2**j)
