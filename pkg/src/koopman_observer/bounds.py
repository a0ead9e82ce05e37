"""Sample-size requirement for the probabilistic EDMD error bound.

The L2 inner products over the sampling box are estimated by Monte Carlo
under the uniform measure, so the ``1/|X|`` normalisation is absorbed into
sample means.  All matrices are indexed over the full dictionary
``phi_0 .. phi_N``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core import Dictionary, SampleSet
from .exceptions import DataError, IllConditionedError, UnboundedRequirementError


@dataclass(frozen=True)
class BoundReport:
    c_r: float
    delta: float
    R1: np.ndarray
    R2: np.ndarray
    Sigma1: np.ndarray
    Sigma2: np.ndarray
    A_norm: float
    Cinv_norm: float
    c_tilde: float
    d0_real: float
    d0: int
    mc_points: int

    def satisfied_by(self, d: int) -> bool:
        return d >= self.d0


def _evaluations(dictionary: Dictionary, samples: SampleSet):
    if samples.n != dictionary.n:
        raise DataError(f"samples have dimension {samples.n}, dictionary expects {dictionary.n}")
    P = dictionary.evaluate(samples.states)
    G = dictionary.generator_values(samples.states, samples.derivatives)
    return P, G


def structure_matrices_from_values(P, G):
    """``R1[i, j] = mean(phi_i * L phi_j)`` and ``R2[i, j] = mean(phi_i * phi_j)``.

    ``P`` holds observable values and ``G`` generator values, both ``(d, N+1)``.
    """
    P = np.asarray(P, dtype=float)
    G = np.asarray(G, dtype=float)
    if P.shape[0] == 0:
        raise DataError("empty sample set")
    d = P.shape[0]
    R1 = P.T @ G / d
    R2 = P.T @ P / d
    return R1, 0.5 * (R2 + R2.T)


def variance_matrices_from_values(P, G):
    """Entrywise empirical variances of ``phi_i * L phi_j`` and ``phi_i * phi_j``.

    Returned as the squared quantities; cancellation below zero is clamped.
    """
    P = np.asarray(P, dtype=float)
    G = np.asarray(G, dtype=float)
    if P.shape[0] == 0:
        raise DataError("empty sample set")
    d = P.shape[0]
    P2 = P * P
    s1 = (P2.T @ (G * G)) / d - (P.T @ G / d) ** 2
    s2 = (P2.T @ P2) / d - (P.T @ P / d) ** 2
    return np.maximum(s1, 0.0), np.maximum(s2, 0.0)


def estimate_structure_matrices(dictionary: Dictionary, samples: SampleSet):
    return structure_matrices_from_values(*_evaluations(dictionary, samples))


def estimate_variance_matrices(dictionary: Dictionary, samples: SampleSet):
    return variance_matrices_from_values(*_evaluations(dictionary, samples))


def compute_ctilde(c_r: float, A_norm: float, Cinv_norm: float) -> float:
    if c_r == 0:
        raise UnboundedRequirementError("a zero error bound requires unbounded data")
    if c_r < 0 or A_norm <= 0 or Cinv_norm <= 0:
        raise ValueError("c_r, ||A|| and ||C^-1|| must all be positive")
    prod = A_norm * Cinv_norm
    return min(1.0, 1.0 / prod) * ((A_norm * c_r) / (2.0 * prod + c_r))


def required_data_real(N: int, delta: float, c_tilde: float, Sigma1_sq, Sigma2_sq) -> float:
    """Unrounded sample requirement; ``d0`` is its ceiling (floored at 1)."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if c_tilde == 0:
        raise UnboundedRequirementError("c_tilde = 0 gives an unbounded data requirement")
    if c_tilde < 0:
        raise ValueError("c_tilde must be positive")
    worst = max(float(np.sum(Sigma1_sq)), float(np.sum(Sigma2_sq)))
    return (N + 1) ** 2 / (c_tilde ** 2 * delta / 3.0) * worst


def required_data(N: int, delta: float, c_tilde: float, Sigma1_sq, Sigma2_sq) -> int:
    real = required_data_real(N, delta, c_tilde, Sigma1_sq, Sigma2_sq)
    if not math.isfinite(real):
        raise UnboundedRequirementError("data requirement overflowed")
    return max(1, math.ceil(real))


def build_bound_report(dictionary: Dictionary, samples: SampleSet, c_r: float, delta: float,
                       cond_tol: float = 1e-12) -> BoundReport:
    """Estimate every ingredient and the resulting ``d0``.

    ``||A||`` is taken as ``||R2^-1 R1||_2`` and ``||C^-1||`` as ``||R2^-1||_2``.
    """
    if c_r <= 0:
        if c_r == 0:
            raise UnboundedRequirementError("a zero error bound requires unbounded data")
        raise ValueError("c_r must be positive")
    P, G = _evaluations(dictionary, samples)
    R1, R2 = structure_matrices_from_values(P, G)
    S1, S2 = variance_matrices_from_values(P, G)
    eig = np.linalg.eigvalsh(R2)
    if eig[0] <= cond_tol * max(eig[-1], 1.0):
        raise IllConditionedError(
            f"dictionary Gram matrix is numerically singular (smallest eigenvalue {eig[0]:.3e})",
            float(eig[0]))
    R2inv = np.linalg.inv(R2)
    A_norm = float(np.linalg.norm(R2inv @ R1, 2))
    Cinv_norm = float(np.linalg.norm(R2inv, 2))
    if A_norm == 0.0:
        raise UnboundedRequirementError("compressed generator is zero; ||A|| = 0")
    c_tilde = compute_ctilde(c_r, A_norm, Cinv_norm)
    real = required_data_real(dictionary.N, delta, c_tilde, S1, S2)
    d0 = required_data(dictionary.N, delta, c_tilde, S1, S2)
    return BoundReport(c_r=float(c_r), delta=float(delta), R1=R1, R2=R2, Sigma1=S1, Sigma2=S2,
                       A_norm=A_norm, Cinv_norm=Cinv_norm, c_tilde=c_tilde, d0_real=real,
                       d0=d0, mc_points=samples.d)
