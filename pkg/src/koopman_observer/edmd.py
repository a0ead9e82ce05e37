"""Generator EDMD: data matrices, least-squares fit and remainder estimate."""

import warnings

import numpy as np

from .core import (Dictionary, GeneratorSurrogate, SampleSet, embed_generator,
                   numerical_rank, pseudoinverse)
from .exceptions import DataError, DegenerateInputError


class RankDeficiencyWarning(UserWarning):
    """The lifted data matrix ``X`` does not have full row rank."""


def build_data_matrices(dictionary: Dictionary, samples: SampleSet):
    """Lifted data ``X`` and generator data ``Y``, both ``N x d``.

    Column ``j`` of ``X`` is ``Phi_bar(x_j)``; column ``j`` of ``Y`` is the
    reduced part of ``grad Phi(x_j) @ xdot_j``.  The measured derivative
    stands in for the unknown vector field.
    """
    if samples.n != dictionary.n:
        raise DataError(f"samples have dimension {samples.n}, dictionary expects {dictionary.n}")
    X = dictionary.evaluate(samples.states)[:, 1:].T
    Y = dictionary.generator_values(samples.states, samples.derivatives)[:, 1:].T
    return np.ascontiguousarray(X), np.ascontiguousarray(Y)


def fit_generator(X, Y, rank_tol: float = 1e-10) -> GeneratorSurrogate:
    """Minimum-norm least-squares solution ``A = Y X^+``.

    A rank-deficient ``X`` still yields the minimum-norm minimiser; a
    :class:`RankDeficiencyWarning` is emitted and ``rank_X`` records it.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1] or X.shape[1] < 1:
        raise DataError(f"incompatible data matrices {X.shape} and {Y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise DataError("data matrices contain non-finite entries")
    A = Y @ pseudoinverse(X, rank_tol)
    rank = numerical_rank(X, rank_tol)
    if rank < X.shape[0]:
        warnings.warn(f"lifted data matrix has rank {rank} < {X.shape[0]}; "
                      "returning the minimum-norm solution", RankDeficiencyWarning, stacklevel=2)
    residual = float(np.linalg.norm(Y - A @ X, "fro"))
    return GeneratorSurrogate(A=A, full_form=embed_generator(A), residual_fro=residual, rank_X=rank)


def identify(dictionary: Dictionary, samples: SampleSet, rank_tol: float = 1e-10) -> GeneratorSurrogate:
    return fit_generator(*build_data_matrices(dictionary, samples), rank_tol=rank_tol)


def empirical_remainder_bound(dictionary: Dictionary, A, validation: SampleSet) -> float:
    """Largest conic ratio ``||Y_j - A X_j|| / ||X_j||`` over the validation set."""
    X, Y = build_data_matrices(dictionary, validation)
    norms = np.linalg.norm(X, axis=0)
    keep = norms > 0.0
    if not np.any(keep):
        raise DegenerateInputError("every validation sample lifts to the zero vector")
    resid = np.linalg.norm(Y[:, keep] - np.asarray(A) @ X[:, keep], axis=0)
    return float(np.max(resid / norms[keep]))
