"""Dictionaries of observables, lifting, and shared dense linear algebra.

A :class:`Dictionary` holds the ordered observables ``phi_0 .. phi_N`` with
``phi_0 = 1`` and ``phi_k = x_k`` for ``k = 1..n``.  Every observable is
vectorised: it maps a ``(d, n)`` array of states to a ``(d,)`` array, and its
gradient maps ``(d, n)`` to ``(d, n)``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import DataError, LiftingError

ArrayFunc = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Observable:
    """Scalar observable with an analytic gradient."""

    label: str
    func: ArrayFunc
    grad: ArrayFunc


def constant_observable(n: int) -> Observable:
    return Observable(
        "1",
        lambda X: np.ones(X.shape[0]),
        lambda X: np.zeros((X.shape[0], n)),
    )


def coordinate_observable(n: int, k: int) -> Observable:
    """Observable ``x_{k+1}`` (``k`` is zero based)."""
    unit = np.zeros(n)
    unit[k] = 1.0
    return Observable(
        f"x{k + 1}",
        lambda X: X[:, k].copy(),
        lambda X: np.broadcast_to(unit, X.shape).copy(),
    )


def monomial_observable(exponents: Sequence[int]) -> Observable:
    """Monomial ``prod_i x_i**e_i`` with its exact gradient."""
    exps = np.asarray(exponents, dtype=int)
    if exps.ndim != 1 or np.any(exps < 0) or exps.sum() == 0:
        raise ValueError(f"invalid monomial exponents {tuple(exponents)}")
    n = exps.size
    parts = []
    for i, e in enumerate(exps):
        if e == 1:
            parts.append(f"x{i + 1}")
        elif e > 1:
            parts.append(f"x{i + 1}^{e}")
    label = "*".join(parts)

    def func(X):
        return np.prod(X ** exps, axis=1)

    def grad(X):
        out = np.zeros_like(X, dtype=float)
        for i in range(n):
            if exps[i] == 0:
                continue
            lowered = exps.copy()
            lowered[i] -= 1
            out[:, i] = exps[i] * np.prod(X ** lowered, axis=1)
        return out

    return Observable(label, func, grad)


class Dictionary:
    """Ordered dictionary ``[1, x_1..x_n, phi_{n+1}..phi_N]``.

    Parameters
    ----------
    n : int
        State dimension.
    extra : sequence of Observable
        Observables ``phi_{n+1}..phi_N``.  Each must vanish at the origin.
    name : str
        Catalog name used when the dictionary is serialised.
    spec : dict, optional
        Parameters needed to rebuild the dictionary from the catalog.
    """

    def __init__(self, n: int, extra: Sequence[Observable] = (), name: str = "custom",
                 spec: Optional[dict] = None):
        if n < 1:
            raise ValueError("state dimension must be at least 1")
        self.n = int(n)
        self.name = name
        self.spec = dict(spec or {})
        obs = [constant_observable(n)] + [coordinate_observable(n, k) for k in range(n)]
        obs.extend(extra)
        self.observables = tuple(obs)
        origin = np.zeros((1, n))
        for k, ob in enumerate(self.observables[n + 1:], start=n + 1):
            val = np.asarray(ob.func(origin), dtype=float)
            if val.shape != (1,):
                raise ValueError(f"observable {k} ({ob.label}) is not vectorised")
            if val[0] != 0.0:
                raise ValueError(f"observable {k} ({ob.label}) does not vanish at the origin")

    @property
    def N(self) -> int:
        return len(self.observables) - 1

    @property
    def labels(self):
        return [ob.label for ob in self.observables]

    def __len__(self):
        return len(self.observables)

    def __repr__(self):
        return f"Dictionary(name={self.name!r}, n={self.n}, N={self.N}, labels={self.labels})"

    def _as_batch(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n:
            raise DataError(f"expected states with {self.n} columns, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("states contain non-finite entries")
        return X

    def evaluate(self, X) -> np.ndarray:
        """Lift a batch of states; returns ``(d, N+1)``."""
        X = self._as_batch(X)
        out = np.empty((X.shape[0], len(self.observables)))
        for k, ob in enumerate(self.observables):
            col = ob.func(X)
            if not np.all(np.isfinite(col)):
                raise LiftingError(k, ob.label)
            out[:, k] = col
        return out

    def gradient(self, X) -> np.ndarray:
        """Gradients of every observable; returns ``(d, N+1, n)``."""
        X = self._as_batch(X)
        out = np.empty((X.shape[0], len(self.observables), self.n))
        for k, ob in enumerate(self.observables):
            g = ob.grad(X)
            if not np.all(np.isfinite(g)):
                raise LiftingError(k, ob.label)
            out[:, k, :] = g
        return out

    def generator_values(self, X, Xdot) -> np.ndarray:
        """``<grad phi_k(x_j), xdot_j>`` for every sample and observable."""
        grads = self.gradient(X)
        Xdot = np.asarray(Xdot, dtype=float)
        if Xdot.ndim == 1:
            Xdot = Xdot[None, :]
        if Xdot.shape != (grads.shape[0], self.n):
            raise DataError(f"derivative shape {Xdot.shape} does not match states")
        return np.einsum("dkn,dn->dk", grads, Xdot)


def lift(dictionary: Dictionary, x) -> np.ndarray:
    """Full lifting ``Phi(x)`` of a single state."""
    return dictionary.evaluate(np.asarray(x, dtype=float).reshape(1, -1))[0]


def lift_reduced(dictionary: Dictionary, x) -> np.ndarray:
    """Reduced lifting ``Phi_bar(x)`` (the constant observable dropped)."""
    return lift(dictionary, x)[1:]


def lift_gradient(dictionary: Dictionary, x) -> np.ndarray:
    """Jacobian of ``Phi`` at ``x``; row ``k`` is ``grad phi_k(x)``."""
    return dictionary.gradient(np.asarray(x, dtype=float).reshape(1, -1))[0]


# --------------------------------------------------------------------------
# Catalog

def linear_dictionary(n: int) -> Dictionary:
    return Dictionary(n, (), name="linear", spec={"kind": "linear", "n": n})


def monomial_dictionary(n: int, degree: int) -> Dictionary:
    """All monomials of total degree ``2..degree`` after the coordinates.

    Ordered by degree, then lexicographically descending in the exponents.
    """
    extra = []
    for deg in range(2, degree + 1):
        for exps in _compositions(deg, n):
            extra.append(monomial_observable(exps))
    return Dictionary(n, extra, name="monomial",
                      spec={"kind": "monomial", "n": n, "degree": degree})


def exponent_dictionary(n: int, exponents: Sequence[Sequence[int]], name="exponents") -> Dictionary:
    """Coordinates followed by the monomials listed in ``exponents``."""
    extra = [monomial_observable(e) for e in exponents]
    return Dictionary(n, extra, name=name,
                      spec={"kind": "exponents", "n": n,
                            "exponents": [list(map(int, e)) for e in exponents]})


def _compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


_CATALOG = {}


def register_dictionary(kind: str):
    """Decorator registering a dictionary factory under ``kind``."""
    def wrap(factory):
        _CATALOG[kind] = factory
        return factory
    return wrap


register_dictionary("linear")(lambda n: linear_dictionary(n))
register_dictionary("monomial")(lambda n, degree: monomial_dictionary(n, degree))
register_dictionary("exponents")(lambda n, exponents: exponent_dictionary(n, exponents))


def dictionary_from_spec(spec: dict) -> Dictionary:
    """Rebuild a dictionary from its serialisable ``spec`` (``kind`` + params)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind not in _CATALOG:
        raise ValueError(f"unknown dictionary kind {kind!r}; known: {sorted(_CATALOG)}")
    return _CATALOG[kind](**spec)


# --------------------------------------------------------------------------
# Data containers

@dataclass(frozen=True)
class SampleSet:
    """``d`` state/derivative pairs drawn from the system."""

    states: np.ndarray
    derivatives: np.ndarray
    seed: Optional[int] = None
    domain: Optional[tuple] = None

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        derivs = np.atleast_2d(np.asarray(self.derivatives, dtype=float))
        if states.shape != derivs.shape:
            raise DataError(f"states {states.shape} and derivatives {derivs.shape} differ in shape")
        if states.shape[0] < 1:
            raise DataError("sample set is empty")
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(derivs))):
            raise DataError("sample set contains non-finite entries")
        states.setflags(write=False)
        derivs.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "derivatives", derivs)

    @property
    def d(self) -> int:
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class GeneratorSurrogate:
    """Least-squares generator matrix ``A`` and its embedded block form."""

    A: np.ndarray
    full_form: np.ndarray
    residual_fro: float
    rank_X: int

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def rank_deficient(self) -> bool:
        return self.rank_X < self.N


def embed_generator(A: np.ndarray) -> np.ndarray:
    """``[[0, 0], [0, A]]`` of size ``(N+1, N+1)``."""
    A = np.asarray(A, dtype=float)
    out = np.zeros((A.shape[0] + 1, A.shape[1] + 1))
    out[1:, 1:] = A
    return out


@dataclass(frozen=True)
class OutputMap:
    """Linear output ``y = C Phi_bar(x)``."""

    C: np.ndarray

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if C.ndim != 2 or C.shape[0] < 1:
            raise ValueError("output matrix must have at least one row")
        if np.any(np.all(C == 0.0, axis=1)):
            raise ValueError("output matrix has an all-zero row")
        C.setflags(write=False)
        object.__setattr__(self, "C", C)

    @property
    def m(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class StateSelector:
    """``S = [I_n 0]`` so that ``S Phi_bar(x) = x``."""

    n: int
    N: int
    S: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.N < self.n:
            raise ValueError("lifted dimension must be at least the state dimension")
        S = np.zeros((self.n, self.N))
        S[:, :self.n] = np.eye(self.n)
        S.setflags(write=False)
        object.__setattr__(self, "S", S)

    @classmethod
    def for_dictionary(cls, dictionary: Dictionary) -> "StateSelector":
        return cls(dictionary.n, dictionary.N)

    def __call__(self, phibar):
        return np.asarray(phibar)[..., :self.n]


# --------------------------------------------------------------------------
# Linear algebra

def pseudoinverse(M, rank_tol: float = 1e-10) -> np.ndarray:
    """SVD pseudoinverse dropping singular values below ``rank_tol * s_max``."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise DataError("matrix contains non-finite entries")
    if M.size == 0:
        return np.zeros(M.shape[::-1])
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(M.shape[::-1])
    keep = s > rank_tol * s[0]
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def numerical_rank(M, rank_tol: float = 1e-10) -> int:
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def spectral_abscissa(M) -> float:
    """Largest real part among the eigenvalues of ``M``."""
    return float(np.max(np.linalg.eigvals(np.asarray(M, dtype=float)).real))


def symmetrize(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def max_eig_sym(M) -> float:
    return float(np.linalg.eigvalsh(symmetrize(M))[-1])


def min_eig_sym(M) -> float:
    return float(np.linalg.eigvalsh(symmetrize(M))[0])
