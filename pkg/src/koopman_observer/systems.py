"""Benchmark plants: the polynomial system with an exact lifting and the
two-CSTR chain, plus seeded uniform sampling.

All vector fields act on batches ``(d, n) -> (d, n)`` in deviation
coordinates, so the origin is an equilibrium.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (Dictionary, Observable, OutputMap, SampleSet, exponent_dictionary,
                   register_dictionary)
from .exceptions import ParameterError


@dataclass(frozen=True)
class BenchmarkSystem:
    name: str
    n: int
    f: Callable[[np.ndarray], np.ndarray]
    dictionary: Dictionary
    domain: tuple
    output: OutputMap
    params: dict = field(default_factory=dict)
    reference_A: Optional[np.ndarray] = None
    units: dict = field(default_factory=dict)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return self.f(X[None, :])[0]
        return self.f(X)

    @property
    def C(self) -> np.ndarray:
        return self.output.C


# --------------------------------------------------------------------------
# Polynomial system with an exactly invariant lifting

def example_a_dictionary(rho: float = -2.0, tau: float = -1.0) -> Dictionary:
    """``[1, x1, x2, x2 - tau/(tau - 2 rho) x1^2]``."""
    coef = tau / (tau - 2.0 * rho)

    def func(X):
        return X[:, 1] - coef * X[:, 0] ** 2

    def grad(X):
        return np.column_stack([-2.0 * coef * X[:, 0], np.ones(X.shape[0])])

    return Dictionary(2, [Observable(f"x2 - ({coef:.6g}) x1^2", func, grad)], name="example_a",
                      spec={"kind": "example_a", "rho": rho, "tau": tau})


register_dictionary("example_a")(example_a_dictionary)


def example_a(rho: float = -2.0, tau: float = -1.0) -> BenchmarkSystem:
    """``x1' = rho x1``, ``x2' = tau (x2 - x1^2)`` on ``[-1, 1]^2`` with ``C = [1 1 0]``."""
    if not (rho < 0 and tau < 0):
        raise ParameterError("rho and tau must both be negative")
    if tau == 2.0 * rho:
        raise ParameterError("tau = 2 rho makes the lifting singular")

    def f(X):
        return np.column_stack([rho * X[:, 0], tau * (X[:, 1] - X[:, 0] ** 2)])

    ref = np.array([[rho, 0.0, 0.0],
                    [0.0, 2.0 * rho, tau - 2.0 * rho],
                    [0.0, 0.0, tau]])
    return BenchmarkSystem(name="example_a", n=2, f=f, dictionary=example_a_dictionary(rho, tau),
                           domain=(np.array([-1.0, -1.0]), np.array([1.0, 1.0])),
                           output=OutputMap(np.array([[1.0, 1.0, 0.0]])),
                           params={"rho": rho, "tau": tau}, reference_A=ref)


# --------------------------------------------------------------------------
# Two CSTRs in series (second-order reaction, isothermal reactors)

@dataclass(frozen=True)
class CstrParameters:
    """Reactor data; rates per hour, concentrations in kmol/m^3."""

    T1: float = 400.0
    T2: float = 300.0
    F10: float = 5.0
    F20: float = 5.0
    V1: float = 1.0
    V2: float = 1.0
    CA1s: float = 2.0
    CA2s: float = 2.9852
    k0: float = 8.46e6
    R: float = 8.314
    E: float = 5e4

    def rate_constant(self, T: float) -> float:
        return self.k0 * math.exp(-self.E / (self.R * T))


def reconstruct_inlets(p: CstrParameters):
    """Inlet concentrations that make the tabulated steady states exact.

    Reactor 1: ``F10/V1 (CA10 - CA1s) = k1 CA1s^2``.
    Reactor 2: ``F20 CA20 + F10 CA1s - (F10 + F20) CA2s = V2 k2 CA2s^2``.
    """
    k1, k2 = p.rate_constant(p.T1), p.rate_constant(p.T2)
    ca10 = p.CA1s + p.V1 * k1 * p.CA1s ** 2 / p.F10
    ca20 = ((p.F10 + p.F20) * p.CA2s + p.V2 * k2 * p.CA2s ** 2 - p.F10 * p.CA1s) / p.F20
    return ca10, ca20


def cstr_dictionary() -> Dictionary:
    """``[1, x1, x2, x1^2, x2^2, x1 x2]``."""
    d = exponent_dictionary(2, [(2, 0), (0, 2), (1, 1)], name="cstr_quadratic")
    return d


def cstr_chain(params: Optional[CstrParameters] = None, inlet=None, half_width: float = 0.05,
               steady_tol: float = 1e-6) -> BenchmarkSystem:
    """Two CSTRs in series in deviation coordinates ``x = C_A - C_As``.

    ``inlet`` defaults to :func:`reconstruct_inlets`.  Rounded inlets such
    as ``(4.0, 4.0)`` leave a steady-state residual of about 3e-3 and are
    rejected unless ``steady_tol`` is loosened.
    """
    p = params or CstrParameters()
    for name in ("T1", "T2", "F10", "F20", "V1", "V2", "CA1s", "CA2s", "k0", "R", "E"):
        if not getattr(p, name) > 0:
            raise ParameterError(f"CSTR parameter {name} must be positive")
    ca10, ca20 = reconstruct_inlets(p) if inlet is None else map(float, inlet)
    k1, k2 = p.rate_constant(p.T1), p.rate_constant(p.T2)
    s1, s2 = p.CA1s, p.CA2s

    def f(X):
        c1 = X[:, 0] + s1
        c2 = X[:, 1] + s2
        d1 = p.F10 / p.V1 * (ca10 - c1) - k1 * c1 ** 2
        d2 = (p.F20 / p.V2 * ca20 + p.F10 / p.V2 * c1 - (p.F10 + p.F20) / p.V2 * c2
              - k2 * c2 ** 2)
        return np.column_stack([d1, d2])

    resid = np.abs(f(np.zeros((1, 2)))[0])
    if np.max(resid) > steady_tol:
        raise ParameterError(f"inlet concentrations ({ca10:g}, {ca20:g}) are inconsistent with the "
                             f"steady state: |f(0)| = {resid} exceeds {steady_tol:g}")
    hw = float(half_width)
    return BenchmarkSystem(
        name="cstr", n=2, f=f, dictionary=cstr_dictionary(),
        domain=(np.array([-hw, -hw]), np.array([hw, hw])),
        output=OutputMap(np.array([[0.0, 1.0, 1.0, 0.0, 0.0]])),
        params={"T1": p.T1, "T2": p.T2, "F10": p.F10, "F20": p.F20, "V1": p.V1, "V2": p.V2,
                "CA1s": s1, "CA2s": s2, "k0": p.k0, "R": p.R, "E": p.E, "CA10": ca10,
                "CA20": ca20, "k1": k1, "k2": k2, "steady_residual": float(np.max(resid))},
        units={"time": "h", "concentration": "kmol/m^3"})


SYSTEMS = {"example_a": example_a, "cstr": cstr_chain}


def get_system(name: str, **params) -> BenchmarkSystem:
    try:
        factory = SYSTEMS[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; available: {sorted(SYSTEMS)}") from None
    if name == "cstr":
        inlet = params.pop("inlet", None)
        half_width = params.pop("half_width", 0.05)
        return cstr_chain(CstrParameters(**params), inlet=inlet, half_width=half_width)
    return factory(**params)


def sample_uniform(system: BenchmarkSystem, d: int, seed=None, derivative_noise: float = 0.0,
                   domain=None) -> SampleSet:
    """``d`` i.i.d. uniform states on the sampling box and their derivatives.

    ``derivative_noise`` adds zero-mean Gaussian noise of that standard
    deviation to the derivatives (used only to study estimation error).
    """
    if d < 1:
        raise ValueError("need at least one sample")
    low, high = domain if domain is not None else system.domain
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    rng = np.random.default_rng(seed)
    X = rng.uniform(low, high, size=(int(d), system.n))
    Xdot = system.f(X)
    if derivative_noise:
        Xdot = Xdot + derivative_noise * rng.standard_normal(Xdot.shape)
    return SampleSet(states=X, derivatives=Xdot, seed=seed, domain=(low, high))
