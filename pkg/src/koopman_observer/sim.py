"""Fixed-step RK4 simulation of the plant and the lifted observer."""

from dataclasses import dataclass

import numpy as np

from .core import Dictionary, StateSelector
from .exceptions import DataError


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    diverged: bool = False
    message: str = ""


@dataclass
class SimulationRecord:
    """Trajectories on a common time grid (one row per instant)."""

    times: np.ndarray
    x_true: np.ndarray
    phibar_true: np.ndarray
    phi_hat: np.ndarray
    x_hat: np.ndarray
    e_lifted_norm: np.ndarray
    e_state_norm: np.ndarray
    diverged: bool = False
    message: str = ""


@dataclass(frozen=True)
class DecayFit:
    alpha_hat: float
    M_hat: float
    t_start: float
    n_points: int

    def envelope(self, t, rate=None):
        r = self.alpha_hat if rate is None else rate
        return self.M_hat * np.exp(-r * np.asarray(t))


def _grid(T, h):
    if not h > 0:
        raise ValueError("step must be positive")
    if T < h:
        raise ValueError("horizon must be at least one step")
    steps = int(round(T / h))
    return h * np.arange(steps + 1), steps


def _vector_field(system):
    f = getattr(system, "f", system)
    return f


def rk4_step(rhs, z, h):
    k1 = rhs(z)
    k2 = rhs(z + 0.5 * h * k1)
    k3 = rhs(z + 0.5 * h * k2)
    k4 = rhs(z + h * k3)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _integrate(rhs, z0, h, steps):
    out = np.empty((steps + 1,) + z0.shape)
    out[0] = z0
    z = z0
    for k in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):  # blow-up is reported below
            z = rk4_step(rhs, z, h)
        if not np.all(np.isfinite(z)):
            return out[:k + 1], f"non-finite state after step {k + 1} (t = {(k + 1) * h:g})"
        out[k + 1] = z
    return out, ""


def integrate_plant(system, x0, T: float, h: float) -> Trajectory:
    """Classical RK4 for ``x' = f(x)``; ``x0`` may be ``(n,)`` or a batch ``(b, n)``."""
    f = _vector_field(system)
    times, steps = _grid(T, h)
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    z0 = np.atleast_2d(x0).copy()
    states, msg = _integrate(f, z0, h, steps)
    if single:
        states = states[:, 0, :]
    return Trajectory(times=times[:states.shape[0]], states=states, diverged=bool(msg), message=msg)


def run_observer_batch(A, C, L, dictionary: Dictionary, system, X0, Xhat0, T: float, h: float):
    """Co-simulate plant and observer for several initial conditions at once.

    The observer is ``phi_hat' = A phi_hat + L (y - C phi_hat)`` with
    ``y = C Phi_bar(x)``; each RK4 stage of the observer uses the matching
    stage of the plant.  ``phi_hat(0) = Phi_bar(xhat0)``.
    """
    A = np.asarray(A, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    N = A.shape[0]
    L = np.asarray(L, dtype=float).reshape(N, C.shape[0])
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    Xhat0 = np.atleast_2d(np.asarray(Xhat0, dtype=float))
    n = dictionary.n
    if dictionary.N != N or C.shape[1] != N:
        raise DataError("A, C and the dictionary disagree on the lifted dimension")
    if X0.shape != Xhat0.shape or X0.shape[1] != n:
        raise DataError("initial states must be (b, n) arrays of equal shape")
    f = _vector_field(system)
    b = X0.shape[0]
    selector = StateSelector(n, N)

    def rhs(z):
        x = z[:, :n]
        ph = z[:, n:]
        y = dictionary.evaluate(x)[:, 1:] @ C.T
        return np.hstack([f(x), ph @ A.T + (y - ph @ C.T) @ L.T])

    z0 = np.hstack([X0, dictionary.evaluate(Xhat0)[:, 1:]])
    times, steps = _grid(T, h)
    Z, msg = _integrate(rhs, z0, h, steps)
    times = times[:Z.shape[0]]
    records = []
    for i in range(b):
        x = Z[:, i, :n]
        ph = Z[:, i, n:]
        phibar = dictionary.evaluate(x)[:, 1:]
        xh = selector(ph)
        records.append(SimulationRecord(
            times=times, x_true=x, phibar_true=phibar, phi_hat=ph, x_hat=xh,
            e_lifted_norm=np.linalg.norm(phibar - ph, axis=1),
            e_state_norm=np.linalg.norm(x - xh, axis=1),
            diverged=bool(msg), message=msg))
    return records


def run_observer(A, C, L, dictionary, system, x0, xhat0, T: float, h: float) -> SimulationRecord:
    return run_observer_batch(A, C, L, dictionary, system, [x0], [xhat0], T, h)[0]


def fit_decay_rate(times, error_norms, burn_in: float = 0.1, floor: float = 1e-12) -> DecayFit:
    """Least-squares fit of ``log ||e||`` against ``t`` after the burn-in fraction.

    Returns the decay rate (positive for a decaying error) and the
    amplitude ``M_hat`` such that ``||e(t)|| ~ M_hat exp(-alpha_hat t)``.
    """
    t = np.asarray(times, dtype=float)
    e = np.asarray(error_norms, dtype=float)
    t_start = t[0] + burn_in * (t[-1] - t[0])
    mask = (t >= t_start) & (e > floor) & np.isfinite(e)
    if np.count_nonzero(mask) < 3:
        raise DataError("fewer than 3 usable points for the decay fit")
    slope, intercept = np.polyfit(t[mask], np.log(e[mask]), 1)
    return DecayFit(alpha_hat=float(-slope), M_hat=float(np.exp(intercept)),
                    t_start=float(t_start), n_points=int(np.count_nonzero(mask)))
