"""Dense semidefinite programs in max-slack canonical form.

Problems are stated as a linear objective over a flat decision vector ``x``
subject to affine symmetric-matrix constraints ``F0 + sum_i x_i F_i <= 0``
(or ``>= 0``) and linear equalities.  The interior-point iterations are
delegated to CVXOPT's conic solver; every result it calls optimal is
re-checked here by direct eigenvalue evaluation before being reported.
"""

import contextlib
import io
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

SYM_TOL = 1e-12


class Sense(Enum):
    NSD = "<=0"
    PSD = ">=0"


class SdpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible-certified"
    UNBOUNDED = "unbounded"
    MAX_ITERATIONS = "max-iterations"


@dataclass(frozen=True)
class AffineMatrixConstraint:
    """``constant + sum_i x[i] * coefficients[i]`` with a definiteness sense."""

    constant: np.ndarray
    coefficients: Mapping[int, np.ndarray]
    sense: Sense = Sense.NSD
    name: str = ""

    def __post_init__(self):
        F0 = np.atleast_2d(np.asarray(self.constant, dtype=float))
        k = F0.shape[0]
        if F0.shape != (k, k):
            raise ValueError(f"constraint {self.name!r}: constant must be square")
        coeffs = {}
        for idx, Fi in self.coefficients.items():
            Fi = np.atleast_2d(np.asarray(Fi, dtype=float))
            if Fi.shape != (k, k):
                raise ValueError(f"constraint {self.name!r}: coefficient {idx} has shape {Fi.shape}")
            if np.max(np.abs(Fi - Fi.T), initial=0.0) > SYM_TOL:
                raise ValueError(f"constraint {self.name!r}: coefficient {idx} is not symmetric")
            coeffs[int(idx)] = Fi
        if np.max(np.abs(F0 - F0.T), initial=0.0) > SYM_TOL:
            raise ValueError(f"constraint {self.name!r}: constant is not symmetric")
        object.__setattr__(self, "constant", F0)
        object.__setattr__(self, "coefficients", coeffs)

    @property
    def size(self) -> int:
        return self.constant.shape[0]

    def evaluate(self, x) -> np.ndarray:
        out = self.constant.copy()
        for idx, Fi in self.coefficients.items():
            out += x[idx] * Fi
        return 0.5 * (out + out.T)

    def violation(self, x) -> float:
        """Positive when the constraint is violated at ``x``."""
        eig = np.linalg.eigvalsh(self.evaluate(x))
        return float(eig[-1]) if self.sense is Sense.NSD else float(-eig[0])


@dataclass(frozen=True)
class LinearEquality:
    coefficients: Mapping[int, float]
    rhs: float
    name: str = ""

    def residual(self, x) -> float:
        return float(sum(c * x[i] for i, c in self.coefficients.items()) - self.rhs)


@dataclass(frozen=True)
class SdpOptions:
    max_iterations: int = 500
    tol_feas: float = 1e-8
    tol_gap: float = 1e-9
    record_history: bool = False


@dataclass
class SdpSolution:
    values: np.ndarray
    objective: float
    status: SdpStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    gap: float
    max_violation: float = float("nan")
    message: str = ""
    history: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status is SdpStatus.OPTIMAL


_PROGRESS = re.compile(r"^\s*(\d+):\s+(\S+)\s+(\S+)\s+(\S+)\s+(\S+)\s+(\S+)")


def _parse_history(text):
    rows = []
    for line in text.splitlines():
        m = _PROGRESS.match(line)
        if m:
            it, pcost, dcost, gap, pres, dres = m.groups()
            rows.append({"iteration": int(it), "pcost": float(pcost), "dcost": float(dcost),
                         "gap": float(gap), "pres": float(pres), "dres": float(dres)})
    return rows


def _objective_vector(objective, n_vars):
    if isinstance(objective, Mapping):
        c = np.zeros(n_vars)
        for i, v in objective.items():
            c[int(i)] = v
        return c
    c = np.asarray(objective, dtype=float).ravel()
    if c.size != n_vars:
        raise ValueError(f"objective has {c.size} entries, expected {n_vars}")
    return c


def solve(constraints: Sequence[AffineMatrixConstraint], objective,
          equalities: Sequence[LinearEquality] = (), n_vars: Optional[int] = None,
          maximize: bool = True, options: Optional[SdpOptions] = None) -> SdpSolution:
    """Optimise a linear objective subject to LMIs and linear equalities.

    Parameters
    ----------
    constraints : sequence of AffineMatrixConstraint
        At least one.  ``1 x 1`` constraints are passed as linear inequalities.
    objective : array_like or mapping
        Coefficients of the linear objective.
    equalities : sequence of LinearEquality
    n_vars : int, optional
        Length of the decision vector; inferred from the largest index used.
    maximize : bool
        Maximise (default) or minimise the objective.

    Returns
    -------
    SdpSolution
        ``status`` is ``OPTIMAL`` only if every constraint passes an independent
        eigenvalue check within ``tol_feas``.
    """
    from cvxopt import matrix, solvers

    opts = options or SdpOptions()
    if not constraints:
        raise ValueError("at least one constraint is required")
    used = [i for con in constraints for i in con.coefficients]
    used += [i for eq in equalities for i in eq.coefficients]
    if isinstance(objective, Mapping):
        used += list(objective)
    if n_vars is None:
        n_vars = max(used) + 1 if used else 0
    if n_vars < 1:
        raise ValueError("problem has no decision variables")
    if used and (min(used) < 0 or max(used) >= n_vars):
        raise ValueError("variable index out of range")
    c = _objective_vector(objective, n_vars)
    sign = -1.0 if maximize else 1.0

    # s = -F(x) for NSD and s = F(x) for PSD, so that G x + s = h with s in the cone.
    lin_rows, lin_h, Gs, hs = [], [], [], []
    for con in constraints:
        flip = 1.0 if con.sense is Sense.NSD else -1.0
        k = con.size
        if k == 1:
            row = np.zeros(n_vars)
            for i, Fi in con.coefficients.items():
                row[i] = flip * Fi[0, 0]
            lin_rows.append(row)
            lin_h.append(-flip * con.constant[0, 0])
        else:
            G = np.zeros((k * k, n_vars))
            for i, Fi in con.coefficients.items():
                G[:, i] = flip * Fi.ravel(order="F")
            Gs.append(matrix(G))
            hs.append(matrix(-flip * con.constant))
    kwargs = {}
    if lin_rows:
        kwargs["Gl"] = matrix(np.array(lin_rows))
        kwargs["hl"] = matrix(np.array(lin_h))
    if Gs:
        kwargs["Gs"] = Gs
        kwargs["hs"] = hs
    if equalities:
        Aeq = np.zeros((len(equalities), n_vars))
        for r, eq in enumerate(equalities):
            for i, v in eq.coefficients.items():
                Aeq[r, int(i)] = v
        kwargs["A"] = matrix(Aeq)
        kwargs["b"] = matrix(np.array([float(eq.rhs) for eq in equalities]))
    kwargs["options"] = {
        "show_progress": bool(opts.record_history),
        "maxiters": int(opts.max_iterations),
        "feastol": float(opts.tol_feas),
        "abstol": float(opts.tol_gap),
        "reltol": float(opts.tol_gap),
    }

    buf = io.StringIO()
    nan = float("nan")
    try:
        with contextlib.redirect_stdout(buf) if opts.record_history else contextlib.nullcontext():
            sol = solvers.sdp(matrix(sign * c), **kwargs)
    except (ArithmeticError, ValueError) as exc:
        return SdpSolution(values=np.full(n_vars, nan), objective=nan,
                           status=SdpStatus.MAX_ITERATIONS, iterations=0,
                           primal_residual=nan, dual_residual=nan, gap=nan,
                           message=f"numerical breakdown: {exc}",
                           history=_parse_history(buf.getvalue()))
    history = _parse_history(buf.getvalue())
    raw = sol["status"]
    x = np.array(sol["x"]).ravel() if sol["x"] is not None else np.full(n_vars, nan)
    pres = sol.get("primal infeasibility")
    dres = sol.get("dual infeasibility")
    gap = sol.get("gap")
    out = SdpSolution(values=x, objective=float(c @ x) if np.all(np.isfinite(x)) else nan,
                      status=SdpStatus.MAX_ITERATIONS, iterations=int(sol.get("iterations") or 0),
                      primal_residual=nan if pres is None else float(pres),
                      dual_residual=nan if dres is None else float(dres),
                      gap=nan if gap is None else float(gap), history=history)
    if raw == "primal infeasible":
        out.status = SdpStatus.INFEASIBLE
        out.message = "certificate of infeasibility found"
        return out
    if raw == "dual infeasible":
        out.status = SdpStatus.UNBOUNDED
        out.message = "objective is unbounded"
        return out
    if raw != "optimal":
        out.message = f"solver stopped with status {raw!r}"
        return out
    worst = check_constraints(constraints, equalities, x)
    out.max_violation = worst
    if worst > opts.tol_feas:
        out.message = f"solution failed independent re-check (violation {worst:.3e})"
        return out
    out.status = SdpStatus.OPTIMAL
    return out


def check_constraints(constraints, equalities, x) -> float:
    """Largest scaled violation over all constraints at ``x`` (``<= 0`` is satisfied)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        return float("inf")
    worst = -float("inf")
    for con in constraints:
        scale = max(1.0, float(np.linalg.norm(con.evaluate(x), 2)))
        worst = max(worst, con.violation(x) / scale)
    for eq in equalities:
        scale = max(1.0, abs(eq.rhs), sum(abs(c * x[i]) for i, c in eq.coefficients.items()))
        worst = max(worst, abs(eq.residual(x)) / scale)
    return worst
