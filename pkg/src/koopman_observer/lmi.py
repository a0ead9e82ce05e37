"""Robust observer synthesis by a max-slack LMI.

The unknowns are ``P_phi``, ``P_e`` (symmetric), ``G`` and ``lam``; the gain
is recovered as ``L = P_e^{-1} G``.  The block LMI is homogeneous in the
unknowns, so the cone is normalised by ``trace(P_phi) + trace(P_e) =
trace_cap`` and the slack ``t`` is maximised.  The same slack is applied to
every strict inequality (the LMI, both Lyapunov matrices and ``lam``), and
``G`` is held inside a spectral-norm ball.  Without those two measures the
optimum pushes ``P_e`` to its floor and ``G`` to infinity, producing gains
of order 1e8 that are numerically useless.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import sdp
from .core import spectral_abscissa, symmetrize
from .exceptions import DataError, SolverError


@dataclass(frozen=True)
class LmiProblem:
    """Data of one synthesis.

    ``trace_cap`` defaults to ``2 N``.  ``gain_cap`` bounds ``||G||_2`` and
    ``lambda_cap`` bounds the multiplier, which is otherwise free when
    ``c_r`` is (numerically) zero.
    """

    A: np.ndarray
    C: np.ndarray
    alpha: float
    c_r: float
    mu: float = 1e-6
    trace_cap: Optional[float] = None
    gain_cap: float = 10.0
    lambda_cap: float = 1e6
    feas_tol: float = 1e-7

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        if A.size == 0:
            raise DataError("degenerate problem: lifted dimension N = 0")
        if A.shape[0] != A.shape[1] or C.shape[1] != A.shape[0]:
            raise DataError(f"inconsistent shapes A {A.shape}, C {C.shape}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.c_r < 0:
            raise ValueError("c_r must be nonnegative")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", C)
        if self.trace_cap is None:
            object.__setattr__(self, "trace_cap", 2.0 * A.shape[0])

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class CheckResult:
    value: float
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class CertificateReport:
    checks: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    @property
    def violations(self):
        return [name for name, c in self.checks.items() if not c.passed]

    def __str__(self):
        lines = []
        for name, c in self.checks.items():
            lines.append(f"{name}: {'ok' if c.passed else 'VIOLATED'} ({c.value:.6g}) {c.detail}")
        return "\n".join(lines)


@dataclass
class SynthesisResult:
    alpha: float
    c_r: float
    feasible: bool
    slack: float
    P_phi: np.ndarray
    P_e: np.ndarray
    G: np.ndarray
    lam: float
    L: Optional[np.ndarray]
    lmi_max_eig: float
    closedloop_abscissa: float
    status: str
    certificate: Optional[CertificateReport] = None
    preflight: Optional["PreflightReport"] = None
    iterations: int = 0
    message: str = ""
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PreflightReport:
    abscissa: float
    alpha: float

    @property
    def margin(self) -> float:
        """``abscissa + alpha``; must be negative for a feasible LMI."""
        return self.abscissa + self.alpha

    @property
    def passed(self) -> bool:
        return self.margin < 0

    def __str__(self):
        if self.passed:
            return (f"preflight ok: open-loop spectral abscissa {self.abscissa:.6g} "
                    f"< -alpha = {-self.alpha:.6g}")
        return (f"preflight failed: open-loop spectral abscissa {self.abscissa:.6g} "
                f">= -alpha = {-self.alpha:.6g} (short by {self.margin:.6g}); the LMI's "
                "first diagonal block cannot be negative definite")


def assemble_lmi(prob: LmiProblem, P_phi, P_e, G, lam) -> np.ndarray:
    """The ``3N x 3N`` block matrix that must be negative definite."""
    A, C, N = prob.A, prob.C, prob.N
    P_phi = np.atleast_2d(np.asarray(P_phi, dtype=float))
    P_e = np.atleast_2d(np.asarray(P_e, dtype=float))
    G = np.asarray(G, dtype=float).reshape(N, prob.m)
    if P_phi.shape != (N, N) or P_e.shape != (N, N):
        raise DataError("Lyapunov matrices must be N x N")
    I = np.eye(N)
    two_a = 2.0 * prob.alpha
    b11 = P_phi @ A + A.T @ P_phi + two_a * P_phi + lam * prob.c_r ** 2 * I
    b22 = P_e @ A - G @ C + A.T @ P_e - C.T @ G.T + two_a * P_e
    Z = np.zeros((N, N))
    return np.block([[b11, Z, P_phi],
                     [Z, b22, P_e],
                     [P_phi.T, P_e.T, -lam * I]])


def preflight_check(A, alpha) -> PreflightReport:
    return PreflightReport(abscissa=spectral_abscissa(A), alpha=float(alpha))


class _Layout:
    """Index bookkeeping for the flat decision vector."""

    def __init__(self, N, m):
        self.N, self.m = N, m
        self.pairs = [(i, j) for i in range(N) for j in range(i, N)]
        ns = len(self.pairs)
        self.phi = range(0, ns)
        self.e = range(ns, 2 * ns)
        self.g = range(2 * ns, 2 * ns + N * m)
        self.lam = 2 * ns + N * m
        self.t = self.lam + 1
        self.size = self.t + 1

    def basis(self, k):
        i, j = self.pairs[k]
        E = np.zeros((self.N, self.N))
        E[i, j] = E[j, i] = 1.0
        return E

    def unpack_sym(self, x, block):
        P = np.zeros((self.N, self.N))
        for k, idx in enumerate(block):
            i, j = self.pairs[k]
            P[i, j] = P[j, i] = x[idx]
        return P


def _build(prob: LmiProblem):
    N, m = prob.N, prob.m
    lay = _Layout(N, m)
    zN, zG = np.zeros((N, N)), np.zeros((N, m))
    cons = []

    coeffs = {}
    for k, idx in enumerate(lay.phi):
        coeffs[idx] = assemble_lmi(prob, lay.basis(k), zN, zG, 0.0)
    for k, idx in enumerate(lay.e):
        coeffs[idx] = assemble_lmi(prob, zN, lay.basis(k), zG, 0.0)
    for k, idx in enumerate(lay.g):
        Gk = np.zeros(N * m)
        Gk[k] = 1.0
        coeffs[idx] = assemble_lmi(prob, zN, zN, Gk.reshape(N, m), 0.0)
    coeffs[lay.lam] = assemble_lmi(prob, zN, zN, zG, 1.0)
    coeffs[lay.t] = np.eye(3 * N)
    cons.append(sdp.AffineMatrixConstraint(np.zeros((3 * N, 3 * N)), coeffs, sdp.Sense.NSD, "lmi"))

    for name, block in (("P_phi", lay.phi), ("P_e", lay.e)):
        basis = {idx: lay.basis(k) for k, idx in enumerate(block)}
        cons.append(sdp.AffineMatrixConstraint(-prob.mu * np.eye(N), basis, sdp.Sense.PSD,
                                               f"{name} >= mu I"))
        slack = dict(basis)
        slack[lay.t] = -np.eye(N)
        cons.append(sdp.AffineMatrixConstraint(np.zeros((N, N)), slack, sdp.Sense.PSD,
                                               f"{name} >= t I"))
    one = np.ones((1, 1))
    cons.append(sdp.AffineMatrixConstraint(-prob.mu * one, {lay.lam: one}, sdp.Sense.PSD, "lam >= mu"))
    cons.append(sdp.AffineMatrixConstraint(0 * one, {lay.lam: one, lay.t: -one}, sdp.Sense.PSD,
                                           "lam >= t"))
    cons.append(sdp.AffineMatrixConstraint(-prob.lambda_cap * one, {lay.lam: one}, sdp.Sense.NSD,
                                           "lam <= lambda_cap"))

    # ||G||_2 <= gain_cap  <=>  [[cap I, G], [G^T, cap I]] >= 0
    K = N + m
    gcoef = {}
    for k, idx in enumerate(lay.g):
        Gk = np.zeros(N * m)
        Gk[k] = 1.0
        Gk = Gk.reshape(N, m)
        Z = np.zeros((K, K))
        Z[:N, N:] = Gk
        Z[N:, :N] = Gk.T
        gcoef[idx] = Z
    cons.append(sdp.AffineMatrixConstraint(prob.gain_cap * np.eye(K), gcoef, sdp.Sense.PSD,
                                           "gain norm"))

    trace = {}
    for block in (lay.phi, lay.e):
        for k, idx in enumerate(block):
            i, j = lay.pairs[k]
            if i == j:
                trace[idx] = 1.0
    eqs = [sdp.LinearEquality(trace, float(prob.trace_cap), "trace normalisation")]
    return lay, cons, eqs


def solve_feasibility(prob: LmiProblem, options: Optional[sdp.SdpOptions] = None) -> SynthesisResult:
    """Maximise the slack; certify and return the gain if the slack exceeds ``feas_tol``.

    Raises
    ------
    SolverError
        If the SDP solver fails to converge or a solution it reports fails
        certification.  Certified infeasibility is returned, not raised.
    """
    lay, cons, eqs = _build(prob)
    sol = sdp.solve(cons, {lay.t: 1.0}, eqs, n_vars=lay.size, maximize=True, options=options)
    pre = preflight_check(prob.A, prob.alpha)
    if sol.status is sdp.SdpStatus.INFEASIBLE:
        # Not expected: the slack variable always admits a feasible point.
        raise SolverError(f"SDP reported infeasible normalisation: {sol.message}")
    if sol.status is not sdp.SdpStatus.OPTIMAL and not pre.passed:
        # The (1,1) block alone forces A + alpha I to be Hurwitz, so a failed
        # preflight certifies infeasibility even when the solver stalls.
        return SynthesisResult(alpha=prob.alpha, c_r=prob.c_r, feasible=False, slack=float("nan"),
                               P_phi=None, P_e=None, G=None, lam=float("nan"), L=None,
                               lmi_max_eig=float("nan"), closedloop_abscissa=float("nan"),
                               status=sol.status.value, preflight=pre, iterations=sol.iterations,
                               message=f"LMI infeasible (certified by preflight; solver stopped "
                                       f"with {sol.status.value}). {pre}")
    if sol.status is not sdp.SdpStatus.OPTIMAL:
        raise SolverError(f"SDP did not converge ({sol.status.value}): {sol.message}")
    x = sol.values
    P_phi = lay.unpack_sym(x, lay.phi)
    P_e = lay.unpack_sym(x, lay.e)
    G = np.array([x[i] for i in lay.g]).reshape(prob.N, prob.m)
    lam = float(x[lay.lam])
    t = float(x[lay.t])
    lmi_eig = float(np.linalg.eigvalsh(symmetrize(assemble_lmi(prob, P_phi, P_e, G, lam)))[-1])
    res = SynthesisResult(alpha=prob.alpha, c_r=prob.c_r, feasible=False, slack=t, P_phi=P_phi,
                          P_e=P_e, G=G, lam=lam, L=None, lmi_max_eig=lmi_eig,
                          closedloop_abscissa=float("nan"), status=sol.status.value,
                          preflight=pre, iterations=sol.iterations)
    if t <= prob.feas_tol:
        res.message = (f"LMI infeasible: optimal slack {t:.3e} <= {prob.feas_tol:.1e}. {pre}")
        return res
    L = np.linalg.solve(P_e, G)
    res.L = L
    res.closedloop_abscissa = spectral_abscissa(prob.A - L @ prob.C)
    res.certificate = certify(prob.A, prob.C, L, prob.alpha, P_phi, P_e, lam, prob.c_r)
    if not res.certificate.passed:
        raise SolverError("solver solution failed certification: "
                          + ", ".join(res.certificate.violations))
    res.feasible = True
    res.message = "feasible and certified"
    return res


def synthesize(A, C, alpha, c_r, **kwargs) -> SynthesisResult:
    opts = kwargs.pop("options", None)
    return solve_feasibility(LmiProblem(A=A, C=C, alpha=alpha, c_r=c_r, **kwargs), opts)


def schur_form(A, C, L, alpha, P_phi, P_e, lam, c_r) -> np.ndarray:
    """``diag(M1, M2) + (1/lam) [P_phi; P_e][P_phi P_e]`` (lam > 0)."""
    A = np.asarray(A, dtype=float)
    Acl = A - np.asarray(L) @ np.asarray(C)
    N = A.shape[0]
    M1 = P_phi @ A + A.T @ P_phi + 2 * alpha * P_phi + lam * c_r ** 2 * np.eye(N)
    M2 = P_e @ Acl + Acl.T @ P_e + 2 * alpha * P_e
    stack = np.vstack([P_phi, P_e])
    Z = np.zeros((N, N))
    return np.block([[M1, Z], [Z, M2]]) + stack @ stack.T / lam


def certify(A, C, L, alpha, P_phi, P_e, lam, c_r) -> CertificateReport:
    """Recompute the certificate from raw eigenvalues.

    Checks the closed-loop spectral abscissa, the block LMI, and its Schur
    complement with respect to the multiplier block, plus the positivity
    preconditions.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    L = np.asarray(L, dtype=float).reshape(A.shape[0], C.shape[0])
    P_phi = np.atleast_2d(np.asarray(P_phi, dtype=float))
    P_e = np.atleast_2d(np.asarray(P_e, dtype=float))
    checks = {}
    pos = min(np.linalg.eigvalsh(symmetrize(P_phi))[0], np.linalg.eigvalsh(symmetrize(P_e))[0], lam)
    checks["positivity"] = CheckResult(float(pos), bool(pos > 0), "min(eig P_phi, eig P_e, lam) > 0")
    absc = spectral_abscissa(A - L @ C)
    checks["closed_loop"] = CheckResult(absc, bool(absc < -alpha), f"max Re eig(A - LC) < {-alpha:g}")
    prob = LmiProblem(A=A, C=C, alpha=alpha, c_r=c_r)
    M = assemble_lmi(prob, P_phi, P_e, P_e @ L, lam)
    lmi_eig = float(np.linalg.eigvalsh(symmetrize(M))[-1])
    checks["lmi"] = CheckResult(lmi_eig, bool(lmi_eig < 0), "max eig of block LMI < 0")
    if lam > 0:
        s_eig = float(np.linalg.eigvalsh(symmetrize(schur_form(A, C, L, alpha, P_phi, P_e, lam, c_r)))[-1])
        checks["schur"] = CheckResult(s_eig, bool(s_eig < 0), "max eig of Schur complement < 0")
    else:
        checks["schur"] = CheckResult(float("nan"), False, "undefined for lam <= 0")
    return CertificateReport(checks)


@dataclass(frozen=True)
class LyapunovReport:
    values: np.ndarray
    worst_increase: float
    violations: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def lyapunov_values(record, P_phi, P_e) -> np.ndarray:
    phibar = record.phibar_true
    e = phibar - record.phi_hat
    return (np.einsum("ti,ij,tj->t", phibar, P_phi, phibar)
            + np.einsum("ti,ij,tj->t", e, P_e, e))


def lyapunov_decrease_check(record, P_phi, P_e, rel_tol: float = 1e-6) -> LyapunovReport:
    """``V = Phi_bar' P_phi Phi_bar + e' P_e e`` must not increase between grid points."""
    V = lyapunov_values(record, np.asarray(P_phi), np.asarray(P_e))
    tol = rel_tol * V[0] if V.size else 0.0
    inc = np.diff(V)
    worst = float(inc.max()) if inc.size else 0.0
    return LyapunovReport(values=V, worst_increase=worst, violations=int(np.sum(inc > tol)),
                          tolerance=float(tol))
