import numpy as np
import pytest

from koopman_observer.exceptions import DataError
from koopman_observer.lmi import (LmiProblem, assemble_lmi, certify, lyapunov_decrease_check,
                                  lyapunov_values, preflight_check, schur_form, synthesize)
from koopman_observer.sim import run_observer, run_observer_batch

from conftest import A_REF

C_A = np.array([[1.0, 1.0, 0.0]])


def _assert_valid(res):
    assert res.feasible
    assert np.linalg.eigvalsh(res.P_phi)[0] > 0 and np.linalg.eigvalsh(res.P_e)[0] > 0
    assert res.lam > 0 and res.slack > 0 and res.lmi_max_eig < 0
    assert res.closedloop_abscissa < -res.alpha
    np.testing.assert_allclose(res.P_e @ res.L, res.G, rtol=1e-9, atol=1e-9 * np.abs(res.G).max())
    assert res.certificate.passed, str(res.certificate)


def test_scalar_specialisation():
    a, c, al, cr = -1.5, 2.0, 0.3, 0.2
    p, q, g, lam = 0.7, 1.3, -0.4, 2.5
    prob = LmiProblem(A=[[a]], C=[[c]], alpha=al, c_r=cr)
    M = assemble_lmi(prob, [[p]], [[q]], [[g]], lam)
    expected = [[2 * p * (a + al) + lam * cr ** 2, 0, p],
                [0, 2 * (q * a - g * c + al * q), q],
                [p, q, -lam]]
    np.testing.assert_allclose(M, expected, rtol=1e-15)


def test_zero_variables_and_block_positions():
    prob = LmiProblem(A=A_REF, C=C_A, alpha=0.5, c_r=0.1)
    Z = np.zeros((3, 3))
    assert np.all(assemble_lmi(prob, Z, Z, np.zeros((3, 1)), 0.0) == 0)
    M = assemble_lmi(prob, Z, Z, np.zeros((3, 1)), 2.0)
    np.testing.assert_allclose(M, np.diag([0.02] * 3 + [0] * 3 + [-2] * 3), atol=1e-16)
    rng = np.random.default_rng(0)
    B = rng.standard_normal((3, 3))
    P = B @ B.T
    M = assemble_lmi(prob, P, np.eye(3), rng.standard_normal((3, 1)), 1.7)
    np.testing.assert_array_equal(M[:3, 6:], P)
    np.testing.assert_array_equal(M[6:, 6:], -1.7 * np.eye(3))
    np.testing.assert_array_equal(M, M.T)


def test_problem_validation():
    with pytest.raises(DataError):
        LmiProblem(A=np.zeros((0, 0)), C=np.zeros((1, 0)), alpha=1, c_r=0)
    with pytest.raises(DataError):
        LmiProblem(A=A_REF, C=np.ones((1, 2)), alpha=1, c_r=0)
    for kw in ({"alpha": 0.0, "c_r": 0.1}, {"alpha": 1, "c_r": -1}, {"alpha": 1, "c_r": 0, "mu": 0}):
        with pytest.raises(ValueError):
            LmiProblem(A=A_REF, C=C_A, **kw)


def test_preflight_examples():
    D = np.diag([-2.0, -4.0, -1.0])
    assert preflight_check(D, 0.9).passed
    pre = preflight_check(D, 1.1)
    assert not pre.passed and pre.margin == pytest.approx(0.1, abs=1e-12)
    assert not preflight_check(np.zeros((2, 2)), 0.01).passed


def test_feasible_reference_design():
    res = synthesize(A_REF, C_A, 0.5, 1e-3)
    _assert_valid(res)
    assert np.max(np.linalg.eigvals(A_REF - res.L @ C_A).real) < -0.5


def test_infeasible_above_open_loop_rate():
    res = synthesize(A_REF, C_A, 5.0, 1e-3)
    assert not res.feasible and not res.preflight.passed
    assert "preflight failed" in res.message


def test_uncertainty_free_diagonal():
    res = synthesize(-2 * np.eye(2), np.eye(2), 1.0, 0.0)
    _assert_valid(res)
    # L = 0 would also do: the open-loop rate 2 exceeds alpha
    c = certify(-2 * np.eye(2), np.eye(2), np.zeros((2, 2)), 1.0, res.P_phi, res.P_e, res.lam, 0.0)
    assert c.checks["closed_loop"].passed


def test_identified_designs_certified(designs_a, designs_cstr):
    for res in list(designs_a.values()) + list(designs_cstr.values()):
        _assert_valid(res)


def test_certify_closed_loop_check():
    D = np.diag([-2.0, -4.0, -1.0])
    L0 = np.zeros((3, 1))
    ok = certify(D, C_A, L0, 0.5, np.eye(3), np.eye(3), 1.0, 0.0)
    assert ok.checks["closed_loop"].passed
    bad = certify(D, C_A, L0, 2.0, np.eye(3), np.eye(3), 1.0, 0.0)
    assert not bad.checks["closed_loop"].passed
    assert "closed_loop" in bad.violations


def test_homogeneity(designs_a, ident_a):
    res = designs_a[0.9]
    prob = LmiProblem(A=ident_a.A, C=C_A, alpha=0.9, c_r=res.c_r)
    M = assemble_lmi(prob, res.P_phi, res.P_e, res.G, res.lam)
    for s in (1e-3, 0.5, 7.0, 1e4):
        Ms = assemble_lmi(prob, s * res.P_phi, s * res.P_e, s * res.G, s * res.lam)
        np.testing.assert_allclose(Ms, s * M, rtol=1e-12, atol=1e-12 * s * np.abs(M).max())
        Ls = np.linalg.solve(s * res.P_e, s * res.G)
        np.testing.assert_allclose(Ls, res.L, rtol=1e-10)


def test_schur_sign_agreement(designs_a, ident_a):
    res = designs_a[0.9]
    rng = np.random.default_rng(21)
    signs = set()
    for k in range(20):
        scale = 10 ** rng.uniform(-3, 0.5)
        B1 = rng.standard_normal((3, 3))
        B2 = rng.standard_normal((3, 3))
        P_phi = res.P_phi + scale * (B1 + B1.T) / 2
        P_e = res.P_e + scale * (B2 + B2.T) / 2
        G = res.G + scale * rng.standard_normal(res.G.shape)
        lam = res.lam * np.exp(rng.uniform(-1, 1))
        L = np.linalg.solve(P_e, G)
        prob = LmiProblem(A=ident_a.A, C=C_A, alpha=0.9, c_r=res.c_r)
        full = np.linalg.eigvalsh(assemble_lmi(prob, P_phi, P_e, G, lam))[-1]
        schur = np.linalg.eigvalsh(schur_form(ident_a.A, C_A, L, 0.9, P_phi, P_e, lam, res.c_r))[-1]
        assert np.sign(full) == np.sign(schur)
        signs.add(np.sign(full))
    assert signs == {-1.0, 1.0}


def test_monotone_in_cr(ident_a):
    verdicts = [synthesize(ident_a.A, C_A, 0.5, c).feasible for c in (0.0, 0.01, 0.1, 0.3, 1.0, 3.0)]
    assert verdicts[0]
    # once infeasible, every larger bound stays infeasible
    first_bad = verdicts.index(False) if False in verdicts else len(verdicts)
    assert all(not v for v in verdicts[first_bad:])
    assert not verdicts[-1]


def test_deterministic(ident_a):
    a = synthesize(ident_a.A, C_A, 0.9, ident_a.c_r)
    b = synthesize(ident_a.A, C_A, 0.9, ident_a.c_r)
    assert np.array_equal(a.L, b.L) and np.array_equal(a.P_phi, b.P_phi)


def test_lyapunov_nonincrease_on_certified_runs(sys_a, ident_a, designs_a, initial_a):
    X0, Xh = initial_a
    for res in designs_a.values():
        for rec in run_observer_batch(ident_a.A, C_A, res.L, sys_a.dictionary, sys_a, X0, Xh, 5.0, 1e-3):
            rep = lyapunov_decrease_check(rec, res.P_phi, res.P_e)
            assert rep.passed, rep.worst_increase


def test_lyapunov_zero_at_equilibrium(sys_a, designs_a):
    res = designs_a[0.1]
    rec = run_observer(A_REF, C_A, res.L, sys_a.dictionary, sys_a, [0, 0], [0, 0], 1.0, 1e-2)
    assert np.all(lyapunov_values(rec, res.P_phi, res.P_e) == 0)
    assert lyapunov_decrease_check(rec, res.P_phi, res.P_e).passed


def test_lyapunov_detects_unstable_gain(sys_a, designs_a):
    res = designs_a[0.1]
    bad_L = np.array([[-3.0], [-3.0], [0.0]])     # pushes A - LC unstable
    assert np.max(np.linalg.eigvals(A_REF - bad_L @ C_A).real) > 0
    rec = run_observer(A_REF, C_A, bad_L, sys_a.dictionary, sys_a, [0.5, 0.5], [-0.5, 0.3], 3.0, 1e-3)
    assert lyapunov_decrease_check(rec, res.P_phi, res.P_e).violations > 0
