
import numpy as np
import pytest

from koopman_observer.exceptions import ParameterError
from koopman_observer.systems import (CstrParameters, cstr_chain, example_a, get_system,
                                      reconstruct_inlets, sample_uniform)

from conftest import A_REF


def test_example_a_reference_and_equilibrium(sys_a):
    np.testing.assert_array_equal(sys_a.reference_A, A_REF)
    assert np.all(sys_a(np.zeros(2)) == 0)
    np.testing.assert_array_equal(sys_a.C, [[1.0, 1.0, 0.0]])


@pytest.mark.parametrize("rho,tau", [(-2.0, -1.0), (-0.5, -3.0), (-1.3, -0.2)])
def test_example_a_invariance(rho, tau):
    s = example_a(rho, tau)
    X = np.random.default_rng(4).uniform(-1, 1, (100, 2))
    Xd = s.f(X)
    lhs = np.einsum("dkn,dn->dk", s.dictionary.gradient(X), Xd)[:, 1:]
    rhs = s.dictionary.evaluate(X)[:, 1:] @ s.reference_A.T
    assert np.max(np.abs(lhs - rhs)) <= 1e-10


def test_example_a_parameter_checks():
    with pytest.raises(ParameterError):
        example_a(1.0, -1.0)
    with pytest.raises(ParameterError):
        example_a(-1.0, -2.0)


def test_noiseless_fit_residuals(ident_a, ident_cstr):
    rel_a = ident_a.gen.residual_fro / np.linalg.norm(ident_a.Y)
    rel_c = ident_cstr.gen.residual_fro / np.linalg.norm(ident_cstr.Y)
    assert rel_a <= 1e-8
    assert rel_c > 1e-6


def test_rate_constants_and_steady_state():
    p = CstrParameters()
    assert abs(p.rate_constant(400.0) - 2.5) < 0.01
    assert (p.CA1s, p.CA2s) == (2.0, 2.9852)
    ca10, ca20 = reconstruct_inlets(p)
    assert abs(ca10 - 4.0) < 1e-3 and abs(ca20 - 4.0) < 1e-3
    s = cstr_chain()
    assert np.max(np.abs(s(np.zeros(2)))) <= 1e-9
    assert s.params["steady_residual"] <= 1e-9


def test_rounded_inlets_fail_the_steady_state_guard():
    with pytest.raises(ParameterError):
        cstr_chain(inlet=(4.0, 4.0))
    s = cstr_chain(inlet=(4.0, 4.0), steady_tol=1e-2)
    res = np.abs(s(np.zeros(2)))
    # rounding the inlets to 4.0 leaves a few 1e-3 of imbalance
    assert 1e-3 < res.max() < 5e-3


def test_cstr_shape():
    s = cstr_chain()
    np.testing.assert_array_equal(s.C, [[0, 1, 1, 0, 0]])
    np.testing.assert_array_equal(s.domain[0], [-0.05, -0.05])
    assert s.dictionary.labels[1:] == ["x1", "x2", "x1^2", "x2^2", "x1*x2"]
    assert s.units["time"] == "h"
    with pytest.raises(ParameterError):
        cstr_chain(CstrParameters(V1=-1.0))


def test_cstr_vector_field_matches_balance():
    s = cstr_chain()
    p = s.params
    x = np.array([0.03, -0.02])
    c1, c2 = 2.0 + x[0], 2.9852 + x[1]
    d1 = 5 * (p["CA10"] - c1) - p["k1"] * c1 ** 2
    d2 = 5 * p["CA20"] + 5 * c1 - 10 * c2 - p["k2"] * c2 ** 2
    np.testing.assert_allclose(s(x), [d1, d2], rtol=1e-12)


def test_sampling(sys_a):
    s = sample_uniform(sys_a, 5000, 9)
    assert np.all(np.abs(s.states) <= 1)
    assert np.array_equal(s.derivatives[:, 0], -2.0 * s.states[:, 0])
    assert sample_uniform(sys_a, 1, 0).d == 1
    t = sample_uniform(sys_a, 5000, 9)
    assert np.array_equal(s.states, t.states) and np.array_equal(s.derivatives, t.derivatives)
    with pytest.raises(ValueError):
        sample_uniform(sys_a, 0, 0)


def test_get_system():
    assert get_system("example_a", rho=-1.0).params["rho"] == -1.0
    assert get_system("cstr", T1=410.0).params["T1"] == 410.0
    with pytest.raises(ValueError):
        get_system("pendulum")


def test_derivative_noise_only_touches_derivatives(sys_a):
    a = sample_uniform(sys_a, 100, 3)
    b = sample_uniform(sys_a, 100, 3, derivative_noise=0.1)
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.derivatives, b.derivatives)
