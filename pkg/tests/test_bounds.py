import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopman_observer.bounds import (build_bound_report, compute_ctilde,
                                     estimate_structure_matrices, estimate_variance_matrices,
                                     required_data, required_data_real,
                                     structure_matrices_from_values,
                                     variance_matrices_from_values)
from koopman_observer.core import SampleSet, linear_dictionary
from koopman_observer.exceptions import (DataError, IllConditionedError,
                                         UnboundedRequirementError)


@pytest.fixture(scope="module")
def linear_1d():
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, (100_000, 1))
    return linear_dictionary(1), SampleSet(x, -x)


def test_constant_only_dictionary():
    d = 10
    P, G = np.ones((d, 1)), np.zeros((d, 1))
    R1, R2 = structure_matrices_from_values(P, G)
    S1, S2 = variance_matrices_from_values(P, G)
    np.testing.assert_array_equal(R2, [[1.0]])
    np.testing.assert_array_equal(R1, [[0.0]])
    assert S2[0, 0] == 0.0 and S1[0, 0] == 0.0


def test_linear_dictionary_analytic_moments(linear_1d):
    dic, s = linear_1d
    R1, R2 = estimate_structure_matrices(dic, s)
    np.testing.assert_allclose(R2, np.diag([1.0, 1 / 3]), atol=2e-2)
    assert abs(R1[1, 1] + 1 / 3) < 2e-2
    S1, S2 = estimate_variance_matrices(dic, s)
    assert abs(S2[1, 1] - 4 / 45) < 2e-2
    assert np.max(np.abs(R2 - R2.T)) <= 1e-12


def test_mc_convergence_of_gram(linear_1d):
    dic, s = linear_1d
    half = SampleSet(s.states[:50_000], s.derivatives[:50_000])
    _, R2a = estimate_structure_matrices(dic, half)
    _, R2b = estimate_structure_matrices(dic, s)
    assert abs(np.linalg.norm(R2a) - np.linalg.norm(R2b)) < 3 / math.sqrt(50_000)


def test_zero_derivatives_give_zero_sigma1(sys_a):
    x = np.random.default_rng(0).uniform(-1, 1, (200, 2))
    S1, _ = estimate_variance_matrices(sys_a.dictionary, SampleSet(x, np.zeros_like(x)))
    assert np.all(S1 == 0)


def test_empty_values_rejected():
    with pytest.raises(DataError):
        structure_matrices_from_values(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(DataError):
        variance_matrices_from_values(np.zeros((0, 2)), np.zeros((0, 2)))


def test_ctilde_hand_values():
    assert compute_ctilde(2.0, 1.0, 1.0) == pytest.approx(0.5, rel=1e-15)
    assert compute_ctilde(2.0, 2.0, 1.0) == pytest.approx(1 / 3, rel=1e-15)
    assert compute_ctilde(1e-12, 1.0, 1.0) < 1e-11
    with pytest.raises(UnboundedRequirementError):
        compute_ctilde(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        compute_ctilde(1.0, -1.0, 1.0)


def test_required_data_floor_and_errors():
    Z = np.zeros((3, 3))
    assert required_data(2, 0.1, 0.5, Z, Z) == 1
    with pytest.raises(UnboundedRequirementError):
        required_data(2, 0.1, 0.0, Z, Z)
    with pytest.raises(ValueError):
        required_data(2, 1.5, 0.1, Z, Z)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-3, 0.99), st.floats(1e-3, 10.0), st.integers(0, 5), st.integers(0, 2 ** 31 - 1))
def test_delta_proportionality(delta, ct, N, seed):
    rng = np.random.default_rng(seed)
    S1 = rng.uniform(0, 1, (N + 1, N + 1))
    S2 = rng.uniform(0, 1, (N + 1, N + 1))
    full = required_data_real(N, delta, ct, S1, S2)
    half = required_data_real(N, delta / 2, ct, S1, S2)
    assert half == pytest.approx(2 * full, rel=1e-14)
    # the rounded count follows within one sample
    d_full, d_half = required_data(N, delta, ct, S1, S2), required_data(N, delta / 2, ct, S1, S2)
    assert 2 * d_full - 2 <= d_half <= 2 * d_full


def _oracle_d0(report, N, delta, c_r):
    # single-expression evaluation straight from the estimated matrices
    An = np.linalg.norm(np.linalg.inv(report.R2) @ report.R1, 2)
    Cn = np.linalg.norm(np.linalg.inv(report.R2), 2)
    ct = min(1, 1 / (An * Cn)) * ((An * c_r) / (2 * (An * Cn) + c_r))
    return max(1, math.ceil((N + 1) ** 2 / (ct ** 2 * delta / 3)
                            * max(report.Sigma1.sum(), report.Sigma2.sum())))


def test_example_a_report_matches_oracle(sys_a, ident_a):
    rep = build_bound_report(sys_a.dictionary, ident_a.train, 0.1, 0.1)
    assert rep.d0 == _oracle_d0(rep, 3, 0.1, 0.1)
    # a solve-based evaluation of the same norms agrees to roundoff
    An = np.linalg.norm(np.linalg.solve(rep.R2, rep.R1), 2)
    assert An == pytest.approx(rep.A_norm, rel=1e-12)
    assert rep.d0 >= 1 and rep.mc_points == 5000
    assert np.min(np.linalg.eigvalsh(rep.R2)) > 0
    np.testing.assert_array_equal(rep.R2, rep.R2.T)
    assert np.all(rep.Sigma1 >= 0) and np.all(rep.Sigma2 >= 0)


def test_report_monotone_in_cr_and_delta(sys_a, ident_a):
    crs = np.geomspace(1e-3, 10, 10)
    d0s = [build_bound_report(sys_a.dictionary, ident_a.train, c, 0.1).d0 for c in crs]
    assert all(a >= b for a, b in zip(d0s, d0s[1:]))
    deltas = np.linspace(0.05, 0.95, 10)
    d0s = [build_bound_report(sys_a.dictionary, ident_a.train, 0.1, dl).d0 for dl in deltas]
    assert all(a >= b for a, b in zip(d0s, d0s[1:]))


def test_report_delta_halving(sys_a, ident_a):
    a = build_bound_report(sys_a.dictionary, ident_a.train, 0.1, 0.5)
    b = build_bound_report(sys_a.dictionary, ident_a.train, 0.1, 0.25)
    assert b.d0_real == pytest.approx(2 * a.d0_real, rel=1e-14)
    assert abs(b.d0 - 2 * a.d0) <= 2


def test_zero_cr_and_singular_gram(sys_a, ident_a):
    with pytest.raises(UnboundedRequirementError):
        build_bound_report(sys_a.dictionary, ident_a.train, 0.0, 0.1)
    # all samples on the line x2 = x1 make x1 and x2 collinear in L2
    t = np.linspace(-1, 1, 50)[:, None]
    x = np.hstack([t, t])
    with pytest.raises(IllConditionedError) as info:
        build_bound_report(linear_dictionary(2), SampleSet(x, -x), 0.1, 0.1)
    assert info.value.min_eigenvalue < 1e-10
