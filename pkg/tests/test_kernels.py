import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from tfch.errors import ParameterError, SingularKernelError, UsageError
from tfch.kernels import (Family, KernelRow, KernelTable, auxiliary_row, check_criteria,
                          companion_kernels, dcc_kernels, doc_kernels, kernel_row, l1_row,
                          l1a_row, l1h_row, omega)
from tfch.timemesh import TimeMesh, make_fixed_ratio, make_graded, make_random, make_uniform

A_LIM = 1.0 - 1e-8


def quad_singular(lo, hi, t_eval, alpha):
    # int_lo^hi (t_eval - s)^(-alpha) ds with the singularity at hi == t_eval handled by QAWS
    val, _ = integrate.quad(lambda s: 1.0, lo, hi, weight="alg", wvar=(0.0, -alpha),
                            epsabs=1e-14, epsrel=1e-12)
    return val / math.gamma(1 - alpha)


def test_l1_quadrature_oracle_examples():
    m = make_uniform(2, 2)  # tau = 1
    a1 = l1_row(m, 0.5, 1).weights
    a2 = l1_row(m, 0.5, 2).weights
    # oracle: int_0^1 omega_{0.5}(1-s) ds via QAWS
    o0 = quad_singular(0.0, 1.0, 1.0, 0.5)
    o1 = integrate.quad(lambda s: (2 - s) ** -0.5 / math.gamma(0.5), 0, 1, epsabs=1e-14)[0]
    assert a1[0] == pytest.approx(o0, rel=1e-10)
    assert a1[0] == pytest.approx(1.128379, abs=1e-6)
    assert a2[1] == pytest.approx(o1, rel=1e-10)
    # closed form (sqrt(2) - 1) / Gamma(1.5)
    assert a2[1] == pytest.approx(0.467390, abs=1e-6)


def test_l1h_quadrature_oracle_example():
    m = make_uniform(1, 1)
    w = l1h_row(m, 0.5, 1).weights
    assert w[0] == pytest.approx(quad_singular(0.0, 0.5, 0.5, 0.5), rel=1e-10)
    assert w[0] == pytest.approx(0.797885, abs=1e-6)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
@pytest.mark.parametrize("family", ["L1", "L1h"])
def test_rows_match_quadrature_on_random_mesh(alpha, family):
    m = make_random(1, 12, seed=11)
    lv = m.levels
    for n in (1, 2, 7, 12):
        row = kernel_row(family, m, alpha, n).weights
        t_eval = lv[n] if family == "L1" else 0.5 * (lv[n] + lv[n - 1])
        oracle = np.empty(n)
        for k in range(1, n + 1):
            hi = lv[k] if family == "L1" else min(lv[k], t_eval)
            tau = lv[k] - lv[k - 1]
            if hi >= t_eval:
                val = quad_singular(lv[k - 1], hi, t_eval, alpha)
            else:
                val = integrate.quad(lambda s: (t_eval - s) ** -alpha / math.gamma(1 - alpha),
                                     lv[k - 1], hi, epsabs=1e-14, epsrel=1e-12)[0]
            oracle[n - k] = val / tau
        np.testing.assert_allclose(row, oracle, rtol=1e-9)


def test_alpha_limit_lag0():
    m = make_random(1, 20, seed=2)
    for n in (1, 5, 20):
        assert l1_row(m, A_LIM, n).weights[0] == pytest.approx(1 / m.tau(n), rel=1e-6)
    u = make_uniform(1, 20)
    for n in (1, 5, 20):
        assert l1h_row(u, A_LIM, n).weights[0] == pytest.approx(1 / u.tau(n), rel=1e-6)


def test_l1h_small_alpha_lag0_below_lag1():
    u = make_uniform(1, 30)
    for n in range(2, 31):
        w = l1h_row(u, 0.1, n).weights
        assert w[0] < w[1]


def test_l1a_definition():
    u = make_uniform(2, 2)
    w1 = l1a_row(u, 0.5, 1).weights
    assert w1[0] == l1_row(u, 0.5, 1).weights[0] / 2
    w2 = l1a_row(u, 0.5, 2).weights
    a = l1_row(u, 0.5, 2).weights
    assert w2[1] == pytest.approx(0.5 * (a[1] + w1[0] * 2), rel=1e-14)
    assert w2[1] == pytest.approx(0.5 * (0.467390 + 1.128379), abs=1e-6)
    m = make_random(1, 15, seed=4)
    for n in range(1, 16):
        assert l1a_row(m, 0.7, n).weights[0] == l1_row(m, 0.7, n).weights[0] / 2


def test_auxiliary_rows():
    r = auxiliary_row(KernelRow(2, Family.L1H, np.array([0.8, 0.5])))
    assert r.family is Family.AUX_L1H
    np.testing.assert_array_equal(r.weights, [1.6, 0.5])
    r1 = auxiliary_row(KernelRow(1, Family.L1A, np.array([0.3])))
    assert r1.family is Family.AUX_L1A and r1.weights[0] == 0.6
    with pytest.raises(UsageError):
        auxiliary_row(KernelRow(1, Family.L1, np.array([1.0])))
    for seed in range(5):
        m = make_random(1, 40, seed)
        for n in range(2, 41):
            w = kernel_row("AuxL1h", m, 0.3, n).weights
            assert w[0] - w[1] > 0


def test_alpha_bounds():
    m = make_uniform(1, 4)
    for a in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ParameterError):
            l1_row(m, a, 1)
    with pytest.raises(ParameterError):
        l1_row(m, 0.5, 5)


def test_l1_rows_positive_and_decreasing():
    for seed in range(20):
        m = make_random(1, 60, seed)
        for n in range(1, 61):
            w = l1_row(m, 0.1 + 0.04 * seed, n).weights
            assert np.all(w > 0)
            assert np.all(np.diff(w) < 0)


def test_l1a_tail_monotone():
    for seed in range(5):
        m = make_random(1, 50, seed)
        for n in range(3, 51):
            w = l1a_row(m, 0.6, n).weights
            assert np.all(w[1:] > 0) and np.all(np.diff(w[1:]) < 0)


def test_table_caching_and_matrix():
    m = make_random(1, 10, seed=1)
    t = KernelTable("L1h", 0.4, m)
    A = t.matrix(10)
    for n in range(1, 11):
        np.testing.assert_array_equal(A[n - 1, :n][::-1], l1h_row(m, 0.4, n).weights)
    assert np.all(np.triu(A, 1) == 0)
    # extension keeps earlier rows
    t2 = KernelTable("L1", 0.4, m.prefix(4))
    w = np.array(t2.weights(4))
    t2.extend_mesh(m)
    np.testing.assert_array_equal(t2.weights(4), w)
    assert t2.weights(10).size == 10
    with pytest.raises(ParameterError):
        t2.extend_mesh(make_uniform(1, 20))


def test_doc_against_matrix_inverse():
    m = make_random(1, 30, seed=9)
    for fam in ("L1", "AuxL1h", "L1h", "L1a"):
        t = KernelTable(fam, 0.6, m)
        comp = companion_kernels(t, 30)
        Ainv = np.linalg.inv(t.matrix(30))
        np.testing.assert_allclose(comp.doc, Ainv, rtol=1e-10, atol=1e-13)
        np.testing.assert_allclose(comp.dcc, np.tril(np.cumsum(Ainv, axis=0)), rtol=1e-10, atol=1e-13)


def test_doc_examples():
    u = make_uniform(2, 2)
    t = KernelTable("L1", 0.5, u)
    comp = companion_kernels(t, 2)
    a01, a02, a12 = t.lag0(1), t.lag0(2), t.weights(2)[1]
    assert comp.theta(1, 1) == pytest.approx(1 / a01)
    assert comp.theta(2, 1) == pytest.approx(-a12 / (a01 * a02), rel=1e-13)
    assert comp.theta(2, 1) == pytest.approx(-(math.sqrt(2) - 1) * math.gamma(1.5), rel=1e-12)
    assert comp.theta(2, 1) == pytest.approx(-0.367087, abs=1e-6)
    assert comp.p(1, 1) == pytest.approx(1 / a01)
    for n in (1, 2):
        assert comp.p(n, n) == comp.theta(n, n)


def test_doc_dcc_alpha_limit():
    m = make_random(1, 25, seed=5)
    t = KernelTable("L1", A_LIM, m)
    comp = companion_kernels(t, 25)
    for n in range(1, 26):
        assert comp.theta(n, n) == pytest.approx(m.tau(n), rel=1e-6)
        for k in range(1, n):
            assert abs(comp.theta(n, k)) < 1e-6
            assert comp.p(n, k) == pytest.approx(m.tau(k), rel=1e-6)


def test_identities_and_sign_patterns():
    for seed in range(6):
        m = make_random(1, 80, seed)
        for fam in ("L1", "AuxL1h"):
            t = KernelTable(fam, 0.2 + 0.1 * seed, m)
            comp = companion_kernels(t, 80)
            A = t.matrix(80)
            np.testing.assert_allclose(comp.doc @ A, np.eye(80), atol=1e-11)
            np.testing.assert_allclose(comp.dcc @ A, np.tril(np.ones((80, 80))), atol=1e-11)
            theta, p = comp.doc, comp.dcc
            assert np.all(np.diag(theta) > 0)
            assert np.all(theta[np.tril_indices(80, -1)] < 0)
            assert np.all(theta.sum(axis=1) > 0)
            assert np.all(p[np.tril_indices(80)] >= 0)
            # theta_{n-k}^{(n)} = p_{n-k}^{(n)} - p_{n-1-k}^{(n-1)}
            np.testing.assert_allclose(theta[1:, :-1], p[1:, :-1] - p[:-1, :-1], atol=1e-12)


def test_dcc_needs_available_rows():
    t = KernelTable("L1", 0.5, make_uniform(1, 5))
    doc = doc_kernels(t, 3)
    with pytest.raises(UsageError):
        dcc_kernels(doc, 4)


def test_singular_kernel():
    t = KernelTable("L1", 0.5, make_uniform(1, 3))
    t._fill(3)
    t._A[2, 2] = 0.0
    with pytest.raises(SingularKernelError):
        t.doc_row(3)


def test_criteria_examples():
    for seed in range(10):
        m = make_random(1, 50, seed)
        assert check_criteria(KernelTable("L1", 0.5, m), 50, "nonuniform").passed
        assert check_criteria(KernelTable("AuxL1h", 0.5, m), 50, "nonuniform").passed
    rep = check_criteria(KernelTable("L1h", 0.1, make_uniform(1, 20)), 20, "nonuniform")
    dec = rep.condition("decreasing")
    assert not dec.passed and dec.first_violation[1] == 1
    rep_u = check_criteria(KernelTable("L1h", 0.1, make_uniform(1, 20)), 20, "uniform")
    assert rep_u.condition("decreasing").first_violation == (20, 1)
    fails = 0
    for seed in range(10):
        r = check_criteria(KernelTable("AuxL1a", 0.5, make_random(1, 40, seed)), 40, "nonuniform")
        c = r.condition("log-convex")
        fails += (not c.passed) and c.first_violation[1] == 1
    assert fails > 0
    d = rep.to_dict()
    assert d["first_violation"]["condition"] == "decreasing"
    assert set(d["passes"]) | set(d["fails"]) == {"positive", "decreasing", "cross-decreasing", "log-convex"}


def test_criteria_tie_flag():
    t = KernelTable("L1", 0.5, make_uniform(1, 4))
    t._fill(4)
    t._A[4, 3] = t._A[4, 4]  # make a_1^{(4)} == a_0^{(4)}
    rep = check_criteria(t, 4, "nonuniform")
    c = rep.condition("decreasing")
    assert not c.passed and c.tie and c.first_violation == (4, 1)


def test_auxl1a_ratio_restriction_and_uniform_convexity():
    for alpha in (0.3, 0.7):
        rmax = (1 + alpha) ** (1 / alpha)
        m = make_fixed_ratio(1, 40, 0.95 * rmax)
        for n in range(2, 41):
            w = kernel_row("AuxL1a", m, alpha, n).weights
            assert w[0] > w[1]
    u = make_uniform(1, 30)
    for n in range(3, 31):
        w = kernel_row("AuxL1a", u, 0.5, n).weights
        a = l1_row(u, 0.5, n).weights
        assert w[0] - 2 * w[1] + w[2] < 0
        assert w[0] - 2 * w[1] + w[2] == pytest.approx(-0.5 * (a[1] - a[2]), rel=1e-10)


def test_omega_values():
    assert float(omega(1.0, 0.5)) == pytest.approx(1.0)
    assert float(omega(2.0, 3.0)) == pytest.approx(3.0)
    assert float(omega(0.5, 1.0)) == pytest.approx(1 / math.sqrt(math.pi))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), alpha=st.floats(0.05, 0.95), n=st.integers(2, 60))
def test_l1_criteria_property(seed, alpha, n):
    m = make_random(1, n, seed)
    assert check_criteria(KernelTable("L1", alpha, m), n).passed
    assert check_criteria(KernelTable("AuxL1h", alpha, m), n).passed
