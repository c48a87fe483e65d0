"""Geometry layer: retraction axioms, distance identities, metric
orthogonality of the trace split."""

import numpy as np
import pytest
import scipy.linalg

from elligrad import (
    MetricWeights,
    TangentVector,
    ThetaParams,
    metric_inner,
    metric_norm_sq,
    product_distance_sq,
    product_retract,
    spd_distance_sq,
    spd_exp,
    split_parallel_perp,
    tangent_distance_form,
)
from elligrad.manifold import UNIT_WEIGHTS

from conftest import random_spd


def random_sym(m, rng, scale=1.0):
    a = rng.standard_normal((m, m)) * scale
    return 0.5 * (a + a.T)


W = MetricWeights(1.0, 0.5, 0.1, 2.0)


def test_spd_exp_identity_base_is_expm():
    rng = np.random.default_rng(1)
    u = random_sym(4, rng)
    np.testing.assert_allclose(
        spd_exp(np.eye(4), u), scipy.linalg.expm(u), rtol=1e-12, atol=1e-12
    )


def test_spd_exp_matches_nonsymmetric_route():
    rng = np.random.default_rng(2)
    for m in (2, 5):
        sigma = random_spd(m, rng)
        u = random_sym(m, rng)
        ref = sigma @ scipy.linalg.expm(np.linalg.solve(sigma, u))
        got = spd_exp(sigma, u)
        np.testing.assert_allclose(got, ref, rtol=1e-10, atol=1e-12)
        np.testing.assert_array_equal(got, got.T)
        assert np.all(np.linalg.eigvalsh(got) > 0)


def test_spd_exp_retraction_axioms():
    rng = np.random.default_rng(3)
    sigma = 0.5 * (lambda s: s + s.T)(random_spd(3, rng))
    u = random_sym(3, rng)
    np.testing.assert_array_equal(spd_exp(sigma, np.zeros((3, 3))), sigma)
    t = 1e-6
    deriv = (spd_exp(sigma, t * u) - spd_exp(sigma, -t * u)) / (2 * t)
    np.testing.assert_allclose(deriv, u, rtol=1e-7, atol=1e-8)


def test_spd_exp_rejects_asymmetric_and_nonspd():
    with pytest.raises(ValueError):
        spd_exp(np.eye(2), np.array([[0.0, 1.0], [0.5, 0.0]]))
    with pytest.raises(np.linalg.LinAlgError):
        spd_exp(np.diag([1.0, 1e-16]), np.eye(2))


def test_spd_distance_known_value_and_invariance():
    # eigenvalues of Sigma1^(-1) Sigma2 are (e, 1) -> logs (1, 0)
    d2 = spd_distance_sq(np.eye(2), np.diag([np.e, 1.0]), W)
    assert d2 == pytest.approx(W.i_1 + W.i_2, rel=1e-12)

    rng = np.random.default_rng(4)
    s1, s2 = random_spd(4, rng), random_spd(4, rng)
    a = rng.standard_normal((4, 4))
    cong = lambda s: a @ s @ a.T
    assert spd_distance_sq(cong(s1), cong(s2), W) == pytest.approx(
        spd_distance_sq(s1, s2, W), rel=1e-9
    )
    assert spd_distance_sq(s1, s2, W) == pytest.approx(
        spd_distance_sq(s2, s1, W), rel=1e-12
    )
    assert spd_distance_sq(s1, s1, W) == pytest.approx(0.0, abs=1e-20)


def test_spd_distance_exp_consistency():
    # d^2(Sigma, exp_Sigma(U)) from the eigenvalues of Sigma^(-1) U
    rng = np.random.default_rng(5)
    sigma = random_spd(3, rng)
    u = random_sym(3, rng)
    kappa = np.linalg.eigvals(np.linalg.solve(sigma, u)).real
    want = W.i_1 * (kappa**2).sum() + W.i_2 * kappa.sum() ** 2
    got = spd_distance_sq(sigma, spd_exp(sigma, u), W)
    assert got == pytest.approx(want, rel=1e-9)


def test_negative_i2_rejected_when_not_a_metric():
    # i_1 + m i_2 < 0 makes the form indefinite in dimension m = 3
    bad = MetricWeights(1.0, 0.3, -0.2, 1.0)
    s2 = np.diag(np.exp([1.0, 1.0, 1.0]))
    with pytest.raises(ValueError, match="metric"):
        spd_distance_sq(np.eye(3), s2, bad)


def test_product_retract_and_distance():
    rng = np.random.default_rng(6)
    m = 3
    theta = ThetaParams(rng.standard_normal(m), random_spd(m, rng), 1.5)
    u = TangentVector(rng.standard_normal(m), random_sym(m, rng, 0.5), 0.7)
    out = product_retract(theta, u)
    np.testing.assert_allclose(out.mu, theta.mu + u.u_mu)
    assert out.beta == pytest.approx(theta.beta * np.exp(0.7 / theta.beta))
    # beta stays positive under arbitrarily large negative shape moves
    crash = product_retract(theta, TangentVector(np.zeros(m), np.zeros((m, m)), -1e4))
    assert crash.beta > 0.0

    d2 = product_distance_sq(theta, out, W)
    parts = (
        W.i_mu * float(u.u_mu @ u.u_mu)
        + spd_distance_sq(theta.sigma, out.sigma, W)
        + W.i_beta * float(np.log(out.beta / theta.beta)) ** 2
    )
    assert d2 == pytest.approx(parts, rel=1e-12)
    assert product_distance_sq(theta, theta, W) == pytest.approx(0.0, abs=1e-18)
    assert d2 == pytest.approx(product_distance_sq(out, theta, W), rel=1e-9)


def test_tangent_distance_form_is_exact_along_retraction():
    rng = np.random.default_rng(7)
    m = 4
    theta = ThetaParams(rng.standard_normal(m), random_spd(m, rng), 0.8)
    for _ in range(5):
        u = TangentVector(rng.standard_normal(m), random_sym(m, rng), rng.standard_normal())
        q = tangent_distance_form(theta, u, W)
        for t in (1e-3, 0.3, 1.7):
            d2 = product_distance_sq(theta, product_retract(theta, u.scaled(t)), W)
            assert d2 == pytest.approx(t * t * q, rel=1e-8)


def test_split_parallel_perp_orthogonality():
    rng = np.random.default_rng(8)
    m = 5
    sigma = random_spd(m, rng)
    mat = random_sym(m, rng)
    par, perp = split_parallel_perp(mat, sigma)
    np.testing.assert_allclose(par + perp, mat, rtol=1e-12)
    assert np.trace(np.linalg.solve(sigma, perp)) == pytest.approx(0.0, abs=1e-10)
    # the two parts are orthogonal under the metric regardless of weights
    theta = ThetaParams(np.zeros(m), sigma, 1.0)
    zero = np.zeros(m)
    inner = metric_inner(
        theta,
        TangentVector(zero, par, 0.0),
        TangentVector(zero, perp, 0.0),
        MetricWeights(1.0, 0.7, -0.05, 1.0),
    )
    assert inner == pytest.approx(0.0, abs=1e-10)


def test_metric_norm_expansions():
    rng = np.random.default_rng(9)
    m = 3
    theta = ThetaParams(rng.standard_normal(m), random_spd(m, rng), 2.0)
    u = TangentVector(rng.standard_normal(m), random_sym(m, rng), -0.4)
    inv = np.linalg.inv(theta.sigma)
    a = inv @ u.u_sigma
    want = (
        W.i_mu * u.u_mu @ inv @ u.u_mu
        + W.i_1 * np.trace(a @ a)
        + W.i_2 * np.trace(a) ** 2
        + W.i_beta * u.u_beta**2
    )
    assert metric_norm_sq(theta, u, W) == pytest.approx(float(want), rel=1e-10)


def test_unit_weights_measure_raw_movement():
    s1 = np.eye(2)
    s2 = np.diag([np.exp(2.0), 1.0])
    assert spd_distance_sq(s1, s2, UNIT_WEIGHTS) == pytest.approx(4.0, rel=1e-12)
