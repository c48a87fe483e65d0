"""Density layer: derivative consistency, frozen constants, and the
reduction to classical special cases."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from elligrad import (
    EstimationScope,
    ModelKind,
    ThetaParams,
    h_derivs,
    log_density,
    log_normalizer,
    mahalanobis_delta,
)
from elligrad.models import d2h_dbeta2, mean_nll

from conftest import central_diff, random_spd

MODELS = (ModelKind.MGGD, ModelKind.STUDENT_T)


# ---------------------------------------------------------------------------
# h and its derivatives against log-scaled central differences


@settings(max_examples=200, deadline=None)
@given(
    log_delta=st.floats(-6.0, 4.0),
    beta=st.floats(0.15, 8.0),
    model_idx=st.integers(0, 1),
    m=st.sampled_from([1, 2, 5, 10]),
)
def test_h_derivs_match_finite_differences(log_delta, beta, model_idx, m):
    model = MODELS[model_idx]
    delta = float(np.exp(log_delta))
    d = h_derivs(delta, beta, model, m)
    step = 1e-5

    # d/d log(delta) h = delta * dh_ddelta
    fd = central_diff(lambda s: h_derivs(np.exp(s), beta, model, m).h, log_delta, step)
    assert fd == pytest.approx(delta * d.dh_ddelta, rel=1e-6, abs=1e-9)

    fd2 = central_diff(
        lambda s: h_derivs(np.exp(s), beta, model, m).dh_ddelta, log_delta, step
    )
    assert fd2 == pytest.approx(delta * d.d2h_ddelta2, rel=1e-6, abs=1e-9)

    log_beta = np.log(beta)
    fdb = central_diff(
        lambda t: h_derivs(delta, np.exp(t), model, m).h, log_beta, step
    )
    assert fdb == pytest.approx(beta * d.dh_dbeta, rel=1e-6, abs=1e-9)

    fdb2 = central_diff(
        lambda t: h_derivs(delta, np.exp(t), model, m).dh_dbeta, log_beta, step
    )
    want = beta * d2h_dbeta2(delta, beta, model, m)
    assert fdb2 == pytest.approx(want, rel=1e-5, abs=1e-8)


def test_dh_ddelta_negative_on_positive_radii():
    rng = np.random.default_rng(0)
    for model in MODELS:
        deltas = np.exp(rng.uniform(-8, 4, size=64))
        for beta in (0.2, 1.0, 3.0):
            d = h_derivs(deltas, beta, model, 3)
            assert np.all(d.dh_ddelta < 0.0)


def test_mggd_singular_second_derivative_raises():
    for beta in (0.4, 1.5):
        with pytest.raises(ValueError, match="singular"):
            h_derivs(0.0, beta, ModelKind.MGGD, 3)
    # beta = 1 (coefficient vanishes) and beta >= 2 are fine at the origin
    assert h_derivs(0.0, 1.0, ModelKind.MGGD, 3).d2h_ddelta2 == 0.0
    assert h_derivs(0.0, 2.0, ModelKind.MGGD, 3).d2h_ddelta2 == pytest.approx(-1.0)
    assert h_derivs(0.0, 3.0, ModelKind.STUDENT_T, 3).dh_ddelta == pytest.approx(-1.0)


def test_vectorized_matches_scalar():
    deltas = np.array([0.3, 1.0, 7.5])
    for model in MODELS:
        batch = h_derivs(deltas, 1.7, model, 4)
        for i, dv in enumerate(deltas):
            one = h_derivs(float(dv), 1.7, model, 4)
            assert batch.h[i] == one.h
            assert batch.dh_ddelta[i] == one.dh_ddelta
            assert batch.dh_dbeta[i] == one.dh_dbeta


# ---------------------------------------------------------------------------
# normalizing constants: frozen values and derivative consistency


def test_log_normalizer_frozen_values():
    # Gaussian: c = (2 pi)^(-1/2) in one dimension.
    alpha, _, _ = log_normalizer(1.0, 1, ModelKind.MGGD)
    assert alpha == pytest.approx(-0.5 * np.log(2.0 * np.pi), abs=1e-12)
    # Cauchy: c = 1/pi.
    alpha, _, _ = log_normalizer(1.0, 1, ModelKind.STUDENT_T)
    assert alpha == pytest.approx(-np.log(np.pi), abs=1e-12)
    # MGGD m=2, beta=1/2: c = 1/(8 pi).
    alpha, _, _ = log_normalizer(0.5, 2, ModelKind.MGGD)
    assert alpha == pytest.approx(-np.log(8.0 * np.pi), abs=1e-12)
    # Student-T m=2, beta=3: c = 1/(2 pi).
    alpha, _, _ = log_normalizer(3.0, 2, ModelKind.STUDENT_T)
    assert alpha == pytest.approx(-np.log(2.0 * np.pi), abs=1e-12)


@pytest.mark.parametrize("model", MODELS)
@pytest.mark.parametrize("m", [1, 3, 10])
@pytest.mark.parametrize("beta", [0.3, 1.0, 2.5, 6.0])
def test_log_normalizer_derivatives(model, m, beta):
    step = 1e-5 * beta
    _, dalpha, d2alpha = log_normalizer(beta, m, model)
    fd1 = central_diff(lambda b: log_normalizer(b, m, model)[0], beta, step)
    fd2 = central_diff(lambda b: log_normalizer(b, m, model)[1], beta, step)
    assert fd1 == pytest.approx(dalpha, rel=1e-7, abs=1e-10)
    assert fd2 == pytest.approx(d2alpha, rel=1e-6, abs=1e-9)


# ---------------------------------------------------------------------------
# full log density against independent references


def test_log_density_matches_scipy_gaussian():
    rng = np.random.default_rng(11)
    for m in (1, 3, 6):
        mu = rng.standard_normal(m)
        sigma = random_spd(m, rng)
        theta = ThetaParams(mu, sigma, 1.0)
        x = rng.standard_normal((40, m))
        ours = log_density(x, theta, ModelKind.MGGD)
        ref = stats.multivariate_normal(mu, sigma).logpdf(x)
        np.testing.assert_allclose(ours, ref, rtol=1e-12, atol=1e-12)


def test_log_density_matches_scipy_student_t():
    rng = np.random.default_rng(12)
    for m, dof in ((2, 3.0), (4, 7.5), (1, 1.0)):
        mu = rng.standard_normal(m)
        sigma = random_spd(m, rng)
        theta = ThetaParams(mu, sigma, dof)
        x = rng.standard_normal((40, m))
        ours = log_density(x, theta, ModelKind.STUDENT_T)
        ref = stats.multivariate_t(mu, sigma, df=dof).logpdf(x)
        np.testing.assert_allclose(ours, ref, rtol=1e-12, atol=1e-12)


def test_mahalanobis_delta_forms():
    rng = np.random.default_rng(13)
    m = 5
    theta = ThetaParams(rng.standard_normal(m), random_spd(m, rng), 2.0)
    x = rng.standard_normal((7, m))
    inv = np.linalg.inv(theta.sigma)
    want = np.array([(r - theta.mu) @ inv @ (r - theta.mu) for r in x])
    np.testing.assert_allclose(mahalanobis_delta(x, theta), want, rtol=1e-10)
    assert mahalanobis_delta(x[0], theta) == pytest.approx(want[0], rel=1e-10)
    assert mahalanobis_delta(theta.mu, theta) == 0.0


def test_mean_nll_is_mean_of_log_density():
    rng = np.random.default_rng(14)
    theta = ThetaParams(rng.standard_normal(3), random_spd(3, rng), 1.4)
    x = rng.standard_normal((25, 3))
    want = -np.mean(log_density(x, theta, ModelKind.MGGD))
    assert mean_nll(x, theta, ModelKind.MGGD) == pytest.approx(want, rel=1e-14)


# ---------------------------------------------------------------------------
# parameter validation


def test_theta_params_validation():
    eye = np.eye(2)
    with pytest.raises(ValueError, match="symmetric"):
        ThetaParams(np.zeros(2), np.array([[1.0, 0.3], [0.1, 1.0]]), 1.0)
    with pytest.raises(np.linalg.LinAlgError):
        ThetaParams(np.zeros(2), -eye, 1.0)
    with pytest.raises(ValueError, match="beta"):
        ThetaParams(np.zeros(2), eye, 0.0)
    with pytest.raises(ValueError, match="beta"):
        ThetaParams(np.zeros(2), eye, -1.0)
    with pytest.raises(ValueError):
        ThetaParams(np.zeros(2), np.eye(3), 1.0)
    theta = ThetaParams(np.zeros(2), eye, 1.0)
    with pytest.raises(ValueError):
        theta.mu[0] = 5.0  # stored arrays are read-only


def test_scope_flags():
    assert EstimationScope.SIGMA_ONLY.free_sigma
    assert not EstimationScope.SIGMA_ONLY.free_mu
    assert not EstimationScope.MU_SIGMA.free_beta
    assert EstimationScope.MU_SIGMA.free_mu
    assert EstimationScope.MU_SIGMA_BETA.free_beta
