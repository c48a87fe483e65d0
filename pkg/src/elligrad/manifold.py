"""Product-manifold geometry for ``theta = (mu, Sigma, beta)``.

The parameter space is ``R^m x P_m x R_+`` with ``P_m`` the symmetric
positive definite matrices.  The Fisher metric of an elliptical family is
a weighted product metric

    <u, v> = i_mu u_mu' Sigma^(-1) v_mu
             + i_1 tr(Sigma^(-1) U Sigma^(-1) V)
             + i_2 tr(Sigma^(-1) U) tr(Sigma^(-1) V)
             + i_beta u_beta v_beta

with scalar weights collected in :class:`MetricWeights`.  This module
implements the exponential retractions of the three factors, the closed
form squared geodesic distances, and tangent-space inner products.  All
matrix functions go through symmetric eigendecompositions; an eigenvalue
at or below ``1e-14`` times the largest is treated as a hard failure
rather than being clipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .models import SYMMETRY_RTOL, ThetaParams

__all__ = [
    "TangentVector",
    "MetricWeights",
    "spd_exp",
    "spd_distance_sq",
    "product_retract",
    "product_distance_sq",
    "split_parallel_perp",
    "metric_inner",
    "metric_norm_sq",
    "tangent_distance_form",
]

EIG_FLOOR_REL = 1e-14


def _check_symmetric(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square, got shape {mat.shape}")
    scale = np.abs(mat).max()
    if scale > 0.0 and np.abs(mat - mat.T).max() > SYMMETRY_RTOL * scale:
        raise ValueError(f"{name} is not symmetric to 1e-12 relative tolerance")
    return 0.5 * (mat + mat.T)


def _eigh_spd(mat: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix required to be SPD."""
    evals, evecs = np.linalg.eigh(mat)
    if evals[-1] <= 0.0 or evals[0] <= EIG_FLOOR_REL * evals[-1]:
        raise np.linalg.LinAlgError(
            f"{name} is not positive definite within the eigenvalue floor "
            f"(min {evals[0]:.3e}, max {evals[-1]:.3e})"
        )
    return evals, evecs


@dataclass(frozen=True)
class TangentVector:
    """Tangent vector ``(u_mu, u_sigma, u_beta)`` at some ``theta``.

    ``u_sigma`` must be symmetric; out-of-scope components are represented
    by exact zeros.
    """

    u_mu: np.ndarray
    u_sigma: np.ndarray
    u_beta: float

    def __post_init__(self) -> None:
        u_mu = np.asarray(self.u_mu, dtype=np.float64).copy()
        if u_mu.ndim != 1:
            raise ValueError(f"u_mu must be a vector, got shape {u_mu.shape}")
        u_sigma = _check_symmetric(self.u_sigma, "u_sigma")
        if u_sigma.shape[0] != u_mu.shape[0]:
            raise ValueError("u_mu and u_sigma dimensions disagree")
        u_beta = float(self.u_beta)
        if not (
            np.all(np.isfinite(u_mu))
            and np.all(np.isfinite(u_sigma))
            and np.isfinite(u_beta)
        ):
            raise ValueError("non-finite entries in tangent vector")
        u_mu.setflags(write=False)
        u_sigma.setflags(write=False)
        object.__setattr__(self, "u_mu", u_mu)
        object.__setattr__(self, "u_sigma", u_sigma)
        object.__setattr__(self, "u_beta", u_beta)

    def scaled(self, s: float) -> "TangentVector":
        return TangentVector(s * self.u_mu, s * self.u_sigma, s * self.u_beta)


@dataclass(frozen=True)
class MetricWeights:
    """Scalar weights of the product metric and distances.

    ``i_mu``, ``i_1`` and ``i_beta`` must be positive.  ``i_2`` may be
    negative (the generalized Gaussian family below the Gaussian member
    has ``i_2 < 0``); positive definiteness of the scatter block then
    rests on ``i_1 + m i_2 > 0``, which is checked where the dimension is
    known.
    """

    i_mu: float
    i_1: float
    i_2: float
    i_beta: float

    def __post_init__(self) -> None:
        for name in ("i_mu", "i_1", "i_beta"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0.0:
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not np.isfinite(float(self.i_2)):
            raise ValueError("i_2 must be finite")


#: Unit weights, used to measure raw iterate movement (e.g. fixed point
#: stopping rules) without reference to a model.
UNIT_WEIGHTS = MetricWeights(1.0, 1.0, 0.0, 1.0)


def spd_exp(sigma: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Exponential retraction ``Sigma -> Sigma^(1/2) expm(Sigma^(-1/2) U
    Sigma^(-1/2)) Sigma^(1/2)`` on the SPD cone.

    Equals ``Sigma expm(Sigma^(-1) U)``; the congruence form keeps every
    intermediate symmetric.  The result is symmetric positive definite for
    any symmetric ``u``, and ``u = 0`` returns ``sigma`` exactly.
    """
    sigma = _check_symmetric(sigma, "sigma")
    u = _check_symmetric(u, "u")
    if not np.any(u):
        return sigma
    evals, evecs = _eigh_spd(sigma, "sigma")
    root = np.sqrt(evals)
    s_half = (evecs * root) @ evecs.T
    s_inv_half = (evecs / root) @ evecs.T
    inner = s_inv_half @ u @ s_inv_half
    inner = 0.5 * (inner + inner.T)
    w, v = np.linalg.eigh(inner)
    expd = (v * np.exp(w)) @ v.T
    out = s_half @ expd @ s_half
    return 0.5 * (out + out.T)


def spd_distance_sq(sigma1: np.ndarray, sigma2: np.ndarray, w: MetricWeights) -> float:
    """Squared geodesic distance between SPD matrices under the weighted
    affine-invariant metric.

    With ``lambda_i`` the eigenvalues of ``Sigma_1^(-1/2) Sigma_2
    Sigma_1^(-1/2)``,

        d^2 = i_1 sum_i log(lambda_i)^2 + i_2 (sum_i log(lambda_i))^2.

    Symmetric in its arguments and zero iff the matrices coincide.
    """
    sigma1 = _check_symmetric(sigma1, "sigma1")
    sigma2 = _check_symmetric(sigma2, "sigma2")
    _eigh_spd(sigma1, "sigma1")
    evals = scipy.linalg.eigh(sigma2, sigma1, eigvals_only=True)
    if evals[-1] <= 0.0 or evals[0] <= EIG_FLOOR_REL * evals[-1]:
        raise np.linalg.LinAlgError("sigma2 is not positive definite")
    logs = np.log(evals)
    d2 = w.i_1 * float(logs @ logs) + w.i_2 * float(logs.sum()) ** 2
    if d2 < 0.0:
        if d2 < -1e-10 * max(1.0, float(logs @ logs)):
            raise ValueError(
                "negative squared distance; weights do not define a metric "
                f"in dimension {sigma1.shape[0]}"
            )
        d2 = 0.0
    return d2


def product_retract(theta: ThetaParams, u: TangentVector) -> ThetaParams:
    """Move from ``theta`` along ``u`` with the factorwise exponentials.

    ``mu`` moves additively, ``Sigma`` by :func:`spd_exp`, and ``beta`` by
    ``beta exp(u_beta / beta)`` so positivity is automatic.
    """
    if u.u_mu.shape[0] != theta.m:
        raise ValueError("tangent dimension does not match theta")
    # exponent clamp keeps beta strictly positive and finite in floating
    # point for arbitrarily large shape moves
    e = min(max(u.u_beta / theta.beta, -690.0), 690.0)
    return ThetaParams(
        mu=theta.mu + u.u_mu,
        sigma=spd_exp(theta.sigma, u.u_sigma),
        beta=theta.beta * float(np.exp(e)),
    )


def product_distance_sq(
    theta1: ThetaParams, theta2: ThetaParams, w: MetricWeights
) -> float:
    """Squared distance on the product space,

        d^2 = i_mu ||mu_1 - mu_2||^2
              + d_spd^2(Sigma_1, Sigma_2)
              + i_beta log(beta_2 / beta_1)^2.

    The location term is Euclidean; the scatter term is the weighted
    affine-invariant distance; the shape term is the hyperbolic distance
    on the positive half line.
    """
    if theta1.m != theta2.m:
        raise ValueError("parameter dimensions disagree")
    diff = theta1.mu - theta2.mu
    return (
        w.i_mu * float(diff @ diff)
        + spd_distance_sq(theta1.sigma, theta2.sigma, w)
        + w.i_beta * float(np.log(theta2.beta / theta1.beta)) ** 2
    )


def split_parallel_perp(mat: np.ndarray, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split a symmetric matrix into its component along ``Sigma`` and the
    trace-orthogonal remainder.

    The parallel part is ``(tr(Sigma^(-1) M) / m) Sigma``; the
    perpendicular part satisfies ``tr(Sigma^(-1) perp) = 0``.  The split
    diagonalizes the scatter block of the metric, which acts by ``1/(2
    j_1)`` off the ``Sigma`` ray and ``1/(2 j_2)`` along it.
    """
    mat = _check_symmetric(mat, "mat")
    sigma = _check_symmetric(sigma, "sigma")
    cho = scipy.linalg.cho_factor(sigma)
    trace_ratio = float(np.trace(scipy.linalg.cho_solve(cho, mat))) / sigma.shape[0]
    par = trace_ratio * sigma
    return par, mat - par


def metric_inner(
    theta: ThetaParams, u: TangentVector, v: TangentVector, w: MetricWeights
) -> float:
    """Weighted product-metric inner product of two tangents at ``theta``."""
    cho = scipy.linalg.cho_factor(theta.sigma)
    a = scipy.linalg.cho_solve(cho, u.u_sigma)
    b = scipy.linalg.cho_solve(cho, v.u_sigma)
    mu_term = w.i_mu * float(u.u_mu @ scipy.linalg.cho_solve(cho, v.u_mu))
    sig_term = w.i_1 * float(np.einsum("ij,ji->", a, b)) + w.i_2 * float(
        np.trace(a)
    ) * float(np.trace(b))
    return mu_term + sig_term + w.i_beta * u.u_beta * v.u_beta


def metric_norm_sq(theta: ThetaParams, u: TangentVector, w: MetricWeights) -> float:
    """Squared metric norm; nonnegative whenever the weights are a metric."""
    n2 = metric_inner(theta, u, u, w)
    if n2 < 0.0:
        if n2 < -1e-10:
            raise ValueError("negative squared norm; invalid metric weights")
        n2 = 0.0
    return n2


def tangent_distance_form(theta: ThetaParams, u: TangentVector, w: MetricWeights) -> float:
    """Quadratic form giving ``product_distance_sq(theta, retract(theta,
    t u), w) = t^2 form(u)`` exactly for every ``t``:

        i_mu ||u_mu||^2 + i_1 tr((Sigma^(-1) U)^2)
        + i_2 tr(Sigma^(-1) U)^2 + i_beta (u_beta / beta)^2.

    Exactness holds because the location distance is Euclidean with an
    additive retraction while the other two factors retract along their
    own geodesics; it makes this the natural way to scale a tangent to a
    target distance.
    """
    cho = scipy.linalg.cho_factor(theta.sigma)
    a = scipy.linalg.cho_solve(cho, u.u_sigma)
    return (
        w.i_mu * float(u.u_mu @ u.u_mu)
        + w.i_1 * float(np.einsum("ij,ji->", a, a))
        + w.i_2 * float(np.trace(a)) ** 2
        + w.i_beta * (u.u_beta / theta.beta) ** 2
    )
