"""Elliptically contoured densities and their radial derivatives.

A density in this family has the form

    p(x; mu, Sigma, beta) = c(beta) |Sigma|^(-1/2) g(delta, beta),

where ``delta = (x - mu)' Sigma^(-1) (x - mu)`` is the squared Mahalanobis
radius and ``g`` is a radial generator.  Two generators are supported:

* ``MGGD``      multivariate generalized Gaussian, ``g = exp(-delta^beta / 2)``
* ``STUDENT_T`` multivariate t with ``beta`` degrees of freedom,
  ``g = (1 + delta/beta)^(-(beta + m)/2)``

Everything downstream (metrics, gradients, estimators) is written in terms
of ``h = log g`` and ``alpha = log c``, so this module exposes those two
functions together with the partial derivatives the gradient formulas need.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln, polygamma, psi

__all__ = [
    "ModelKind",
    "EstimationScope",
    "ThetaParams",
    "HDerivs",
    "mahalanobis_delta",
    "h_derivs",
    "d2h_dbeta2",
    "log_normalizer",
    "log_density",
    "mean_nll",
]

# Floor applied to delta inside power evaluations so that delta = 0 coming
# from degenerate samples does not produce 0**negative = inf where the
# expression itself has a finite limit.
DELTA_FLOOR = 1e-300

# Relative symmetry tolerance for covariance-like matrices.
SYMMETRY_RTOL = 1e-12


class ModelKind(Enum):
    """Radial generator selector."""

    MGGD = "mggd"
    STUDENT_T = "t"


class EstimationScope(Enum):
    """Which parameter blocks an estimator is allowed to move.

    Out-of-scope blocks stay fixed at their initial values, which act as
    known quantities.  The scatter matrix is free in every scope.
    """

    SIGMA_ONLY = "sigma"
    MU_SIGMA = "mu-sigma"
    MU_SIGMA_BETA = "full"

    @property
    def free_mu(self) -> bool:
        return self is not EstimationScope.SIGMA_ONLY

    @property
    def free_sigma(self) -> bool:
        return True

    @property
    def free_beta(self) -> bool:
        return self is EstimationScope.MU_SIGMA_BETA


@dataclass(frozen=True)
class ThetaParams:
    """Parameter point ``theta = (mu, Sigma, beta)``.

    ``mu`` is the location vector, ``sigma`` the positive definite scatter
    matrix and ``beta`` the positive shape parameter (exponent for MGGD,
    degrees of freedom for Student-T).  Construction validates symmetry to
    ``1e-12`` relative, positive definiteness through a Cholesky
    factorization, and ``beta > 0``; the stored arrays are defensive
    read-only copies.
    """

    mu: np.ndarray
    sigma: np.ndarray
    beta: float

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=np.float64).copy()
        sigma = np.asarray(self.sigma, dtype=np.float64).copy()
        if mu.ndim != 1:
            raise ValueError(f"mu must be a vector, got shape {mu.shape}")
        m = mu.shape[0]
        if sigma.shape != (m, m):
            raise ValueError(f"sigma must have shape ({m}, {m}), got {sigma.shape}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("non-finite entries in parameters")
        scale = np.abs(sigma).max()
        if scale == 0.0 or np.abs(sigma - sigma.T).max() > SYMMETRY_RTOL * scale:
            raise ValueError("sigma is not symmetric to 1e-12 relative tolerance")
        sigma = 0.5 * (sigma + sigma.T)
        # Positive definiteness check; LinAlgError propagates as a hard error.
        np.linalg.cholesky(sigma)
        beta = float(self.beta)
        if not np.isfinite(beta) or beta <= 0.0:
            raise ValueError(f"beta must be positive and finite, got {beta}")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "beta", beta)

    @property
    def m(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class HDerivs:
    """Values of ``h = log g`` and its partial derivatives at one point.

    Fields hold scalars or arrays, matching the shape of the ``delta``
    argument of :func:`h_derivs`.
    """

    h: np.ndarray | float
    dh_ddelta: np.ndarray | float
    d2h_ddelta2: np.ndarray | float
    dh_dbeta: np.ndarray | float


def mahalanobis_delta(x: np.ndarray, theta: ThetaParams) -> np.ndarray | float:
    """Squared Mahalanobis radius ``(x - mu)' Sigma^(-1) (x - mu)``.

    ``x`` may be a single vector of length ``m`` or an ``(n, m)`` array of
    rows; the result is a scalar or a length-``n`` vector accordingly.
    Solves against a Cholesky factor rather than forming the inverse.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    if rows.shape[1] != theta.m:
        raise ValueError(f"x has dimension {rows.shape[1]}, expected {theta.m}")
    chol = np.linalg.cholesky(theta.sigma)
    # solve L y = (x - mu)' for each row, then delta = ||y||^2
    y = np.linalg.solve(chol, (rows - theta.mu).T)
    delta = np.einsum("ij,ij->j", y, y)
    return float(delta[0]) if single else delta


def _as_delta_array(delta) -> tuple[np.ndarray, bool]:
    arr = np.asarray(delta, dtype=np.float64)
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise ValueError("delta must be finite and nonnegative")
    return arr, arr.ndim == 0


def h_derivs(delta, beta: float, model: ModelKind, m: int) -> HDerivs:
    """Log radial generator ``h(delta, beta)`` and its partial derivatives.

    Parameters
    ----------
    delta : float or ndarray
        Squared Mahalanobis radius, nonnegative.
    beta : float
        Shape parameter, positive.
    model : ModelKind
        Radial generator.
    m : int
        Sample-space dimension.  The Student-T generator depends on it;
        MGGD ignores it.

    Returns
    -------
    HDerivs
        ``h``, ``dh/ddelta``, ``d2h/ddelta2`` and ``dh/dbeta`` evaluated
        elementwise.

    Notes
    -----
    For MGGD, ``h = -delta^beta / 2`` so

        dh/ddelta   = -(beta/2) delta^(beta-1)
        d2h/ddelta2 = -(beta (beta-1) / 2) delta^(beta-2)
        dh/dbeta    = -(1/2) delta^beta log(delta)

    and ``dh/ddelta < 0`` for ``delta > 0``.  The second derivative is
    singular at ``delta = 0`` when ``beta < 2`` (except ``beta = 1``, whose
    coefficient vanishes); that combination raises instead of returning an
    infinity.  Elsewhere ``delta`` is floored at ``1e-300`` and the powers
    are taken in log space with the exponent capped near ``e^690``, so
    extreme arguments return a finite value of the correct sign instead of
    overflowing.

    For Student-T, ``h = -((beta + m)/2) log(1 + delta/beta)`` and every
    derivative below is smooth on ``delta >= 0``:

        dh/ddelta   = -(beta + m) / (2 (beta + delta))
        d2h/ddelta2 =  (beta + m) / (2 (beta + delta)^2)
        dh/dbeta    = -(1/2) log(1 + delta/beta)
                      + (beta + m) delta / (2 beta (beta + delta))
    """
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    arr, scalar = _as_delta_array(delta)
    if model is ModelKind.MGGD:
        if np.any(arr == 0.0) and beta < 2.0 and beta != 1.0:
            raise ValueError(
                "MGGD second derivative is singular at delta = 0 for beta < 2"
            )
        d = np.maximum(arr, DELTA_FLOOR)
        logd = np.log(d)
        pow_b = np.exp(np.minimum(beta * logd, 690.0))
        h = -0.5 * pow_b
        dh = -0.5 * beta * np.exp(np.minimum((beta - 1.0) * logd, 690.0))
        d2h = (
            -0.5 * beta * (beta - 1.0) * np.exp(np.minimum((beta - 2.0) * logd, 690.0))
        )
        dhdb = -0.5 * pow_b * logd
    elif model is ModelKind.STUDENT_T:
        b_plus_d = beta + arr
        ratio = arr / b_plus_d
        h = -0.5 * (beta + m) * np.log1p(arr / beta)
        dh = -0.5 * (beta + m) / b_plus_d
        d2h = 0.5 * ((beta + m) / b_plus_d) / b_plus_d
        dhdb = -0.5 * np.log1p(arr / beta) + 0.5 * (beta + m) * ratio / beta
    else:
        raise ValueError(f"unknown model {model}")
    if scalar:
        return HDerivs(float(h), float(dh), float(d2h), float(dhdb))
    return HDerivs(h, dh, d2h, dhdb)


def d2h_dbeta2(delta, beta: float, model: ModelKind, m: int):
    """Second partial derivative of ``h`` in ``beta``, elementwise.

    Needed only by the shape-parameter information constant.  MGGD:
    ``-(1/2) delta^beta log(delta)^2``.  Student-T:
    ``delta / (2 beta (beta+delta)) - delta (beta^2 + 2 m beta + m delta)
    / (2 beta^2 (beta+delta)^2)``.
    """
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    arr, scalar = _as_delta_array(delta)
    if model is ModelKind.MGGD:
        d = np.maximum(arr, DELTA_FLOOR)
        logd = np.log(d)
        out = -0.5 * np.exp(np.minimum(beta * logd, 690.0)) * logd**2
    elif model is ModelKind.STUDENT_T:
        b_plus_d = beta + arr
        ratio = arr / b_plus_d
        out = ratio / (2.0 * beta) - ratio * (
            (beta**2 + 2.0 * m * beta) / b_plus_d + m * ratio
        ) / (2.0 * beta**2)
    else:
        raise ValueError(f"unknown model {model}")
    return float(out) if scalar else out


def log_normalizer(beta: float, m: int, model: ModelKind) -> tuple[float, float, float]:
    """Log normalizing constant ``alpha(beta) = log c(beta)`` and its
    first two ``beta``-derivatives.

    Returns
    -------
    (alpha, dalpha_dbeta, d2alpha_dbeta2) : tuple of float

    Notes
    -----
    MGGD, with ``k = m / (2 beta)``:

        alpha = log(beta) + lgamma(m/2) - (m/2) log(pi)
                - lgamma(k) - k log(2)

    Student-T:

        alpha = lgamma((beta + m)/2) - lgamma(beta/2) - (m/2) log(beta pi)

    Both families reduce to the standard Gaussian constant at the Gaussian
    member (``beta = 1`` MGGD; ``beta -> inf`` Student-T), and the
    derivatives follow by differentiating through the digamma and trigamma
    functions.
    """
    beta = float(beta)
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if m < 1:
        raise ValueError(f"dimension must be at least 1, got {m}")
    if model is ModelKind.MGGD:
        k = m / (2.0 * beta)
        alpha = (
            np.log(beta)
            + gammaln(m / 2.0)
            - 0.5 * m * np.log(np.pi)
            - gammaln(k)
            - k * np.log(2.0)
        )
        psi_term = psi(k) + np.log(2.0)
        dalpha = 1.0 / beta + 0.5 * m * psi_term / beta**2
        d2alpha = (
            -1.0 / beta**2
            - m * psi_term / beta**3
            - 0.25 * m**2 * float(polygamma(1, k)) / beta**4
        )
    elif model is ModelKind.STUDENT_T:
        alpha = (
            gammaln(0.5 * (beta + m))
            - gammaln(0.5 * beta)
            - 0.5 * m * np.log(beta * np.pi)
        )
        dalpha = 0.5 * psi(0.5 * (beta + m)) - 0.5 * psi(0.5 * beta) - 0.5 * m / beta
        d2alpha = (
            0.25 * float(polygamma(1, 0.5 * (beta + m)))
            - 0.25 * float(polygamma(1, 0.5 * beta))
            + 0.5 * m / beta**2
        )
    else:
        raise ValueError(f"unknown model {model}")
    return float(alpha), float(dalpha), float(d2alpha)


def log_density(x: np.ndarray, theta: ThetaParams, model: ModelKind):
    """Log density ``alpha(beta) - (1/2) log|Sigma| + h(delta_x, beta)``.

    Accepts a single vector or an ``(n, m)`` array of rows and returns a
    scalar or length-``n`` vector of finite values.
    """
    delta = mahalanobis_delta(x, theta)
    alpha, _, _ = log_normalizer(theta.beta, theta.m, model)
    sign, logdet = np.linalg.slogdet(theta.sigma)
    if sign <= 0:
        raise np.linalg.LinAlgError("sigma has nonpositive determinant")
    d = h_derivs(delta, theta.beta, model, theta.m)
    return alpha - 0.5 * logdet + d.h


def mean_nll(data: np.ndarray, theta: ThetaParams, model: ModelKind) -> float:
    """Mean negative log likelihood over the rows of ``data``."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[0] == 0:
        raise ValueError("empty dataset")
    return -float(np.mean(log_density(data, theta, model)))
