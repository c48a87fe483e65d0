"""Fisher information constants and natural (information) gradients.

For an elliptical density with log radial generator ``h``, the Fisher
metric of ``theta = (mu, Sigma, beta)`` is the weighted product metric of
:mod:`elligrad.manifold` with weights that are expectations of ``h``
derivatives against the radial law of ``delta``:

    i_mu   = -(4/m) E[h''(delta) delta] - 2 E[h'(delta)]
    a      =  E[(h'(delta) delta)^2]
    i_1    =  2 a / (m (m+2))
    i_2    =  a / (m (m+2)) - 1/4
    i_beta = -(alpha''(beta) + E[d2h/dbeta2])

The natural gradient of the log likelihood is the Euclidean gradient with
the metric inverted blockwise.  On the scatter block the metric acts by
``2 j_1`` off the ``Sigma`` ray and ``2 j_2`` along it with ``j_1 = i_1``
and ``j_2 = i_1 + m i_2``, so inversion is a parallel / perpendicular
split rather than a linear solve.

Expectations are evaluated by adaptive quadrature of the radial law: the
MGGD integrates in ``w = delta^beta`` (a Gamma(m/(2 beta), 2) variable)
and the Student-T in ``y = delta / beta`` (a Beta-prime(m/2, beta/2)
variable), both after a log substitution that tames the tails.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import betaln, gammaln

from .manifold import MetricWeights, TangentVector
from .models import (
    EstimationScope,
    ModelKind,
    ThetaParams,
    d2h_dbeta2,
    h_derivs,
    log_normalizer,
    mahalanobis_delta,
)

__all__ = [
    "InfoConstants",
    "info_constants",
    "cached_constants",
    "radial_expectation",
    "stochastic_nat_grad",
    "batch_nat_grad",
]

#: Quadrature failure threshold on the reported relative error.
QUAD_RTOL = 1e-8

#: Tail mass kept outside the truncated integration window.
_TAIL = 1e-18


@dataclass(frozen=True)
class InfoConstants:
    """Information constants of one ``(model, m, beta)`` point.

    ``j_1`` and ``j_2`` are the scatter-block eigenvalues of the metric;
    both must be positive for the metric to be positive definite.  ``i_2``
    itself may be negative (MGGD with ``beta < 1``).  ``a_const`` keeps
    the raw second moment ``E[(h' delta)^2]`` for diagnostics.
    """

    i_mu: float
    i_1: float
    i_2: float
    i_beta: float
    a_const: float
    j_1: float
    j_2: float

    def __post_init__(self) -> None:
        for name in ("i_mu", "i_1", "i_beta", "a_const", "j_1", "j_2"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0.0:
                raise ValueError(f"{name} must be positive and finite, got {v}")

    @property
    def weights(self) -> MetricWeights:
        return MetricWeights(self.i_mu, self.i_1, self.i_2, self.i_beta)


def _quad_checked(fn: Callable[[float], float], lo: float, hi: float) -> float:
    val, err = quad(fn, lo, hi, limit=400, epsabs=1e-14, epsrel=1e-11)
    if err > QUAD_RTOL * max(abs(val), 1e-6):
        raise RuntimeError(
            f"radial quadrature did not converge: value {val:.6e}, "
            f"reported error {err:.3e}"
        )
    return val


def radial_expectation(
    fn: Callable[[float], float], beta: float, m: int, model: ModelKind
) -> float:
    """Expectation ``E[fn(delta)]`` under the radial law of the squared
    Mahalanobis radius.

    MGGD: ``delta^beta ~ Gamma(m/(2 beta), scale 2)``.  Student-T:
    ``delta/beta ~ BetaPrime(m/2, beta/2)``.  Both integrals run over the
    log of the auxiliary variable between quantile-derived cutoffs that
    leave ``~1e-18`` tail mass; a reported relative error above ``1e-8``
    raises.

    The truncation bounds the accuracy for integrands that keep growing
    into a heavy tail: under Student-T, moments ``E[delta^p]`` with ``p``
    close to ``beta/2`` see the cut.  Integrands with at most
    log-polynomial growth (everything needed for the information
    constants) are unaffected.
    """
    beta = float(beta)
    if beta <= 0.0:
        raise ValueError(f"beta must be positive, got {beta}")
    if m < 1:
        raise ValueError(f"dimension must be at least 1, got {m}")
    log_q = np.log(_TAIL)
    if model is ModelKind.MGGD:
        k = m / (2.0 * beta)
        log_norm = gammaln(k) + k * np.log(2.0)
        # Tail inversions of the Gamma(k, 2) law in log space: the lower
        # from cdf ~ w^k / (k Gamma(k) 2^k), the upper from the
        # exponential rate 1/2.
        # The extra margin below the quantile covers integrands with an
        # integrable origin singularity (the mu-information for beta < 1);
        # accuracy still degrades as beta approaches 1 - m/2 from above.
        # Floor at -690 beta so delta = exp(s / beta) stays inside double
        # range; nothing integrable lives below exp(-690).
        s_lo = max((log_q + gammaln(k + 1.0) + k * np.log(2.0)) / k - 50.0, -690.0 * beta)
        s_hi = np.log(2.0 * (-log_q + k * max(1.0, np.log(-log_q)) + 10.0)) + 1.0

        def integrand(s: float) -> float:
            w = np.exp(s)
            log_dens = k * s - 0.5 * w - log_norm
            return fn(w ** (1.0 / beta)) * np.exp(log_dens)

    elif model is ModelKind.STUDENT_T:
        a, b = 0.5 * m, 0.5 * beta
        log_norm = betaln(a, b)
        # Beta-prime(a, b) tail inversions: cdf ~ y^a / (a B(a,b)) at 0,
        # survival ~ y^(-b) / (b B(a,b)) at infinity.
        s_lo = (log_q + np.log(a) + log_norm) / a - 2.0
        s_hi = (-log_q + np.log(b) + abs(log_norm)) / b + 2.0

        def integrand(s: float) -> float:
            y = np.exp(s)
            log_dens = a * s - (a + b) * np.log1p(y) - log_norm
            return fn(beta * y) * np.exp(log_dens)

    else:
        raise ValueError(f"unknown model {model}")
    return _quad_checked(integrand, s_lo, s_hi)


def info_constants(theta: ThetaParams, model: ModelKind) -> InfoConstants:
    """Information constants at ``theta`` by radial quadrature.

    Only ``beta`` and the dimension enter; location and scatter do not.
    For MGGD the second moment ``a`` has the closed form
    ``m (m + 2 beta) / 4``, used as a cross-check on the quadrature; a
    relative disagreement above ``1e-6`` raises.
    """
    m, beta = theta.m, theta.beta
    return _constants_impl(model, m, beta)


def _constants_impl(model: ModelKind, m: int, beta: float) -> InfoConstants:
    if model is ModelKind.MGGD and beta <= 1.0 - 0.5 * m:
        # E[delta^(beta-1)] has a non-integrable singularity at the origin;
        # only reachable for m = 1 with beta <= 1/2.
        raise ValueError(
            "location information diverges for the generalized Gaussian "
            f"when beta <= 1 - m/2 (m = {m}, beta = {beta})"
        )

    def dh(delta: float) -> float:
        return h_derivs(delta, beta, model, m).dh_ddelta

    def d2h_scaled(delta: float) -> float:
        return h_derivs(delta, beta, model, m).d2h_ddelta2 * delta

    def score_sq(delta: float) -> float:
        return (h_derivs(delta, beta, model, m).dh_ddelta * delta) ** 2

    def hbb(delta: float) -> float:
        return d2h_dbeta2(delta, beta, model, m)

    e_dh = radial_expectation(dh, beta, m, model)
    e_d2h_delta = radial_expectation(d2h_scaled, beta, m, model)
    a_const = radial_expectation(score_sq, beta, m, model)
    e_hbb = radial_expectation(hbb, beta, m, model)

    if model is ModelKind.MGGD:
        a_closed = m * (m + 2.0 * beta) / 4.0
        if abs(a_const - a_closed) > 1e-6 * a_closed:
            raise RuntimeError(
                f"quadrature cross-check failed: a = {a_const!r}, "
                f"closed form {a_closed!r}"
            )

    _, _, d2alpha = log_normalizer(beta, m, model)
    i_mu = -4.0 * e_d2h_delta / m - 2.0 * e_dh
    i_1 = 2.0 * a_const / (m * (m + 2.0))
    i_2 = a_const / (m * (m + 2.0)) - 0.25
    i_beta = -(d2alpha + e_hbb)
    return InfoConstants(
        i_mu=i_mu,
        i_1=i_1,
        i_2=i_2,
        i_beta=i_beta,
        a_const=a_const,
        j_1=i_1,
        j_2=i_1 + m * i_2,
    )


#: Relative beta granularity of the constants cache: constants are reused
#: while beta stays within one grid cell, i.e. recomputed only on a
#: relative change of about one percent.
CACHE_RTOL = 0.01


@lru_cache(maxsize=4096)
def _cached_on_grid(model: ModelKind, m: int, grid_idx: int) -> InfoConstants:
    beta = float((1.0 + CACHE_RTOL) ** grid_idx)
    return _constants_impl(model, m, beta)


def cached_constants(model: ModelKind, m: int, beta: float) -> InfoConstants:
    """Constants at the nearest point of a one-percent geometric beta
    grid, memoized.

    Online estimation moves ``beta`` every step; quadrature at every step
    would dominate the run time for no statistical benefit.  Snapping to
    the grid keeps the constants within about one percent of exact and
    turns repeated lookups into cache hits.
    """
    idx = int(round(np.log(beta) / np.log1p(CACHE_RTOL)))
    return _cached_on_grid(model, m, idx)


def _grad_blocks(theta, deltas, diffs, d, consts, dalpha):
    """Natural-gradient blocks from per-sample quantities, averaged.

    ``deltas``, ``diffs`` and the fields of ``d`` hold one entry per
    sample.  Relies on ``tr(Sigma^(-1) G_sigma) = -m/2 - mean(h' delta)``
    so the parallel/perpendicular split needs no linear solve.
    """
    m = theta.m
    n = deltas.shape[0]
    dh = np.atleast_1d(d.dh_ddelta)
    u_mu = (-2.0 / consts.i_mu / n) * (dh @ diffs)
    scatter = (diffs.T * dh) @ diffs / n
    g_sigma = -0.5 * theta.sigma - scatter
    trace_ratio = (-0.5 * m - float(dh @ deltas) / n) / m
    par = trace_ratio * theta.sigma
    perp = g_sigma - par
    u_sigma = perp / consts.j_1 + par / consts.j_2
    # accumulation order leaves absolute-scale asymmetry noise; near a
    # stationary point it would dominate the vanishing gradient
    u_sigma = 0.5 * (u_sigma + u_sigma.T)
    u_beta = (dalpha + float(np.mean(np.atleast_1d(d.dh_dbeta)))) / consts.i_beta
    return u_mu, u_sigma, u_beta


def _masked_tangent(theta, scope, u_mu, u_sigma, u_beta) -> TangentVector:
    m = theta.m
    return TangentVector(
        u_mu=u_mu if scope.free_mu else np.zeros(m),
        u_sigma=u_sigma if scope.free_sigma else np.zeros((m, m)),
        u_beta=u_beta if scope.free_beta else 0.0,
    )


def stochastic_nat_grad(
    theta: ThetaParams,
    x: np.ndarray,
    consts: InfoConstants,
    model: ModelKind,
    scope: EstimationScope,
) -> TangentVector:
    """Natural gradient of the log likelihood of a single observation.

    With ``diff = x - mu``, ``delta`` its squared Mahalanobis radius and
    ``w = h'(delta)``:

        u_mu    = -(2 w / i_mu) diff
        u_sigma = perp(G) / j_1 + par(G) / j_2,
                  G = -Sigma/2 - w diff diff'
        u_beta  = (alpha'(beta) + dh/dbeta) / i_beta

    where par/perp is the split of :func:`~elligrad.manifold.
    split_parallel_perp`.  This is the ascent direction of the log
    likelihood; at the Gaussian member (MGGD ``beta = 1``) it reduces to
    ``u_mu = diff`` and ``u_sigma = diff diff' - Sigma``.  Out-of-scope
    blocks are exact zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("x must be a single vector")
    delta = mahalanobis_delta(x, theta)
    d = h_derivs(delta, theta.beta, model, theta.m)
    _, dalpha, _ = log_normalizer(theta.beta, theta.m, model)
    u_mu, u_sigma, u_beta = _grad_blocks(
        theta,
        np.array([delta]),
        (x - theta.mu)[None, :],
        d,
        consts,
        dalpha,
    )
    return _masked_tangent(theta, scope, u_mu, u_sigma, u_beta)


def batch_nat_grad(
    theta: ThetaParams,
    data: np.ndarray,
    consts: InfoConstants,
    model: ModelKind,
    scope: EstimationScope,
) -> TangentVector:
    """Mean of the per-sample natural gradients over the rows of ``data``.

    Algebraically identical to averaging :func:`stochastic_nat_grad`, but
    computed with one factorization and vectorized accumulations.  This is
    the descent direction of the empirical mean negative log likelihood.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[0] == 0:
        raise ValueError("empty dataset")
    deltas = np.atleast_1d(mahalanobis_delta(data, theta))
    d = h_derivs(deltas, theta.beta, model, theta.m)
    _, dalpha, _ = log_normalizer(theta.beta, theta.m, model)
    u_mu, u_sigma, u_beta = _grad_blocks(
        theta, deltas, data - theta.mu, d, consts, dalpha
    )
    return _masked_tangent(theta, scope, u_mu, u_sigma, u_beta)
