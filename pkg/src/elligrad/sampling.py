"""Exact samplers and ground-truth parameter construction.

Both families are sampled through their stochastic representation
``x = mu + sqrt(delta) Sigma^(1/2) u`` with ``u`` uniform on the unit
sphere and ``delta`` drawn from the radial law:

* MGGD: ``delta = W^(1/beta)`` with ``W ~ Gamma(m/(2 beta), scale 2)``
* Student-T: ``x = mu + Sigma^(1/2) z sqrt(beta / chi)`` with
  ``z ~ N(0, I)`` and ``chi ~ chi-square(beta)``, which realizes the same
  representation with ``delta = beta ||z||^2 / chi``

``Sigma^(1/2)`` is the symmetric square root.  Draws are generated in
fixed-size chunks with a fixed order of RNG calls per chunk, so streaming
and batch generation from the same seed produce identical samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .manifold import MetricWeights, TangentVector, _eigh_spd, product_retract, tangent_distance_form
from .models import EstimationScope, ModelKind, ThetaParams

__all__ = [
    "SamplerConfig",
    "sample",
    "sample_stream",
    "make_true_params",
    "perturb_params",
]

#: Rows generated per RNG round; fixing it makes streams reproducible.
CHUNK = 8192


@dataclass(frozen=True)
class SamplerConfig:
    """Plan for one dataset: sample count, RNG seed, model and truth."""

    n: int
    seed: int
    model: ModelKind
    theta: ThetaParams

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError(f"n must be nonnegative, got {self.n}")


def _sqrt_spd(sigma: np.ndarray) -> np.ndarray:
    evals, evecs = _eigh_spd(sigma, "sigma")
    return (evecs * np.sqrt(evals)) @ evecs.T


def sample_stream(cfg: SamplerConfig) -> Iterator[np.ndarray]:
    """Yield the dataset of ``cfg`` in chunks of at most ``CHUNK`` rows.

    Concatenating the chunks equals :func:`sample` on the same config.
    """
    theta, model = cfg.theta, cfg.model
    root = _sqrt_spd(theta.sigma)
    rng = np.random.default_rng(cfg.seed)
    m, beta = theta.m, theta.beta
    remaining = cfg.n
    while remaining > 0:
        b = min(remaining, CHUNK)
        if model is ModelKind.MGGD:
            w = 2.0 * rng.standard_gamma(m / (2.0 * beta), size=b)
            z = rng.standard_normal((b, m))
            u = z / np.linalg.norm(z, axis=1, keepdims=True)
            radius = np.sqrt(w ** (1.0 / beta))
            rows = theta.mu + radius[:, None] * (u @ root)
        elif model is ModelKind.STUDENT_T:
            z = rng.standard_normal((b, m))
            chi = rng.chisquare(beta, size=b)
            rows = theta.mu + np.sqrt(beta / chi)[:, None] * (z @ root)
        else:
            raise ValueError(f"unknown model {model}")
        yield rows
        remaining -= b


def sample(cfg: SamplerConfig) -> np.ndarray:
    """Draw the full ``(n, m)`` dataset of ``cfg``."""
    chunks = list(sample_stream(cfg))
    if not chunks:
        return np.empty((0, cfg.theta.m))
    return np.vstack(chunks)


def make_true_params(m: int, rho: float, beta: float, mu_seed: int) -> ThetaParams:
    """Ground-truth point with Toeplitz scatter ``Sigma[i, j] = rho^|i-j|``
    and ``mu`` drawn once from a standard normal seeded by ``mu_seed``."""
    if not -1.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (-1, 1), got {rho}")
    idx = np.arange(m)
    sigma = rho ** np.abs(idx[:, None] - idx[None, :])
    mu = np.random.default_rng(mu_seed).standard_normal(m)
    return ThetaParams(mu=mu, sigma=sigma, beta=beta)


def perturb_params(
    theta: ThetaParams,
    weights: MetricWeights,
    target_d2: float,
    rng: np.random.Generator,
    scope: EstimationScope = EstimationScope.MU_SIGMA_BETA,
) -> ThetaParams:
    """Random point at exactly ``target_d2`` squared distance from
    ``theta``, moved only in the blocks of ``scope``.

    Draws a Gaussian tangent in the free blocks and rescales it through
    :func:`~elligrad.manifold.tangent_distance_form`, which is exact along
    the retraction, then retracts.
    """
    if target_d2 < 0.0:
        raise ValueError("target_d2 must be nonnegative")
    if target_d2 == 0.0:
        return theta
    m = theta.m
    u_mu = rng.standard_normal(m) if scope.free_mu else np.zeros(m)
    raw = rng.standard_normal((m, m))
    u_sigma = 0.5 * (raw + raw.T)
    u_beta = float(rng.standard_normal()) if scope.free_beta else 0.0
    u = TangentVector(u_mu, u_sigma, u_beta)
    q = tangent_distance_form(theta, u, weights)
    if q <= 0.0:
        raise ValueError("degenerate perturbation direction")
    return product_retract(theta, u.scaled(float(np.sqrt(target_d2 / q))))
