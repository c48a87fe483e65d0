"""Shared helpers: random parameter points and finite-difference oracles."""

from __future__ import annotations

import numpy as np
import pytest

from elligrad import ModelKind, ThetaParams


def random_spd(m: int, rng: np.random.Generator, spread: float = 1.0) -> np.ndarray:
    """Well-conditioned random SPD matrix."""
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    evals = np.exp(spread * rng.uniform(-1.0, 1.0, size=m))
    return (q * evals) @ q.T


def random_theta(
    m: int,
    rng: np.random.Generator,
    beta_lo: float = 0.3,
    beta_hi: float = 4.0,
) -> ThetaParams:
    return ThetaParams(
        mu=rng.standard_normal(m),
        sigma=random_spd(m, rng),
        beta=float(rng.uniform(beta_lo, beta_hi)),
    )


def beta_range(model: ModelKind) -> tuple[float, float]:
    # Student-T information constants degenerate as beta -> 0; keep the
    # random draws in the regime the estimators actually run in.
    return (0.3, 4.0) if model is ModelKind.MGGD else (1.0, 8.0)


def central_diff(f, x: float, h: float) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


@pytest.fixture(scope="session")
def models():
    return (ModelKind.MGGD, ModelKind.STUDENT_T)
