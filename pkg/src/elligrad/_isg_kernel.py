"""Compiled inner loop of the online estimator.

One stochastic step with a single sample has a scatter gradient of the
form ``u_sigma = a S + b Sigma`` with ``S`` the rank-one sample scatter,
so the SPD exponential has the closed form

    exp_Sigma(alpha u) = e^B (Sigma + c diff diff'),
    c = (e^(A delta) - 1) / delta,  A = alpha a,  B = alpha b,

and the inverse follows by Sherman-Morrison with ``1 + c delta =
e^(A delta)``.  That keeps every update at O(m^2) with no
eigendecomposition, which is what makes the online method cheap.  The
Python wrapper re-enters this kernel between trace checkpoints and
refreshes both the information constants (when ``beta`` drifts) and the
tracked inverse (against rounding drift).

State arrays are mutated in place.  ``counters`` collects guard hits:
``[rail_low, rail_high, scatter_trust, location_trust, shape_trust]``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MODEL_MGGD = 0
MODEL_STUDENT_T = 1

#: Kernel exit reasons.
EXIT_END = 0
EXIT_BETA_DRIFT = 1

_LN2 = 0.6931471805599453


@njit(cache=True)
def _digamma(x: float) -> float:
    """Digamma for x > 0: recurrence below 10, asymptotic series above."""
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = (
        np.log(x)
        - 0.5 * inv
        - inv2
        * (
            1.0 / 12.0
            - inv2
            * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0)))
        )
    )
    return acc + series


@njit(cache=True)
def _dh_ddelta(delta: float, beta: float, model: int, m: int) -> float:
    d = max(delta, 1e-300)
    if model == MODEL_MGGD:
        w = -0.5 * beta * d ** (beta - 1.0)
    else:
        w = -0.5 * (beta + m) / (beta + d)
    # keep downstream arithmetic finite even in pathological states
    if w < -1e150:
        w = -1e150
    return w


@njit(cache=True)
def _dh_dbeta(delta: float, beta: float, model: int, m: int) -> float:
    d = max(delta, 1e-300)
    if model == MODEL_MGGD:
        t = beta * np.log(d)
        if t > 690.0:
            return -1e300
        return -0.5 * np.exp(t) * np.log(d)
    return -0.5 * np.log1p(d / beta) + 0.5 * (beta + m) * d / (beta * (beta + d))


@njit(cache=True)
def _dalpha_dbeta(beta: float, model: int, m: int) -> float:
    if model == MODEL_MGGD:
        k = m / (2.0 * beta)
        return 1.0 / beta + 0.5 * m * (_digamma(k) + _LN2) / (beta * beta)
    return 0.5 * _digamma(0.5 * (beta + m)) - 0.5 * _digamma(0.5 * beta) - 0.5 * m / beta


@njit(cache=True)
def run_block(
    block: np.ndarray,
    n_start: int,
    a_coeff: float,
    mu: np.ndarray,
    sigma: np.ndarray,
    sigma_inv: np.ndarray,
    beta_box: np.ndarray,
    free_mu: bool,
    free_beta: bool,
    model: int,
    i_mu: float,
    j_1: float,
    j_2: float,
    i_beta: float,
    beta_ref: float,
    rail_lo: float,
    rail_hi: float,
    trust: float,
    trust_len: float,
    g_clip: float,
    sched_offset: float,
    counters: np.ndarray,
    diff: np.ndarray,
    z: np.ndarray,
) -> tuple[int, int]:
    """Consume rows of ``block`` starting at global step ``n_start``.

    Returns ``(rows_consumed, exit_reason)``; exits early when ``beta``
    drifts more than one percent from ``beta_ref`` so the caller can
    refresh the information constants.  ``diff`` and ``z`` are length-m
    scratch buffers.
    """
    m = mu.shape[0]
    beta = beta_box[0]
    for i in range(block.shape[0]):
        # offset 1/n schedule: decays like a_coeff/n; the caller sizes the
        # offset so the total squared step mass sum(alpha^2) stays bounded
        # for every gain, which keeps the burn-in from wandering
        alpha = a_coeff / (n_start + i + sched_offset)
        # caps become alpha-proportional once the step size is small, so a
        # single tail sample can no longer move the iterate by a fixed
        # amount late in the run
        cap_spec = min(trust, alpha * g_clip)
        cap_len = min(trust_len, alpha * g_clip)
        row = block[i]

        if free_mu:
            delta = 0.0
            for r in range(m):
                diff[r] = row[r] - mu[r]
            for r in range(m):
                acc = 0.0
                for s in range(m):
                    acc += sigma_inv[r, s] * diff[s]
                z[r] = acc
                delta += acc * diff[r]
            w = _dh_ddelta(delta, beta, model, m)
            step = -2.0 * w / i_mu * alpha
            # metric length of the applied move; unbounded gradients (the
            # generalized Gaussian pull grows superlinearly in the distance
            # for beta > 1) would otherwise let one outlying sample throw
            # the mean past any hope of recovery
            move = step * np.sqrt(i_mu * max(delta, 0.0))
            if move > cap_len:
                step *= cap_len / move
                counters[3] += 1
            for r in range(m):
                mu[r] += step * diff[r]

        # scatter step (every scope)
        delta = 0.0
        for r in range(m):
            diff[r] = row[r] - mu[r]
        for r in range(m):
            acc = 0.0
            for s in range(m):
                acc += sigma_inv[r, s] * diff[s]
            z[r] = acc
            delta += acc * diff[r]
        w = _dh_ddelta(delta, beta, model, m)
        a_tan = alpha * (-w / j_1)
        b_tan = alpha * (w * delta * (1.0 / j_1 - 1.0 / j_2) / m - 0.5 / j_2)
        spec = max(abs(a_tan * delta + b_tan), abs(b_tan))
        if spec > cap_spec:
            scale = cap_spec / spec
            a_tan *= scale
            b_tan *= scale
            counters[2] += 1
        ad = a_tan * delta
        if delta > 0.0:
            c = (np.exp(ad) - 1.0) / delta
        else:
            c = a_tan
        e_b = np.exp(b_tan)
        c_inv = c * np.exp(-ad)
        inv_e_b = 1.0 / e_b
        for r in range(m):
            dr = diff[r]
            zr = z[r]
            for s in range(m):
                sigma[r, s] = e_b * (sigma[r, s] + c * dr * diff[s])
                sigma_inv[r, s] = inv_e_b * (sigma_inv[r, s] - c_inv * zr * z[s])

        if free_beta:
            delta = 0.0
            for r in range(m):
                acc = 0.0
                for s in range(m):
                    acc += sigma_inv[r, s] * diff[s]
                delta += acc * diff[r]
            u_b = (_dalpha_dbeta(beta, model, m) + _dh_dbeta(delta, beta, model, m)) / i_beta
            e = alpha * u_b / beta
            # same per-step movement budget as the other blocks, expressed
            # as metric length of the multiplicative update
            e_cap = cap_len / (beta * np.sqrt(i_beta))
            if e_cap > 50.0:
                e_cap = 50.0
            if e > e_cap:
                e = e_cap
                counters[4] += 1
            elif e < -e_cap:
                e = -e_cap
                counters[4] += 1
            beta = beta * np.exp(e)
            if beta < rail_lo:
                beta = rail_lo
                counters[0] += 1
            elif beta > rail_hi:
                beta = rail_hi
                counters[1] += 1
            if abs(beta - beta_ref) > 0.01 * beta_ref:
                beta_box[0] = beta
                return i + 1, EXIT_BETA_DRIFT

    beta_box[0] = beta
    return block.shape[0], EXIT_END
