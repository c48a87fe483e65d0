"""Parameter estimation for elliptical families.

Four methods over the shared scopes (scatter only; location and scatter;
all three parameters):

* :func:`isg_fit` online natural-gradient ascent: one pass, one sample
  per step, step sizes ``a / n``, O(m^2) work and memory per sample.
* :func:`idg_fit` batch natural-gradient descent of the empirical mean
  negative log likelihood with per-block Armijo backtracking.
* :func:`fp_fit`  fixed-point iteration of the likelihood stationarity
  conditions.
* :func:`mm_fit`  method of moments (generalized Gaussian only).

All methods take the starting point ``theta0``; its out-of-scope blocks
double as the known fixed values.  Traces record iteration index,
squared distance to an optional reference point, gradient norm,
wall-clock nanoseconds and the current shape parameter.
"""

from __future__ import annotations

import time
from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import brentq
from scipy.special import gammaln

from . import _isg_kernel as _kern
from .fisher import (
    InfoConstants,
    batch_nat_grad,
    cached_constants,
    info_constants,
    stochastic_nat_grad,
)
from .manifold import (
    UNIT_WEIGHTS,
    MetricWeights,
    TangentVector,
    metric_norm_sq,
    product_distance_sq,
    product_retract,
    spd_distance_sq,
)
from .models import (
    EstimationScope,
    ModelKind,
    ThetaParams,
    h_derivs,
    log_normalizer,
    mean_nll,
)

__all__ = [
    "IsgConfig",
    "IdgConfig",
    "EstimateTrace",
    "LineSearchError",
    "ConvergenceError",
    "isg_fit",
    "idg_fit",
    "fp_fit",
    "mm_fit",
    "BETA_RAILS",
    "TRUST_SPECTRAL",
    "TRUST_BUDGET",
    "TRUST_CLIP",
    "SCHED_BURN_IN",
]

#: Clamp interval for the shape parameter during joint estimation.
BETA_RAILS = (0.05, 50.0)

#: Hard spectral-norm cap on the applied scatter tangent ``Sigma^(-1)
#: (alpha u_sigma)``; bounds the matrix-exponential argument so early
#: steps with aggressive gains cannot overflow.
TRUST_SPECTRAL = 10.0

#: Per-step movement budget for the online method, as a multiple of the
#: fastest pace at which the averaged gradient can undo an overshoot.  An
#: overshot scatter contracts back at spectral rate ``1/(2 j_2)`` per unit
#: step size, so one step larger than a small multiple of that rate puts
#: the iterate somewhere the decaying step sizes cannot pay back within
#: the run; single-sample gradients have heavy enough tails to propose
#: such steps routinely.  The same budget caps the location block as an
#: information-metric length, which also tames the superlinear pull of
#: the generalized Gaussian score for shapes above one.  Capping at the
#: budget leaves the expected drift untouched (its size is below one
#: budget unit for unit gain) and goes inactive once the step size
#: decays, so the asymptotic behaviour is that of the bare method.
TRUST_BUDGET = 2.0

#: Cap on the per-sample natural-gradient magnitude, applied before the
#: step size: the movement allowed in one update is the smaller of the
#: absolute budget above and ``alpha`` times this value.  Single-sample
#: gradients keep heavy tails at every iteration count, and without the
#: ``alpha``-proportional part one tail sample late in a run could still
#: spend the whole absolute budget at once.  In Fisher-normalized units
#: the per-sample gradient has second moment of order one, so clipping at
#: this many units touches a vanishing fraction of samples and adds no
#: measurable bias.
TRUST_CLIP = 40.0

#: Burn-in factor of the online step-size schedule ``alpha = a / (n + c
#: a^2)``.  The quadratic offset bounds the total squared step mass,
#: ``sum(alpha^2) <= 1/c``, uniformly in the gain ``a``; that mass is what
#: the burn-in can spend on random wandering and on the small systematic
#: drift of the within-sample sequential update, so the bound keeps the
#: iterate inside the zone where the averaged gradient restores linearly.
#: The tail is unaffected (``alpha ~ a/n``), which is what sets the
#: asymptotic error.
SCHED_BURN_IN = 16.0

#: Steps between recomputations of the tracked scatter inverse.
_INV_REFRESH = 1000

_BLOCK = 8192


class LineSearchError(RuntimeError):
    """Armijo backtracking exhausted; carries the last iterate and trace."""

    def __init__(self, msg: str, theta: ThetaParams, trace: "EstimateTrace"):
        super().__init__(msg)
        self.theta = theta
        self.trace = trace


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted; carries the trace so far."""

    def __init__(self, msg: str, trace: "EstimateTrace"):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True)
class IsgConfig:
    """Online estimator configuration.

    ``a_coeff`` is the gain of the step-size schedule ``a / (n + c a**2)``
    with burn-in factor ``c`` = :data:`SCHED_BURN_IN`; the schedule decays
    like ``a / n``.
    ``minibatch`` averages the gradient over that many samples while still
    advancing the step index by one per batch.  Recording happens every
    ``record_every`` updates unless explicit ``checkpoints`` (update
    indices) are given.  When ``ref_theta`` is set, records include the
    squared distance to it under ``ref_weights`` (default: information
    weights evaluated at ``ref_theta``).
    """

    theta0: ThetaParams
    scope: EstimationScope
    a_coeff: float = 1.0
    minibatch: int = 1
    record_every: int = 10_000
    checkpoints: Sequence[int] | None = None
    ref_theta: ThetaParams | None = None
    ref_weights: MetricWeights | None = None

    def __post_init__(self) -> None:
        if self.a_coeff <= 0.0:
            raise ValueError("a_coeff must be positive")
        if self.minibatch < 1:
            raise ValueError("minibatch must be at least 1")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")
        if self.checkpoints is not None:
            cps = tuple(int(c) for c in self.checkpoints)
            if any(c < 1 for c in cps) or list(cps) != sorted(set(cps)):
                raise ValueError("checkpoints must be strictly increasing positives")
            object.__setattr__(self, "checkpoints", cps)


@dataclass(frozen=True)
class IdgConfig:
    """Batch estimator configuration (Armijo-Goldstein backtracking)."""

    theta0: ThetaParams
    scope: EstimationScope
    max_iters: int = 100
    grad_tol: float = 1e-8
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    alpha_init: float = 1.0
    max_backtracks: int = 60
    ref_theta: ThetaParams | None = None
    ref_weights: MetricWeights | None = None

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.grad_tol <= 0.0:
            raise ValueError("grad_tol must be positive")
        if not 0.0 < self.armijo_c1 < 1.0:
            raise ValueError("armijo_c1 must lie in (0, 1)")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtrack must lie in (0, 1)")
        if self.alpha_init <= 0.0:
            raise ValueError("alpha_init must be positive")


@dataclass(frozen=True)
class EstimateTrace:
    """Fit result plus per-checkpoint records.

    ``iters`` is strictly increasing.  ``d2_to_ref``, ``grad_norm`` and
    ``nll`` hold NaN where a method does not compute them.  For the online
    method ``grad_norm`` is the metric norm of the instantaneous
    single-sample gradient at the checkpoint (noisy by nature); for the
    batch method it is the full-data gradient norm per outer iteration.
    """

    theta_hat: ThetaParams
    iters: np.ndarray
    d2_to_ref: np.ndarray
    grad_norm: np.ndarray
    elapsed_ns: np.ndarray
    beta_hat: np.ndarray
    nll: np.ndarray
    warnings: tuple[str, ...]
    converged: bool
    method: str

    def __post_init__(self) -> None:
        if np.any(np.diff(self.iters) <= 0):
            raise ValueError("trace iteration indices must be strictly increasing")

    def write_csv(self, path) -> None:
        """Write records as ``iter,d2_to_ref,grad_norm,elapsed_ns,beta_hat``
        with NaN rendered as an empty field."""

        def fmt(v: float) -> str:
            return "" if np.isnan(v) else f"{v:.17g}"

        with open(path, "w") as fh:
            fh.write("iter,d2_to_ref,grad_norm,elapsed_ns,beta_hat\n")
            for i in range(self.iters.shape[0]):
                fh.write(
                    f"{int(self.iters[i])},{fmt(self.d2_to_ref[i])},"
                    f"{fmt(self.grad_norm[i])},{int(self.elapsed_ns[i])},"
                    f"{fmt(self.beta_hat[i])}\n"
                )


class _TraceBuilder:
    def __init__(self, ref: ThetaParams | None, weights: MetricWeights | None):
        self.rows: list[tuple] = []
        self.t0 = time.perf_counter_ns()
        self.ref = ref
        self.weights = weights
        self.warnings: list[str] = []

    def ref_d2(self, theta: ThetaParams) -> float:
        if self.ref is None:
            return np.nan
        return product_distance_sq(self.ref, theta, self.weights)

    def add(self, it: int, theta: ThetaParams, grad_norm: float, nll: float = np.nan):
        self.rows.append(
            (
                it,
                self.ref_d2(theta),
                grad_norm,
                time.perf_counter_ns() - self.t0,
                theta.beta,
                nll,
            )
        )

    def build(self, theta: ThetaParams, converged: bool, method: str) -> EstimateTrace:
        cols = list(zip(*self.rows)) if self.rows else [[], [], [], [], [], []]
        return EstimateTrace(
            theta_hat=theta,
            iters=np.asarray(cols[0], dtype=np.int64),
            d2_to_ref=np.asarray(cols[1], dtype=np.float64),
            grad_norm=np.asarray(cols[2], dtype=np.float64),
            elapsed_ns=np.asarray(cols[3], dtype=np.int64),
            beta_hat=np.asarray(cols[4], dtype=np.float64),
            nll=np.asarray(cols[5], dtype=np.float64),
            warnings=tuple(self.warnings),
            converged=converged,
            method=method,
        )


def _resolve_ref(cfg, model: ModelKind) -> tuple[ThetaParams | None, MetricWeights | None]:
    if cfg.ref_theta is None:
        return None, None
    w = cfg.ref_weights or info_constants(cfg.ref_theta, model).weights
    return cfg.ref_theta, w


def _as_blocks(data, m: int) -> Iterator[np.ndarray]:
    """Normalize a dataset or stream into 2-D float64 blocks."""
    if isinstance(data, np.ndarray):
        arr = np.ascontiguousarray(np.atleast_2d(data), dtype=np.float64)
        if arr.shape[1] != m and arr.size > 0:
            raise ValueError(f"data has dimension {arr.shape[1]}, expected {m}")
        for start in range(0, arr.shape[0], _BLOCK):
            yield arr[start : start + _BLOCK]
        return
    buf: list[np.ndarray] = []
    for item in data:
        item = np.asarray(item, dtype=np.float64)
        if item.ndim == 1:
            if item.shape[0] != m:
                raise ValueError(f"row has dimension {item.shape[0]}, expected {m}")
            buf.append(item)
            if len(buf) == _BLOCK:
                yield np.array(buf)
                buf.clear()
        elif item.ndim == 2:
            if buf:
                yield np.array(buf)
                buf.clear()
            if item.shape[1] != m:
                raise ValueError(f"chunk has dimension {item.shape[1]}, expected {m}")
            for start in range(0, item.shape[0], _BLOCK):
                yield np.ascontiguousarray(item[start : start + _BLOCK])
        else:
            raise ValueError("stream items must be vectors or row chunks")
    if buf:
        yield np.array(buf)


def _rebatch(blocks: Iterator[np.ndarray], size: int) -> Iterator[np.ndarray]:
    """Regroup blocks into consecutive batches of exactly ``size`` rows
    (the final batch may be shorter)."""
    pending: list[np.ndarray] = []
    have = 0
    for block in blocks:
        pos = 0
        while pos < block.shape[0]:
            take = min(size - have, block.shape[0] - pos)
            pending.append(block[pos : pos + take])
            have += take
            pos += take
            if have == size:
                yield pending[0] if len(pending) == 1 else np.vstack(pending)
                pending = []
                have = 0
    if pending:
        yield pending[0] if len(pending) == 1 else np.vstack(pending)


def _checkpoint_fn(cfg: IsgConfig):
    if cfg.checkpoints is not None:
        cps = cfg.checkpoints

        def next_after(n: int) -> int | None:
            i = bisect_right(cps, n)
            return cps[i] if i < len(cps) else None

        return next_after
    k = cfg.record_every
    return lambda n: (n // k + 1) * k


def _clamped_beta_step(
    beta: float, alpha: float, u_beta: float, i_beta: float, budget: float, counters
) -> float:
    """Multiplicative shape update with trust budget and rails."""
    e = alpha * u_beta / beta
    e_cap = min(budget / (beta * float(np.sqrt(i_beta))), 50.0)
    if abs(e) > e_cap:
        e = e_cap if e > 0 else -e_cap
        counters[4] += 1
    beta = beta * float(np.exp(e))
    if beta < BETA_RAILS[0]:
        beta = BETA_RAILS[0]
        counters[0] += 1
    elif beta > BETA_RAILS[1]:
        beta = BETA_RAILS[1]
        counters[1] += 1
    return beta


def _guard_warnings(counters, warnings: list[str]) -> None:
    if counters[0]:
        warnings.append(f"beta clamped at lower rail {BETA_RAILS[0]} ({int(counters[0])} times)")
    if counters[1]:
        warnings.append(f"beta clamped at upper rail {BETA_RAILS[1]} ({int(counters[1])} times)")
    if counters[2]:
        warnings.append(
            f"scatter tangent scaled to the spectral trust region ({int(counters[2])} times)"
        )
    if len(counters) > 3 and counters[3]:
        warnings.append(
            f"location step scaled to the metric trust region ({int(counters[3])} times)"
        )
    if len(counters) > 4 and counters[4]:
        warnings.append(
            f"shape step scaled to the metric trust region ({int(counters[4])} times)"
        )


def _trust_limits(consts: InfoConstants) -> tuple[float, float]:
    """Scatter and location caps for one online step; see TRUST_BUDGET."""
    return min(TRUST_SPECTRAL, TRUST_BUDGET / (2.0 * consts.j_2)), TRUST_BUDGET


def _inv_spd(sigma: np.ndarray) -> np.ndarray:
    cho = scipy.linalg.cho_factor(sigma)
    inv = scipy.linalg.cho_solve(cho, np.eye(sigma.shape[0]))
    return 0.5 * (inv + inv.T)


def _spd_geodesic(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Point at fraction ``t`` along the affine-invariant geodesic from
    ``a`` to ``b``: ``a^(1/2) (a^(-1/2) b a^(-1/2))^t a^(1/2)``."""
    la = np.linalg.cholesky(a)
    mid = scipy.linalg.solve_triangular(la, b, lower=True)
    mid = scipy.linalg.solve_triangular(la, mid.T, lower=True)
    evals, evecs = scipy.linalg.eigh(0.5 * (mid + mid.T))
    powed = (evecs * np.power(evals, t)) @ evecs.T
    out = la @ powed @ la.T
    return 0.5 * (out + out.T)


def isg_fit(data, cfg: IsgConfig, model: ModelKind) -> EstimateTrace:
    """Online natural-gradient fit over one pass of ``data``.

    Update ``n`` (0-based) applies step size ``alpha = a_coeff / (n +
    c a_coeff**2)`` with ``c`` = :data:`SCHED_BURN_IN`, decaying like
    ``a_coeff / n``.  The quadratic offset bounds the total squared step
    mass ``sum(alpha**2)`` uniformly in the gain, so large gains
    accelerate the tail without making the burn-in explosive.  Each
    update walks the blocks in the order location, scatter, shape, each
    block using the freshest values of the others on the same sample:

        mu    <- mu + alpha u_mu(mu_n, Sigma_n, beta_n)
        Sigma <- exp-retraction by alpha u_sigma(mu_{n+1}, Sigma_n, beta_n)
        beta  <- beta exp(alpha u_beta / beta) at (mu_{n+1}, Sigma_{n+1})

    ``data`` may be an array or an iterable of rows or row chunks; memory
    use is O(m^2) regardless of stream length.  Guards: the applied
    scatter and location steps are capped at the per-step trust budget
    (see ``TRUST_BUDGET``; never looser than spectral norm
    ``TRUST_SPECTRAL``), and the shape is clamped to [0.05, 50]; hits are
    counted in the trace warnings.
    Information constants are snapped to a one-percent geometric grid in
    the shape parameter and refreshed when the iterate drifts one percent
    from the point of computation.  A zero-length stream returns
    ``theta0`` with an empty trace.
    """
    ref, ref_w = _resolve_ref(cfg, model)
    tb = _TraceBuilder(ref, ref_w)
    counters = np.zeros(5, dtype=np.int64)
    if cfg.minibatch > 1:
        theta, n, last_row, consts = _isg_python(data, cfg, model, tb, counters)
    else:
        theta, n, last_row, consts = _isg_kernel_loop(data, cfg, model, tb, counters)
    _guard_warnings(counters, tb.warnings)
    if n > 0 and (not tb.rows or tb.rows[-1][0] != n):
        tb.add(n, theta, _stoch_grad_norm(theta, last_row, consts, model, cfg.scope))
    return tb.build(theta, True, "isg")


def _stoch_grad_norm(theta, row, consts, model, scope) -> float:
    if row is None:
        return np.nan
    g = stochastic_nat_grad(theta, row, consts, model, scope)
    return float(np.sqrt(metric_norm_sq(theta, g, consts.weights)))


def _isg_kernel_loop(data, cfg, model, tb, counters):
    theta0, scope = cfg.theta0, cfg.scope
    m = theta0.m
    mu = theta0.mu.copy()
    sigma = theta0.sigma.copy()
    sigma_inv = _inv_spd(sigma)
    beta_box = np.array([theta0.beta])
    model_id = _kern.MODEL_MGGD if model is ModelKind.MGGD else _kern.MODEL_STUDENT_T
    next_cp = _checkpoint_fn(cfg)
    diff = np.empty(m)
    z = np.empty(m)

    def fresh_consts() -> tuple[InfoConstants, float]:
        b = float(beta_box[0])
        if scope.free_beta:
            return cached_constants(model, m, b), b
        return info_constants(ThetaParams(mu, sigma, b), model), b

    consts, beta_ref = fresh_consts()
    trust, trust_len = _trust_limits(consts)
    n = 0
    cp = next_cp(0)
    since_refresh = 0
    last_row = None
    for block in _as_blocks(data, m):
        pos = 0
        length = block.shape[0]
        while pos < length:
            stop = length if cp is None else min(length, pos + cp - n)
            consumed, reason = _kern.run_block(
                block[pos:stop],
                n,
                cfg.a_coeff,
                mu,
                sigma,
                sigma_inv,
                beta_box,
                scope.free_mu,
                scope.free_beta,
                model_id,
                consts.i_mu,
                consts.j_1,
                consts.j_2,
                consts.i_beta,
                beta_ref,
                BETA_RAILS[0],
                BETA_RAILS[1],
                trust,
                trust_len,
                TRUST_CLIP,
                SCHED_BURN_IN * cfg.a_coeff * cfg.a_coeff,
                counters,
                diff,
                z,
            )
            n += consumed
            pos += consumed
            since_refresh += consumed
            if consumed:
                last_row = block[pos - 1]
            if reason == _kern.EXIT_BETA_DRIFT:
                consts, beta_ref = fresh_consts()
                trust, trust_len = _trust_limits(consts)
            if cp is not None and n == cp:
                if since_refresh >= _INV_REFRESH:
                    sigma_inv = _inv_spd(sigma)
                    since_refresh = 0
                theta_n = _snapshot(mu, sigma, beta_box)
                tb.add(
                    n,
                    theta_n,
                    _stoch_grad_norm(theta_n, last_row, consts, model, scope),
                )
                cp = next_cp(n)
        if since_refresh >= _INV_REFRESH:
            sigma_inv = _inv_spd(sigma)
            since_refresh = 0
    return _snapshot(mu, sigma, beta_box), n, last_row, consts


def _snapshot(mu, sigma, beta_box) -> ThetaParams:
    if not (
        np.all(np.isfinite(mu))
        and np.all(np.isfinite(sigma))
        and np.isfinite(beta_box[0])
    ):
        raise RuntimeError("online update diverged to non-finite state")
    return ThetaParams(mu=mu, sigma=sigma, beta=float(beta_box[0]))


def _spectral_cap(theta: ThetaParams, u_sigma: np.ndarray, cap: float, counters) -> np.ndarray:
    evals = scipy.linalg.eigh(u_sigma, theta.sigma, eigvals_only=True)
    spec = float(np.abs(evals).max())
    if spec > cap:
        counters[2] += 1
        return u_sigma * (cap / spec)
    return u_sigma


def _metric_length_cap(
    theta: ThetaParams, u_mu: np.ndarray, i_mu: float, cap: float, counters
) -> np.ndarray:
    move = float(np.sqrt(max(i_mu * u_mu @ np.linalg.solve(theta.sigma, u_mu), 0.0)))
    if move > cap:
        counters[3] += 1
        return u_mu * (cap / move)
    return u_mu


def _isg_python(data, cfg, model, tb, counters):
    """Reference implementation; also the minibatch path."""
    theta, scope = cfg.theta0, cfg.scope
    m = theta.m
    next_cp = _checkpoint_fn(cfg)

    def fresh(b: float) -> InfoConstants:
        if scope.free_beta:
            return cached_constants(model, m, b)
        return info_constants(theta, model)

    consts = fresh(theta.beta)
    trust, trust_len = _trust_limits(consts)
    beta_ref = theta.beta
    n = 0
    cp = next_cp(0)
    last_row = None
    for batch in _rebatch(_as_blocks(data, m), cfg.minibatch):
        alpha = cfg.a_coeff / (n + SCHED_BURN_IN * cfg.a_coeff * cfg.a_coeff)
        cap_spec = min(trust, alpha * TRUST_CLIP)
        cap_len = min(trust_len, alpha * TRUST_CLIP)
        if scope.free_mu:
            g = batch_nat_grad(theta, batch, consts, model, scope)
            u_mu = _metric_length_cap(theta, alpha * g.u_mu, consts.i_mu, cap_len, counters)
            theta = ThetaParams(theta.mu + u_mu, theta.sigma, theta.beta)
        g = batch_nat_grad(theta, batch, consts, model, scope)
        u_sigma = _spectral_cap(theta, alpha * g.u_sigma, cap_spec, counters)
        theta = product_retract(theta, TangentVector(np.zeros(m), u_sigma, 0.0))
        if scope.free_beta:
            g = batch_nat_grad(theta, batch, consts, model, scope)
            beta = _clamped_beta_step(
                theta.beta, alpha, g.u_beta, consts.i_beta, cap_len, counters
            )
            theta = ThetaParams(theta.mu, theta.sigma, beta)
            if abs(theta.beta - beta_ref) > 0.01 * beta_ref:
                consts = fresh(theta.beta)
                trust, trust_len = _trust_limits(consts)
                beta_ref = theta.beta
        n += 1
        last_row = batch[-1]
        if cp is not None and n == cp:
            tb.add(n, theta, _stoch_grad_norm(theta, batch[-1], consts, model, scope))
            cp = next_cp(n)
    return theta, n, last_row, consts


def _block_tangent(g: TangentVector, m: int, which: str) -> TangentVector:
    zero_v, zero_m = np.zeros(m), np.zeros((m, m))
    if which == "mu":
        return TangentVector(g.u_mu, zero_m, 0.0)
    if which == "sigma":
        return TangentVector(zero_v, g.u_sigma, 0.0)
    return TangentVector(zero_v, zero_m, g.u_beta)


def idg_fit(data, cfg: IdgConfig, model: ModelKind) -> EstimateTrace:
    """Batch natural-gradient descent of the empirical mean negative log
    likelihood.

    Each outer iteration sweeps the in-scope blocks in the order
    location, scatter, shape.  For each block the full-data natural
    gradient is recomputed at the current point and a step along it is
    accepted by the Armijo rule

        nll(retract(t u)) <= nll(theta) - c1 t ||u||^2

    backtracking from ``alpha_init``; more than ``max_backtracks``
    rejections raise :class:`LineSearchError` carrying the last iterate.
    Candidates that leave the shape rails or break positive definiteness
    are treated as infeasible and backtracked past.  The method stops when
    the product-metric norm of the full gradient falls below ``grad_tol``;
    the objective never increases across accepted steps.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    theta, scope = cfg.theta0, cfg.scope
    if data.shape[0] <= theta.m:
        raise ValueError("need more samples than dimensions")
    ref, ref_w = _resolve_ref(cfg, model)
    tb = _TraceBuilder(ref, ref_w)
    consts = info_constants(theta, model)
    beta_ref = theta.beta
    blocks = [
        name
        for name, on in (
            ("mu", scope.free_mu),
            ("sigma", scope.free_sigma),
            ("beta", scope.free_beta),
        )
        if on
    ]
    f_cur = mean_nll(data, theta, model)
    converged = False
    for it in range(cfg.max_iters):
        if abs(theta.beta - beta_ref) > 0.01 * beta_ref:
            consts = info_constants(theta, model)
            beta_ref = theta.beta
        g = batch_nat_grad(theta, data, consts, model, scope)
        gn = float(np.sqrt(metric_norm_sq(theta, g, consts.weights)))
        tb.add(it, theta, gn, f_cur)
        if gn < cfg.grad_tol:
            converged = True
            break
        for name in blocks:
            g = batch_nat_grad(theta, data, consts, model, scope)
            u = _block_tangent(g, theta.m, name)
            theta, f_cur = _armijo_step(theta, u, data, model, consts, f_cur, cfg, tb)
    else:
        # budget exhausted; record the final state before returning
        g = batch_nat_grad(theta, data, consts, model, scope)
        gn = float(np.sqrt(metric_norm_sq(theta, g, consts.weights)))
        tb.add(cfg.max_iters, theta, gn, f_cur)
        if gn < cfg.grad_tol:
            converged = True
        else:
            tb.warnings.append(
                f"gradient norm {gn:.3e} above tolerance after {cfg.max_iters} iterations"
            )
    return tb.build(theta, converged, "idg")


def _armijo_step(theta, u, data, model, consts, f_cur, cfg, tb):
    norm2 = metric_norm_sq(theta, u, consts.weights)
    if norm2 == 0.0:
        return theta, f_cur
    t = cfg.alpha_init
    for _ in range(cfg.max_backtracks):
        f_cand = np.inf
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            try:
                cand = product_retract(theta, u.scaled(t))
                if BETA_RAILS[0] <= cand.beta <= BETA_RAILS[1]:
                    f_cand = mean_nll(data, cand, model)
            except (np.linalg.LinAlgError, ValueError):
                f_cand = np.inf
        if np.isfinite(f_cand) and f_cand <= f_cur - cfg.armijo_c1 * t * norm2:
            return cand, f_cand
        t *= cfg.backtrack
    raise LineSearchError(
        f"no acceptable step after {cfg.max_backtracks} backtracks",
        theta,
        tb.build(theta, False, "idg"),
    )


def fp_fit(
    data,
    theta0: ThetaParams,
    scope: EstimationScope,
    model: ModelKind,
    tol: float = 1e-12,
    max_iters: int = 200,
    ref_theta: ThetaParams | None = None,
    ref_weights: MetricWeights | None = None,
) -> EstimateTrace:
    """Fixed-point iteration of the likelihood stationarity conditions.

    One sweep updates, with weights ``w_n = -h'(delta_n)`` at the current
    iterate:

        mu    <- sum w_n x_n / sum w_n              (when in scope)
        Sigma <- (2/N) sum w_n (x_n - mu)(x_n - mu)'
        beta  <- root of the shape score             (when in scope)

    For generalized Gaussian shapes above one, both the location and the
    scatter maps oscillate, so each is relaxed toward its map value by a
    factor chosen from the measured linearization (see the inline notes);
    relaxation never moves a fixed point.

    For the generalized Gaussian the raw scatter map is rescaled by
    ``rho^((1 - beta) / beta)`` with ``rho = tr(Sigma^(-1) H) / m``; the
    factor is one at every fixed point, so stationary points are
    unchanged, but it removes the scale oscillation that makes the plain
    map diverge for ``beta >= 2``.  For shapes above one the sweep
    additionally moves only a fraction ``(m+2)/(m+1+beta)`` along the
    geodesic toward the map value, damping the shape oscillation of light
    tails with the same fixed points.  Sweeps stop when successive scatter
    iterates differ by less than ``tol`` in unit-weight squared distance;
    exhausting ``max_iters`` raises :class:`ConvergenceError`.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n, m = data.shape
    if n <= m:
        raise ValueError("need more samples than dimensions")
    if ref_theta is not None and ref_weights is None:
        ref_weights = info_constants(ref_theta, model).weights
    tb = _TraceBuilder(ref_theta, ref_weights)
    mu, sigma, beta = theta0.mu.copy(), theta0.sigma.copy(), theta0.beta
    counters = np.zeros(3, dtype=np.int64)
    for it in range(max_iters):
        cho = scipy.linalg.cho_factor(sigma)
        diffs = data - mu
        y = scipy.linalg.cho_solve(cho, diffs.T)
        deltas = np.einsum("ij,ji->i", diffs, y)
        w = -np.atleast_1d(h_derivs(deltas, beta, model, m).dh_ddelta)
        if scope.free_mu:
            # the weighted-mean map oscillates for light generalized
            # Gaussian tails (dominant eigenvalue -2(beta-1)/m); step the
            # fraction m/(m-1+beta) toward it, same fixed point
            s_mu = min(1.0, m / (m - 1.0 + beta)) if model is ModelKind.MGGD else 1.0
            mu = mu + s_mu * ((w @ data) / w.sum() - mu)
            diffs = data - mu
        h_mat = 2.0 * (diffs.T * w) @ diffs / n
        if model is ModelKind.MGGD and beta != 1.0:
            y2 = scipy.linalg.cho_solve(cho, diffs.T)
            rho = float(np.einsum("ij,ji->", diffs * w[:, None], y2)) * 2.0 / (n * m)
            h_mat *= rho ** ((1.0 - beta) / beta)
        sigma_new = 0.5 * (h_mat + h_mat.T)
        if model is ModelKind.MGGD and beta > 1.0:
            # light tails make the plain map oscillate in shape as well as
            # scale: its dominant linearization eigenvalue is
            # -2(beta-1)/(m+2).  Moving the fraction (m+2)/(m+1+beta)
            # along the geodesic toward the map value centers the damped
            # spectrum, keeping the fixed points and a contraction rate
            # of (beta-1)/(m+1+beta).
            sigma_new = _spd_geodesic(sigma, sigma_new, (m + 2.0) / (m + 1.0 + beta))
        movement = spd_distance_sq(sigma, sigma_new, UNIT_WEIGHTS)
        sigma = sigma_new
        if scope.free_beta:
            cho = scipy.linalg.cho_factor(sigma)
            y = scipy.linalg.cho_solve(cho, diffs.T)
            deltas = np.einsum("ij,ji->i", diffs, y)
            beta = _shape_score_root(deltas, beta, model, m, counters, tb.warnings)
        theta_it = ThetaParams(mu, sigma, beta)
        tb.add(it + 1, theta_it, np.nan)
        if movement < tol:
            _guard_warnings(counters, tb.warnings)
            return tb.build(theta_it, True, "fp")
    _guard_warnings(counters, tb.warnings)
    raise ConvergenceError(
        f"fixed point did not converge in {max_iters} sweeps "
        f"(last movement {movement:.3e})",
        tb.build(ThetaParams(mu, sigma, beta), False, "fp"),
    )


def _shape_score_root(deltas, beta, model, m, counters, warnings) -> float:
    """Solve the shape stationarity ``alpha'(beta) + mean dh/dbeta = 0``
    on the rail interval, holding the radii fixed."""

    def score(b: float) -> float:
        _, dalpha, _ = log_normalizer(b, m, model)
        return dalpha + float(np.mean(np.atleast_1d(h_derivs(deltas, b, model, m).dh_dbeta)))

    lo, hi = BETA_RAILS
    s_lo, s_hi = score(lo), score(hi)
    if s_lo == 0.0:
        return lo
    if s_hi == 0.0:
        return hi
    if s_lo * s_hi > 0.0:
        # no root inside the rails; clamp to the better endpoint
        side = lo if abs(s_lo) < abs(s_hi) else hi
        counters[0 if side == lo else 1] += 1
        return side
    return float(brentq(score, lo, hi, xtol=1e-12, rtol=1e-14))


def mm_fit(data) -> ThetaParams:
    """Method-of-moments estimate of a generalized Gaussian.

    The location is the sample mean and ``C`` the sample scatter about
    it.  With ``d_n`` the Mahalanobis radii under ``(mu, C)``, the ratio
    ``mean(d^2) / mean(d)^2`` is matched to its population value

        R(beta) = Gamma(m/(2 beta)) Gamma((m+4)/(2 beta))
                  / Gamma((m+2)/(2 beta))^2

    by root bracketing on ``beta in [0.1, 10]`` (a ratio outside the
    attainable range raises), and the scatter is rescaled by
    ``m Gamma(m/(2 beta)) / (2^(1/beta) Gamma((m+2)/(2 beta)))``, which
    is one at the Gaussian member.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n, m = data.shape
    if n <= m:
        raise ValueError("need more samples than dimensions")
    mu = data.mean(axis=0)
    diffs = data - mu
    c_mat = diffs.T @ diffs / n
    c_mat = 0.5 * (c_mat + c_mat.T)
    cho = scipy.linalg.cho_factor(c_mat)
    y = scipy.linalg.cho_solve(cho, diffs.T)
    d = np.einsum("ij,ji->i", diffs, y)
    ratio = float(np.mean(d**2) / np.mean(d) ** 2)

    def log_ratio_gap(beta: float) -> float:
        k = m / (2.0 * beta)
        return (
            gammaln(k)
            + gammaln(k + 2.0 / beta)
            - 2.0 * gammaln(k + 1.0 / beta)
            - np.log(ratio)
        )

    lo, hi = 0.1, 10.0
    if log_ratio_gap(lo) * log_ratio_gap(hi) > 0.0:
        raise ValueError(
            f"moment ratio {ratio:.6f} outside the attainable range for m = {m}"
        )
    beta = float(brentq(log_ratio_gap, lo, hi, xtol=1e-12, rtol=1e-14))
    k = m / (2.0 * beta)
    scale = m * np.exp(gammaln(k) - gammaln(k + 1.0 / beta)) / 2.0 ** (1.0 / beta)
    return ThetaParams(mu=mu, sigma=scale * c_mat, beta=beta)
