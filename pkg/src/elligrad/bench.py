"""Monte Carlo benchmark harness.

Five experiment drivers share one :class:`TrialPlan`: convergence-rate
curves of the online estimator, the chi-square limit law of ``N d^2``,
final accuracy of the four methods against dataset size, wall-clock
timing, and classification of full-scope runs by the basin they end in.

Every trial is seeded from ``base_seed + trial`` (parameters, initial
point) and ``data_seed_base + trial`` (the dataset), so a plan is a
complete, portable description of an experiment: re-running it, with any
worker count, reproduces the CSV byte for byte apart from wall-clock
columns.  The RNG call order inside a trial (rho, beta, optional
initial-distance draw, perturbation direction) is part of that contract.
Failed trials are excluded from the aggregates and counted in the CSV
footer.

CSV layout: a ``# manifest:`` JSON comment line, a header row, data rows,
then ``#``-prefixed summary/footer lines.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from math import sqrt
from typing import Callable, Sequence

import numpy as np
from scipy import stats as spstats

from .estimators import IdgConfig, IsgConfig, fp_fit, idg_fit, isg_fit, mm_fit
from .fisher import InfoConstants, batch_nat_grad, info_constants
from .manifold import metric_norm_sq, product_distance_sq
from .models import EstimationScope, ModelKind, ThetaParams
from .sampling import SamplerConfig, make_true_params, perturb_params, sample

__all__ = [
    "TrialPlan",
    "RateResult",
    "Chi2Result",
    "EfficiencyResult",
    "TimeResult",
    "StationarityResult",
    "bench_rate",
    "bench_chi2",
    "bench_efficiency",
    "bench_time",
    "bench_stationarity",
    "KS_CRITICAL_1PCT",
    "BASIN_D2",
]

METHODS = ("mm", "fp", "idg", "isg")

#: Two-sided Kolmogorov-Smirnov 1% coefficient: the KS statistic of
#: ``n`` draws from the hypothesized law exceeds ``KS_CRITICAL_1PCT /
#: sqrt(n)`` with probability 0.01 (asymptotic).
KS_CRITICAL_1PCT = 1.62762

#: Squared product distance below which a full-scope run is classified
#: as having reached the true parameter rather than another stationary
#: point.
BASIN_D2 = 0.05


@dataclass(frozen=True)
class TrialPlan:
    """Complete description of one Monte Carlo experiment.

    ``init_kind`` selects the initial point: ``"perturb"`` draws it at a
    squared product distance from the truth taken uniformly from
    ``init_d2`` (a degenerate interval pins the distance and skips the
    draw), ``"mm10"`` uses the moment estimate on the first 10% of the
    dataset with out-of-scope blocks held at the truth.  ``data_seed``
    defaults to ``base_seed + 1000`` so datasets never share a stream
    with parameter draws.  ``n_grid`` is the dataset-size sweep used by
    the efficiency and timing benches; empty means ``(n_samples,)``.
    """

    trials: int
    m: int
    n_samples: int
    model: ModelKind = ModelKind.MGGD
    scope: EstimationScope = EstimationScope.SIGMA_ONLY
    methods: tuple[str, ...] = ("isg",)
    base_seed: int = 0
    rho_range: tuple[float, float] = (0.2, 0.8)
    beta_range: tuple[float, float] = (0.2, 5.0)
    a_coeff: float = 1.0
    init_kind: str = "perturb"
    init_d2: tuple[float, float] = (1.0, 1.0)
    data_seed: int | None = None
    n_grid: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.m < 2:
            raise ValueError("dimension must be at least 2")
        if self.n_samples <= self.m:
            raise ValueError("need more samples than dimensions")
        bad = [meth for meth in self.methods if meth not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        if not self.methods:
            raise ValueError("at least one method is required")
        if "mm" in self.methods and self.model is not ModelKind.MGGD:
            raise ValueError("the moment method covers the generalized Gaussian family only")
        if self.init_kind not in ("perturb", "mm10"):
            raise ValueError("init_kind must be 'perturb' or 'mm10'")
        for name, (lo, hi) in (
            ("rho_range", self.rho_range),
            ("beta_range", self.beta_range),
            ("init_d2", self.init_d2),
        ):
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi or lo < 0:
                raise ValueError(f"{name} must be an ordered non-negative interval")
        if self.a_coeff <= 0:
            raise ValueError("step-size gain must be positive")
        for n in self.n_grid:
            if n <= self.m:
                raise ValueError("every grid size must exceed the dimension")
        if self.n_grid and max(self.n_grid) > self.n_samples:
            raise ValueError("grid sizes may not exceed n_samples")

    @property
    def data_seed_base(self) -> int:
        return self.base_seed + 1000 if self.data_seed is None else self.data_seed

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(sorted(self.n_grid)) or (self.n_samples,)

    def manifest(self) -> str:
        """The plan as a sorted one-line JSON object."""
        payload = {
            "trials": self.trials,
            "m": self.m,
            "n_samples": self.n_samples,
            "model": self.model.value,
            "scope": self.scope.value,
            "methods": list(self.methods),
            "base_seed": self.base_seed,
            "data_seed_base": self.data_seed_base,
            "rho_range": list(self.rho_range),
            "beta_range": list(self.beta_range),
            "a_coeff": self.a_coeff,
            "init_kind": self.init_kind,
            "init_d2": list(self.init_d2),
            "n_grid": list(self.sizes),
        }
        return json.dumps(payload, sort_keys=True, separators=(", ", ": "))


def _blend_scope(truth: ThetaParams, theta: ThetaParams, scope: EstimationScope) -> ThetaParams:
    """Replace out-of-scope blocks of ``theta`` with the true values, so
    distances compare only what a method actually estimated."""
    return ThetaParams(
        theta.mu if scope.free_mu else truth.mu,
        theta.sigma,
        theta.beta if scope.free_beta else truth.beta,
    )


def _trial_env(plan: TrialPlan, t: int, n_rows: int):
    """Truth, metric constants, dataset, and an initial-point factory.

    The factory takes the data slice a method will consume, so the
    moment-based initialization always uses 10% of what is actually fed
    to the estimator.
    """
    rng = np.random.default_rng(plan.base_seed + t)
    rho = float(rng.uniform(plan.rho_range[0], plan.rho_range[1]))
    beta = float(rng.uniform(plan.beta_range[0], plan.beta_range[1]))
    truth = make_true_params(plan.m, rho, beta, mu_seed=plan.base_seed + t)
    consts = info_constants(truth, plan.model)
    if plan.init_kind == "perturb":
        lo, hi = plan.init_d2
        target = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
        theta0 = perturb_params(truth, consts, target_d2=target, rng=rng, scope=plan.scope)

        def init(chunk: np.ndarray) -> ThetaParams:
            return theta0

    else:

        def init(chunk: np.ndarray) -> ThetaParams:
            head = chunk[: max(plan.m + 2, chunk.shape[0] // 10)]
            return _blend_scope(truth, mm_fit(head), plan.scope)

    data = sample(SamplerConfig(n=n_rows, seed=plan.data_seed_base + t, model=plan.model, theta=truth))
    return truth, consts, data, init


def _fit_once(
    method: str,
    chunk: np.ndarray,
    theta0: ThetaParams,
    plan: TrialPlan,
    truth: ThetaParams,
    consts: InfoConstants,
) -> tuple[ThetaParams, float]:
    """Run one method on one data slice; returns (estimate, seconds).

    The estimate has out-of-scope blocks at the truth (the gradient and
    fixed-point methods hold them at the initial point, which is already
    blended; the moment method estimates everything and is blended
    here), so the squared distance to the truth measures in-scope error
    for every method alike.
    """
    t0 = time.perf_counter_ns()
    if method == "mm":
        theta_hat = _blend_scope(truth, mm_fit(chunk), plan.scope)
    elif method == "fp":
        theta_hat = fp_fit(chunk, theta0, plan.scope, plan.model).theta_hat
    elif method == "idg":
        cfg = IdgConfig(theta0=theta0, scope=plan.scope)
        theta_hat = idg_fit(chunk, cfg, plan.model).theta_hat
    else:
        cfg = IsgConfig(
            theta0=theta0,
            scope=plan.scope,
            a_coeff=plan.a_coeff,
            checkpoints=[chunk.shape[0]],
        )
        theta_hat = isg_fit(chunk, cfg, plan.model).theta_hat
    return theta_hat, (time.perf_counter_ns() - t0) / 1e9


def _guarded(worker: Callable, plan: TrialPlan, t: int):
    try:
        with np.errstate(all="ignore"):
            return "ok", worker(plan, t)
    except Exception as exc:
        return "err", f"trial {t}: {type(exc).__name__}: {exc}"


def _run_trials(worker: Callable, plan: TrialPlan, workers: int):
    runner = partial(_guarded, worker, plan)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(runner, range(plan.trials)))
    else:
        raw = [runner(t) for t in range(plan.trials)]
    good = [payload for tag, payload in raw if tag == "ok"]
    errors = tuple(payload for tag, payload in raw if tag == "err")
    return good, errors


def _g17(v: float) -> str:
    return f"{float(v):.17g}"


def _write_csv(path, manifest: str, header: str, rows, footer: Sequence[str]) -> None:
    with open(path, "w") as fh:
        fh.write(f"# manifest: {manifest}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")
        for line in footer:
            fh.write(f"# {line}\n")


def _excluded_line(plan: TrialPlan, errors: tuple[str, ...]) -> str:
    return f"excluded: {len(errors)}/{plan.trials}"


# --------------------------------------------------------------------------
# convergence rate


@dataclass(frozen=True)
class RateResult:
    """Mean squared distance to the truth at logarithmic checkpoints."""

    checkpoints: np.ndarray
    mean_d2: np.ndarray
    slope_last_decade: float
    completed: int
    errors: tuple[str, ...]


def rate_checkpoints(n: int, per_decade: int = 12) -> list[int]:
    """Strictly increasing sample counts, roughly ``per_decade`` per
    decade from 10 (or earlier for tiny runs) up to ``n``."""
    lo = np.log10(min(10, n))
    hi = np.log10(n)
    count = max(2, int(np.ceil((hi - lo) * per_decade)) + 1)
    return np.unique(np.logspace(lo, hi, count).astype(int)).tolist()


def _rate_trial(plan: TrialPlan, t: int) -> np.ndarray:
    truth, consts, data, init = _trial_env(plan, t, plan.n_samples)
    cfg = IsgConfig(
        theta0=init(data),
        scope=plan.scope,
        a_coeff=plan.a_coeff,
        checkpoints=rate_checkpoints(plan.n_samples),
        ref_theta=truth,
        ref_weights=consts,
    )
    trace = isg_fit(data, cfg, plan.model)
    keep = np.isin(trace.iters, rate_checkpoints(plan.n_samples))
    return np.asarray(trace.d2_to_ref)[keep]


def bench_rate(plan: TrialPlan, out_csv=None, workers: int = 0) -> RateResult:
    """Average ``d^2(truth, theta_n)`` over trials for the online method
    and fit the log-log slope over the final decade of samples."""
    cps = np.asarray(rate_checkpoints(plan.n_samples))
    good, errors = _run_trials(_rate_trial, plan, workers)
    if not good:
        raise RuntimeError(f"all {plan.trials} trials failed; first error: {errors[0]}")
    mean_d2 = np.mean(np.stack(good), axis=0)
    tail = cps >= plan.n_samples / 10
    if np.count_nonzero(tail) < 2:
        tail = np.ones_like(tail, dtype=bool)
    slope = float(np.polyfit(np.log(cps[tail]), np.log(mean_d2[tail]), 1)[0])
    result = RateResult(cps, mean_d2, slope, len(good), errors)
    if out_csv is not None:
        rows = ([str(int(n)), _g17(v)] for n, v in zip(cps, mean_d2))
        footer = [f"slope_last_decade: {_g17(slope)}", _excluded_line(plan, errors)]
        _write_csv(out_csv, plan.manifest(), "n,mean_d2", rows, footer)
    return result


# --------------------------------------------------------------------------
# chi-square limit law


@dataclass(frozen=True)
class Chi2Result:
    """Per-trial ``N d^2`` statistics and their fit to the limit law."""

    stats: np.ndarray
    dof: int
    mean: float
    variance: float
    ks_stat: float
    ks_critical: float
    completed: int
    errors: tuple[str, ...]


def chi2_dof(m: int, scope: EstimationScope) -> int:
    """Degrees of freedom of the limiting law: the scatter contributes
    ``m(m+1)/2`` and a free location adds ``m``."""
    dof = m * (m + 1) // 2
    if scope is EstimationScope.MU_SIGMA:
        dof += m
    return dof


def _chi2_trial(plan: TrialPlan, t: int) -> tuple[int, float]:
    truth, consts, data, init = _trial_env(plan, t, plan.n_samples)
    cfg = IsgConfig(
        theta0=init(data),
        scope=plan.scope,
        a_coeff=plan.a_coeff,
        checkpoints=[plan.n_samples],
        ref_theta=truth,
        ref_weights=consts,
    )
    trace = isg_fit(data, cfg, plan.model)
    return t, plan.n_samples * float(trace.d2_to_ref[-1])


def bench_chi2(plan: TrialPlan, out_csv=None, workers: int = 0) -> Chi2Result:
    """Collect ``N d^2(truth, theta_N)`` per trial and compare against
    the chi-square law with :func:`chi2_dof` degrees of freedom."""
    if plan.scope is EstimationScope.MU_SIGMA_BETA:
        raise ValueError("the limit law covers the scatter and location-scatter scopes only")
    if plan.a_coeff != 1.0:
        raise ValueError("the limit law holds for unit step-size gain")
    dof = chi2_dof(plan.m, plan.scope)
    good, errors = _run_trials(_chi2_trial, plan, workers)
    if not good:
        raise RuntimeError(f"all {plan.trials} trials failed; first error: {errors[0]}")
    stats = np.array([v for _, v in good])
    ks = float(spstats.kstest(stats, "chi2", args=(dof,)).statistic)
    crit = KS_CRITICAL_1PCT / sqrt(stats.size)
    result = Chi2Result(
        stats=stats,
        dof=dof,
        mean=float(stats.mean()),
        variance=float(stats.var(ddof=1)) if stats.size > 1 else float("nan"),
        ks_stat=ks,
        ks_critical=crit,
        completed=stats.size,
        errors=errors,
    )
    if out_csv is not None:
        rows = ([str(t), _g17(v)] for t, v in good)
        summary = {
            "dof": dof,
            "mean": result.mean,
            "variance": result.variance,
            "ks_stat": ks,
            "ks_critical_1pct": crit,
        }
        footer = [
            "summary: " + json.dumps(summary, sort_keys=True),
            _excluded_line(plan, errors),
        ]
        _write_csv(out_csv, plan.manifest(), "trial,n_d2", rows, footer)
    return result


# --------------------------------------------------------------------------
# efficiency against dataset size


@dataclass(frozen=True)
class EfficiencyResult:
    """Mean and sample variance of final ``d^2`` per (size, method)."""

    sizes: tuple[int, ...]
    methods: tuple[str, ...]
    mean_d2: dict
    var_d2: dict
    completed: int
    errors: tuple[str, ...]

    def mean(self, n: int, method: str) -> float:
        return self.mean_d2[(n, method)]


def _efficiency_trial(plan: TrialPlan, t: int) -> list[tuple[int, str, float, float]]:
    sizes = plan.sizes
    truth, consts, data, init = _trial_env(plan, t, max(sizes))
    rows = []
    for n in sizes:
        chunk = data[:n]
        theta0 = init(chunk)
        for method in plan.methods:
            theta_hat, seconds = _fit_once(method, chunk, theta0, plan, truth, consts)
            d2 = product_distance_sq(truth, theta_hat, consts)
            rows.append((n, method, d2, seconds))
    return rows


def _efficiency_raw(plan: TrialPlan, workers: int):
    good, errors = _run_trials(_efficiency_trial, plan, workers)
    if not good:
        raise RuntimeError(f"all {plan.trials} trials failed; first error: {errors[0]}")
    cells: dict = {}
    for rows in good:
        for n, method, d2, seconds in rows:
            cells.setdefault((n, method), []).append((d2, seconds))
    return cells, len(good), errors


def bench_efficiency(plan: TrialPlan, out_csv=None, workers: int = 0) -> EfficiencyResult:
    """Final accuracy of every method across the dataset-size grid.

    Within a trial all methods and sizes consume prefixes of the same
    dataset, so comparisons are paired sample by sample.
    """
    cells, completed, errors = _efficiency_raw(plan, workers)
    mean_d2 = {}
    var_d2 = {}
    for key, vals in cells.items():
        d2s = np.array([d for d, _ in vals])
        mean_d2[key] = float(d2s.mean())
        var_d2[key] = float(d2s.var(ddof=1)) if d2s.size > 1 else float("nan")
    result = EfficiencyResult(plan.sizes, plan.methods, mean_d2, var_d2, completed, errors)
    if out_csv is not None:
        rows = (
            [str(n), method, _g17(mean_d2[(n, method)]), _g17(var_d2[(n, method)])]
            for n in plan.sizes
            for method in plan.methods
        )
        _write_csv(
            out_csv,
            plan.manifest(),
            "n,method,mean_d2,var_d2",
            rows,
            [_excluded_line(plan, errors)],
        )
    return result


# --------------------------------------------------------------------------
# wall-clock timing


@dataclass(frozen=True)
class TimeResult:
    """Median wall-clock seconds per (size, method); ordering is the
    only machine-independent content."""

    sizes: tuple[int, ...]
    methods: tuple[str, ...]
    median_seconds: dict
    completed: int
    errors: tuple[str, ...]

    def median(self, n: int, method: str) -> float:
        return self.median_seconds[(n, method)]


def _warm_methods(plan: TrialPlan) -> None:
    """Run every method once on a small dataset so one-time costs
    (kernel compilation, constant caches) stay out of the timings."""
    warm = TrialPlan(
        trials=1,
        m=plan.m,
        n_samples=max(64, 2 * plan.m),
        model=plan.model,
        scope=plan.scope,
        methods=plan.methods,
        base_seed=plan.base_seed,
        a_coeff=plan.a_coeff,
        init_kind=plan.init_kind,
        init_d2=plan.init_d2,
    )
    _guarded(_efficiency_trial, warm, 0)


def bench_time(plan: TrialPlan, out_csv=None, workers: int = 0) -> TimeResult:
    """Time every method on identical data and report per-cell medians."""
    _warm_methods(plan)
    cells, completed, errors = _efficiency_raw(plan, workers)
    medians = {}
    for key, vals in cells.items():
        medians[key] = float(np.median([s for _, s in vals]))
    result = TimeResult(plan.sizes, plan.methods, medians, completed, errors)
    if out_csv is not None:
        rows = (
            [str(n), method, _g17(medians[(n, method)])]
            for n in plan.sizes
            for method in plan.methods
        )
        _write_csv(
            out_csv,
            plan.manifest(),
            "n,method,median_seconds",
            rows,
            [_excluded_line(plan, errors)],
        )
    return result


# --------------------------------------------------------------------------
# full-scope basin classification


@dataclass(frozen=True)
class StationarityResult:
    """Per-trial terminal state of full-scope online runs."""

    trials: np.ndarray
    beta_true: np.ndarray
    d2_final: np.ndarray
    grad_norm: np.ndarray
    correct: np.ndarray
    fraction_correct: float
    completed: int
    errors: tuple[str, ...]


def _stationarity_trial(plan: TrialPlan, t: int) -> tuple[int, float, float, float]:
    truth, consts, data, init = _trial_env(plan, t, plan.n_samples)
    cfg = IsgConfig(
        theta0=init(data),
        scope=plan.scope,
        a_coeff=plan.a_coeff,
        checkpoints=[plan.n_samples],
        ref_theta=truth,
        ref_weights=consts,
    )
    trace = isg_fit(data, cfg, plan.model)
    d2 = product_distance_sq(truth, trace.theta_hat, consts)
    # gradient of the full-data objective at the terminal point, in the
    # metric there: small values mean the run stopped at *a* stationary
    # point, whether or not it is the true one
    consts_hat = info_constants(trace.theta_hat, plan.model)
    grad = batch_nat_grad(trace.theta_hat, data, consts_hat, plan.model, plan.scope)
    gnorm = sqrt(metric_norm_sq(trace.theta_hat, grad, consts_hat.weights))
    return t, float(truth.beta), float(d2), float(gnorm)


def bench_stationarity(plan: TrialPlan, out_csv=None, workers: int = 0) -> StationarityResult:
    """Classify full-scope online runs by whether they end within
    :data:`BASIN_D2` of the truth; report the terminal full-data
    gradient norm alongside."""
    if plan.scope is not EstimationScope.MU_SIGMA_BETA:
        raise ValueError("basin classification is defined for the full scope")
    good, errors = _run_trials(_stationarity_trial, plan, workers)
    if not good:
        raise RuntimeError(f"all {plan.trials} trials failed; first error: {errors[0]}")
    trials = np.array([t for t, _, _, _ in good])
    beta_true = np.array([b for _, b, _, _ in good])
    d2 = np.array([d for _, _, d, _ in good])
    gnorm = np.array([g for _, _, _, g in good])
    correct = d2 < BASIN_D2
    frac = float(correct.mean())
    result = StationarityResult(trials, beta_true, d2, gnorm, correct, frac, len(good), errors)
    if out_csv is not None:
        rows = (
            [str(int(t)), _g17(b), _g17(d), _g17(g), str(int(c))]
            for t, b, d, g, c in zip(trials, beta_true, d2, gnorm, correct)
        )
        footer = [
            f"fraction_correct: {_g17(frac)} ({int(correct.sum())}/{len(good)} below d2 {BASIN_D2})",
            _excluded_line(plan, errors),
        ]
        _write_csv(out_csv, plan.manifest(), "trial,beta_true,d2_final,grad_norm,correct", rows, footer)
    return result
