"""Command-line interface.

Subcommands fall into three groups: data plumbing (``sample``,
``estimate``), the Monte Carlo benches (``bench-rate``, ``bench-chi2``,
``bench-eff``, ``bench-time``, ``bench-stat``), and the image
applications (``color-transfer``, ``texture-features``, ``pca``).

Every delimited output starts with a ``# manifest:`` JSON comment that
records how it was produced.  Report commands also render a PNG next to
the CSV unless ``--no-fig`` is given; the CSV remains the
machine-readable contract.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    TrialPlan,
    bench_chi2,
    bench_efficiency,
    bench_rate,
    bench_stationarity,
    bench_time,
)
from .estimators import EstimateTrace, IdgConfig, IsgConfig, fp_fit, idg_fit, isg_fit, mm_fit
from .figures import (
    fig_chi2,
    fig_efficiency,
    fig_projection,
    fig_rate,
    fig_stationarity,
    fig_time,
)
from .images import load_image, save_image
from .models import EstimationScope, ModelKind, ThetaParams
from .sampling import SamplerConfig, make_true_params, sample
from .transfer import (
    TEXTURE_METHODS,
    TRANSFER_METHODS,
    TRANSFER_MODES,
    color_transfer,
    pca_project,
    texture_features,
)

__all__ = ["main", "build_parser"]

_SCOPES = ("sigma", "mu-sigma", "full")
_MODELS = ("mggd", "t")


def _manifest_line(payload: dict) -> str:
    return "# manifest: " + json.dumps(payload, sort_keys=True, separators=(", ", ": "))


def _load_rows(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.size == 0:
        raise ValueError(f"no data rows in {path}")
    return data


def _add_fig_flag(sub) -> None:
    sub.add_argument(
        "--no-fig",
        action="store_true",
        help="skip the PNG next to the CSV output",
    )


def _maybe_figure(args, render, result) -> None:
    if not args.no_fig:
        png = Path(args.out).with_suffix(".png")
        render(result, png)
        print(f"figure: {png}")


# --------------------------------------------------------------------------
# sample / estimate


def _cmd_sample(args) -> int:
    theta = make_true_params(args.m, args.rho, args.beta, mu_seed=args.mu_seed)
    model = ModelKind(args.model)
    data = sample(SamplerConfig(n=args.n, seed=args.seed, model=model, theta=theta))
    payload = {
        "command": "sample",
        "model": model.value,
        "m": args.m,
        "n": args.n,
        "rho": args.rho,
        "beta": args.beta,
        "mu_seed": args.mu_seed,
        "seed": args.seed,
    }
    with open(args.out, "w") as fh:
        fh.write(_manifest_line(payload) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    print(f"wrote {data.shape[0]} rows of dimension {data.shape[1]} to {args.out}")
    return 0


def _initial_point(data: np.ndarray, model: ModelKind, beta0: float) -> ThetaParams:
    """Default starting point: the moment estimate on the first 10% of
    the rows (for the heavy-tailed family, a covariance-based location-
    scatter guess with the shape supplied by the caller)."""
    head = data[: max(data.shape[1] + 2, data.shape[0] // 10)]
    if model is ModelKind.MGGD:
        return mm_fit(head)
    mu = head.mean(axis=0)
    diffs = head - mu
    cov = diffs.T @ diffs / head.shape[0]
    scale = (beta0 - 2.0) / beta0 if beta0 > 2.0 else 1.0
    return ThetaParams(mu, 0.5 * (cov + cov.T) * scale, beta0)


def _cmd_estimate(args) -> int:
    data = _load_rows(args.input)
    model = ModelKind(args.model)
    scope = EstimationScope(args.scope)
    if args.seed is not None and args.method == "isg":
        # online estimates depend on sample order; a seed makes the
        # shuffle reproducible
        data = data[np.random.default_rng(args.seed).permutation(data.shape[0])]
    theta0 = _initial_point(data, model, args.beta0)
    gain = args.a if args.a is not None else (100.0 if scope is EstimationScope.MU_SIGMA_BETA else 1.0)
    if args.method == "isg":
        cfg = IsgConfig(theta0=theta0, scope=scope, a_coeff=gain, minibatch=args.minibatch)
        trace = isg_fit(data, cfg, model)
    elif args.method == "idg":
        trace = idg_fit(data, IdgConfig(theta0=theta0, scope=scope), model)
    elif args.method == "fp":
        trace = fp_fit(data, theta0, scope, model)
    else:
        if model is not ModelKind.MGGD:
            raise ValueError("the moment method covers the generalized Gaussian family only")
        t0 = time.perf_counter_ns()
        theta = mm_fit(data)
        elapsed = time.perf_counter_ns() - t0
        trace = EstimateTrace(
            theta_hat=theta,
            iters=np.array([data.shape[0]]),
            d2_to_ref=np.array([np.nan]),
            grad_norm=np.array([np.nan]),
            elapsed_ns=np.array([elapsed]),
            beta_hat=np.array([theta.beta]),
            nll=np.array([np.nan]),
            warnings=(),
            converged=True,
            method="mm",
        )
    trace.write_csv(args.out)
    print(
        f"{args.method}: beta_hat {trace.theta_hat.beta:.6g}, "
        f"records {len(trace.iters)}, converged {trace.converged}, trace {args.out}"
    )
    for note in trace.warnings:
        print(f"note: {note}")
    return 0


# --------------------------------------------------------------------------
# benches


def _plan_from_args(args, *, methods=None, scope=None) -> TrialPlan:
    return TrialPlan(
        trials=args.trials,
        m=args.m,
        n_samples=args.n,
        model=ModelKind(args.model),
        scope=EstimationScope(scope if scope is not None else args.scope),
        methods=tuple(methods if methods is not None else args.methods.split(",")),
        base_seed=args.base_seed,
        rho_range=tuple(args.rho_range),
        beta_range=tuple(args.beta_range),
        a_coeff=args.a,
        init_kind=args.init,
        init_d2=tuple(args.init_d2),
        data_seed=args.data_seed,
        n_grid=tuple(args.n_grid) if args.n_grid else (),
    )


def _add_plan_flags(sub, *, trials, n, scope="sigma", a=1.0, init_d2=(1.0, 1.0), with_methods=False):
    sub.add_argument("--trials", type=int, default=trials)
    sub.add_argument("--m", type=int, default=5)
    sub.add_argument("--n", type=int, default=n)
    sub.add_argument("--model", choices=_MODELS, default="mggd")
    sub.add_argument("--scope", choices=_SCOPES, default=scope)
    if with_methods:
        sub.add_argument(
            "--methods",
            default="mm,fp,idg,isg",
            help="comma-separated subset of mm,fp,idg,isg",
        )
    sub.add_argument("--base-seed", type=int, default=0)
    sub.add_argument("--data-seed", type=int, default=None)
    sub.add_argument("--rho-range", type=float, nargs=2, default=[0.2, 0.8], metavar=("LO", "HI"))
    sub.add_argument("--beta-range", type=float, nargs=2, default=[0.2, 5.0], metavar=("LO", "HI"))
    sub.add_argument("--a", type=float, default=a, help="online step-size gain")
    sub.add_argument("--init", choices=["perturb", "mm10"], default="perturb")
    sub.add_argument(
        "--init-d2",
        type=float,
        nargs=2,
        default=list(init_d2),
        metavar=("LO", "HI"),
        help="range of the initial squared distance to the truth",
    )
    sub.add_argument("--n-grid", type=int, nargs="+", default=None, metavar="N")
    sub.add_argument("--workers", type=int, default=0)
    sub.add_argument("--out", required=True)
    _add_fig_flag(sub)


def _cmd_bench_rate(args) -> int:
    res = bench_rate(_plan_from_args(args, methods=("isg",)), out_csv=args.out, workers=args.workers)
    print(
        f"rate: slope {res.slope_last_decade:.4f} over the final decade, "
        f"{res.completed}/{args.trials} trials, {args.out}"
    )
    _maybe_figure(args, fig_rate, res)
    return 0


def _cmd_bench_chi2(args) -> int:
    res = bench_chi2(_plan_from_args(args, methods=("isg",)), out_csv=args.out, workers=args.workers)
    print(
        f"chi2: mean {res.mean:.2f} against dof {res.dof}, KS {res.ks_stat:.4f} "
        f"(1% critical {res.ks_critical:.4f}), {res.completed}/{args.trials} trials, {args.out}"
    )
    _maybe_figure(args, fig_chi2, res)
    return 0


def _cmd_bench_eff(args) -> int:
    res = bench_efficiency(_plan_from_args(args), out_csv=args.out, workers=args.workers)
    for n in res.sizes:
        cells = ", ".join(f"{meth} {res.mean(n, meth):.3e}" for meth in res.methods)
        print(f"N={n}: {cells}")
    _maybe_figure(args, fig_efficiency, res)
    return 0


def _cmd_bench_time(args) -> int:
    res = bench_time(_plan_from_args(args), out_csv=args.out, workers=args.workers)
    for n in res.sizes:
        cells = ", ".join(f"{meth} {res.median(n, meth):.3g}s" for meth in res.methods)
        print(f"N={n}: {cells}")
    _maybe_figure(args, fig_time, res)
    return 0


def _cmd_bench_stat(args) -> int:
    res = bench_stationarity(
        _plan_from_args(args, methods=("isg",), scope="full"), out_csv=args.out, workers=args.workers
    )
    print(
        f"stationarity: {int(res.correct.sum())}/{res.completed} runs reached the truth "
        f"(fraction {res.fraction_correct:.2f}), {args.out}"
    )
    _maybe_figure(args, fig_stationarity, res)
    return 0


# --------------------------------------------------------------------------
# image applications


def _cmd_color_transfer(args) -> int:
    src = load_image(args.input)
    tgt = load_image(args.target)
    out, info = color_transfer(
        src, tgt, args.mode, args.method, seed=args.seed, subsample=args.subsample
    )
    save_image(out, args.out)
    print(
        f"color-transfer {args.mode}/{args.method}: input beta {info.theta_input.beta:.4g}, "
        f"target beta {info.theta_target.beta:.4g}, wrote {args.out}"
    )
    return 0


def _cmd_texture_features(args) -> int:
    rows = []
    for path in args.input:
        vec = texture_features(load_image(path), args.method, seed=args.seed)
        rows.append((path, vec))
    payload = {
        "command": "texture-features",
        "method": args.method,
        "seed": args.seed,
        "inputs": [str(p) for p in args.input],
        "columns": ["ev1", "ev2", "ev3", "mu1", "mu2", "mu3", "beta"],
    }
    with open(args.out, "w") as fh:
        fh.write(_manifest_line(payload) + "\n")
        for _, vec in rows:
            fh.write(",".join(f"{v:.17g}" for v in vec) + "\n")
    for path, vec in rows:
        print(f"{path}: eigenvalues {vec[0]:.4g} {vec[1]:.4g} {vec[2]:.4g}, beta {vec[6]:.4g}")
    print(f"wrote {len(rows)} feature rows to {args.out}")
    return 0


def _cmd_pca(args) -> int:
    feats = _load_rows(args.input)
    proj = pca_project(feats)
    payload = {
        "command": "pca",
        "input": str(args.input),
        "rows": int(proj.shape[0]),
        "scaling": "z-score",
        "sign": "largest-magnitude loading positive",
    }
    with open(args.out, "w") as fh:
        fh.write(_manifest_line(payload) + "\n")
        for row in proj:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    print(f"projected {proj.shape[0]} rows to {args.out}")
    if not args.no_fig:
        png = Path(args.out).with_suffix(".png")
        fig_projection(proj, png, labels=range(proj.shape[0]))
        print(f"figure: {png}")
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="elligrad",
        description="Elliptical-distribution estimation: online/batch information "
        "gradients, baselines, benchmarks, and color image applications.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("sample", help="draw rows from a model and write CSV")
    sub.add_argument("--model", choices=_MODELS, default="mggd")
    sub.add_argument("--m", type=int, required=True)
    sub.add_argument("--n", type=int, required=True)
    sub.add_argument("--rho", type=float, default=0.5, help="scatter correlation decay")
    sub.add_argument("--beta", type=float, default=1.0, help="shape parameter")
    sub.add_argument("--mu-seed", type=int, default=0, help="seed of the random location")
    sub.add_argument("--seed", type=int, required=True, help="sampler seed")
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_sample)

    sub = subs.add_parser("estimate", help="fit parameters to CSV rows and write a trace")
    sub.add_argument("--method", choices=["isg", "idg", "fp", "mm"], required=True)
    sub.add_argument("--model", choices=_MODELS, default="mggd")
    sub.add_argument("--scope", choices=_SCOPES, default="sigma")
    sub.add_argument("--input", required=True)
    sub.add_argument("--a", type=float, default=None, help="online gain (default 1, or 100 for the full scope)")
    sub.add_argument("--minibatch", type=int, default=1)
    sub.add_argument("--beta0", type=float, default=5.0, help="initial shape for the heavy-tailed family")
    sub.add_argument("--seed", type=int, default=None, help="shuffle rows before online estimation")
    sub.add_argument("--out", required=True, help="trace CSV path")
    sub.set_defaults(func=_cmd_estimate)

    sub = subs.add_parser("bench-rate", help="online convergence-rate curve")
    _add_plan_flags(sub, trials=100, n=10_000)
    sub.set_defaults(func=_cmd_bench_rate)

    sub = subs.add_parser("bench-chi2", help="limit law of N d^2 against chi-square")
    _add_plan_flags(sub, trials=200, n=100_000)
    sub.set_defaults(func=_cmd_bench_chi2)

    sub = subs.add_parser("bench-eff", help="final accuracy of all methods against dataset size")
    _add_plan_flags(sub, trials=100, n=10_000, init_d2=(1.0, 1.0), with_methods=True)
    sub.set_defaults(func=_cmd_bench_eff)

    sub = subs.add_parser("bench-time", help="wall-clock timing of all methods")
    _add_plan_flags(sub, trials=10, n=100_000, with_methods=True)
    sub.set_defaults(func=_cmd_bench_time)

    sub = subs.add_parser("bench-stat", help="full-scope basin classification")
    _add_plan_flags(sub, trials=50, n=100_000, scope="full", a=100.0, init_d2=(0.1, 0.45))
    sub.set_defaults(func=_cmd_bench_stat)

    sub = subs.add_parser("color-transfer", help="move one image's colors onto another's distribution")
    sub.add_argument("--input", required=True)
    sub.add_argument("--target", required=True)
    sub.add_argument("--mode", choices=list(TRANSFER_MODES), default="3d")
    sub.add_argument("--method", choices=list(TRANSFER_METHODS), default="isg")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--subsample", type=int, default=None, help="batch methods fit on this many random pixels")
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_color_transfer)

    sub = subs.add_parser("texture-features", help="7-number texture descriptors of images")
    sub.add_argument("--input", nargs="+", required=True, help="one or more PPM images")
    sub.add_argument("--method", choices=list(TEXTURE_METHODS), default="fp")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=_cmd_texture_features)

    sub = subs.add_parser("pca", help="project feature rows to the plane")
    sub.add_argument("--input", required=True, help="features CSV")
    sub.add_argument("--out", required=True)
    _add_fig_flag(sub)
    sub.set_defaults(func=_cmd_pca)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
