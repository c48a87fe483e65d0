"""Color transfer between images and compact texture description.

Both applications treat per-pixel features as draws from an
elliptically contoured population.  Color transfer estimates a
location-scatter pair on the input and target feature clouds and pushes
every input pixel through the affine map

    x' = mu_tgt + T (x - mu_in),
    T  = Sigma_in^(-1/2) (Sigma_in^(1/2) Sigma_tgt Sigma_in^(1/2))^(1/2)
         Sigma_in^(-1/2),

the symmetric positive map carrying one scatter onto the other with
least mean-square displacement.  In ``3d`` mode the population is raw
RGB and the shape parameter is estimated alongside (both estimates are
reported, only location and scatter enter the map); in ``5d`` mode the
population is CIELAB color plus the lightness gradient, the shape is
held at 1, and only the three color coordinates are written back.

Texture description fits the full parameter set on RGB rows and returns
the eigenvalues of the trace-normalized scatter together with the
location and shape; a z-scored principal-component projection maps
collections of such vectors to the plane.

Both fitting stages of a transfer draw from identically seeded
generators, so equal inputs produce equal estimates and the map reduces
to the identity exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .estimators import IdgConfig, IsgConfig, fp_fit, idg_fit, isg_fit, mm_fit
from .images import Image, extract_features, lab_to_srgb
from .models import EstimationScope, ModelKind, ThetaParams
from .sampling import _sqrt_spd

__all__ = [
    "TransferInfo",
    "color_transfer",
    "mk_map",
    "texture_features",
    "pca_project",
    "TRANSFER_MODES",
    "TRANSFER_METHODS",
    "TEXTURE_METHODS",
    "ISG_MIN_UPDATES",
]

TRANSFER_MODES = ("3d", "5d")
TRANSFER_METHODS = ("mm", "fp", "idg", "isg")
TEXTURE_METHODS = ("fp", "isg")

#: Online fits replay the pixel cloud in shuffled epochs until at least
#: this many updates have been consumed; beyond it a single pass is used.
ISG_MIN_UPDATES = 100_000

# step-size gains of the online method per scope (the full scope needs a
# large gain to track the shape parameter at a useful rate)
_GAIN_PARTIAL = 1.0
_GAIN_FULL = 100.0


@dataclass(frozen=True)
class TransferInfo:
    """Estimates behind a transfer; both shape values are reported even
    though the map uses only locations and scatters."""

    mode: str
    method: str
    theta_input: ThetaParams
    theta_target: ThetaParams


def mk_map(sigma_in: np.ndarray, sigma_tgt: np.ndarray) -> np.ndarray:
    """Symmetric positive ``T`` with ``T sigma_in T = sigma_tgt``."""
    root = _sqrt_spd(np.asarray(sigma_in, dtype=np.float64))
    root_inv = np.linalg.inv(root)
    mid = _sqrt_spd(root @ np.asarray(sigma_tgt, dtype=np.float64) @ root)
    t_map = root_inv @ mid @ root_inv
    return 0.5 * (t_map + t_map.T)


def _moment_theta(feats: np.ndarray, beta: float) -> ThetaParams:
    """Moment estimate of location and scatter with the shape known:
    the sample covariance times the population covariance-to-scatter
    ratio of a generalized Gaussian with that shape (one at shape 1)."""
    n, m = feats.shape
    if n <= m:
        raise ValueError("need more samples than dimensions")
    mu = feats.mean(axis=0)
    diffs = feats - mu
    cov = diffs.T @ diffs / n
    k = m / 2.0 ** (1.0 / beta) * np.exp(gammaln(m / (2.0 * beta)) - gammaln((m + 2.0) / (2.0 * beta)))
    sigma = 0.5 * (cov + cov.T) * k
    return ThetaParams(mu, sigma, beta)


def _replayed(feats: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """The cloud itself when large, otherwise whole shuffled epochs
    concatenated and cut to :data:`ISG_MIN_UPDATES` rows."""
    n = feats.shape[0]
    if n >= ISG_MIN_UPDATES:
        return feats
    parts = []
    total = 0
    while total < ISG_MIN_UPDATES:
        parts.append(feats[rng.permutation(n)])
        total += n
    return np.concatenate(parts)[:ISG_MIN_UPDATES]


def _fit_cloud(
    feats: np.ndarray,
    method: str,
    scope: EstimationScope,
    beta0: float,
    seed: int,
    subsample: int | None,
    stage: str,
) -> ThetaParams:
    """Estimate the in-scope parameters of one feature cloud.

    The batch methods (mm, fp, idg) optionally run on ``subsample``
    uniformly chosen rows; the online method always streams.  Gradient
    and fixed-point fits start from the moment estimate on the first
    10% of the rows they consume.
    """
    if method not in TRANSFER_METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {TRANSFER_METHODS}")
    rng = np.random.default_rng(seed)
    full = scope is EstimationScope.MU_SIGMA_BETA
    try:
        if method in ("mm", "fp", "idg") and subsample is not None and subsample < feats.shape[0]:
            feats = feats[rng.choice(feats.shape[0], size=subsample, replace=False)]
        if method == "mm":
            return mm_fit(feats) if full else _moment_theta(feats, beta0)
        head = feats[: max(feats.shape[1] + 2, feats.shape[0] // 10)]
        theta0 = mm_fit(head) if full else _moment_theta(head, beta0)
        if method == "fp":
            # the joint shape-scatter iteration converges linearly along
            # a nearly flat ridge on pixel data (hundreds of sweeps) and
            # the scalar shape solve feeds ~1e-11 jitter back into the
            # scatter, so the full scope gets a parameter-scale tolerance
            # and a matching sweep budget
            tol, iters = (1e-10, 2000) if full else (1e-12, 200)
            return fp_fit(feats, theta0, scope, ModelKind.MGGD, tol=tol, max_iters=iters).theta_hat
        if method == "idg":
            # pixel populations sit on a nearly flat shape-scatter ridge
            # in the full scope; a parameter-scale gradient tolerance is
            # what the transfer map actually needs
            cfg = IdgConfig(
                theta0=theta0,
                scope=scope,
                grad_tol=1e-4 if full else 1e-8,
                max_iters=300,
            )
            return idg_fit(feats, cfg, ModelKind.MGGD).theta_hat
        stream = _replayed(feats, rng)
        cfg = IsgConfig(
            theta0=theta0,
            scope=scope,
            a_coeff=_GAIN_FULL if full else _GAIN_PARTIAL,
            checkpoints=[stream.shape[0]],
        )
        with np.errstate(all="ignore"):
            return isg_fit(stream, cfg, ModelKind.MGGD).theta_hat
    except Exception as exc:
        raise RuntimeError(f"{stage} estimation failed (method {method}): {exc}") from exc


def color_transfer(
    input_img: Image,
    target_img: Image,
    mode: str,
    method: str,
    *,
    seed: int = 0,
    subsample: int | None = None,
) -> tuple[Image, TransferInfo]:
    """Replace the color distribution of ``input_img`` by that of
    ``target_img``; returns the new image and the estimates used."""
    if mode not in TRANSFER_MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {TRANSFER_MODES}")
    if method not in TRANSFER_METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {TRANSFER_METHODS}")
    if mode == "3d":
        feat_mode, scope, beta0 = "rgb3d", EstimationScope.MU_SIGMA_BETA, 1.0
    else:
        feat_mode, scope, beta0 = "lab_grad5d", EstimationScope.MU_SIGMA, 1.0
    f_in = extract_features(input_img, feat_mode)
    f_tgt = extract_features(target_img, feat_mode)
    theta_in = _fit_cloud(f_in, method, scope, beta0, seed, subsample, "input")
    theta_tgt = _fit_cloud(f_tgt, method, scope, beta0, seed, subsample, "target")
    t_map = mk_map(theta_in.sigma, theta_tgt.sigma)
    moved = (f_in - theta_in.mu) @ t_map + theta_tgt.mu
    shape = input_img.pixels.shape
    if mode == "3d":
        out = np.clip(moved, 0.0, 1.0).reshape(shape)
    else:
        # only the color coordinates are written back; the gradient
        # channels served the fit
        out = np.clip(lab_to_srgb(moved[:, :3].reshape(shape)), 0.0, 1.0)
    return Image(out), TransferInfo(mode, method, theta_in, theta_tgt)


def texture_features(
    img: Image,
    method: str = "fp",
    *,
    seed: int = 0,
    subsample: int | None = None,
) -> np.ndarray:
    """Seven numbers describing one texture image: the descending
    eigenvalues of the trace-normalized scatter (they sum to the channel
    count), the location, and the shape, fitted on RGB rows."""
    if method not in TEXTURE_METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {TEXTURE_METHODS}")
    feats = extract_features(img, "rgb3d")
    theta = _fit_cloud(
        feats, method, EstimationScope.MU_SIGMA_BETA, 1.0, seed, subsample, "texture"
    )
    m = feats.shape[1]
    normalized = (m / np.trace(theta.sigma)) * theta.sigma
    evals = np.sort(np.linalg.eigvalsh(normalized))[::-1]
    return np.concatenate([evals, theta.mu, [theta.beta]])


def pca_project(features: np.ndarray) -> np.ndarray:
    """Project feature rows onto their top two principal components.

    Columns are z-scored first (constant columns pass through centered);
    each component's largest-magnitude loading is made positive, fixing
    the sign. Needs at least two rows and two columns.
    """
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if feats.shape[0] < 2:
        raise ValueError("need at least two feature rows to project")
    if feats.shape[1] < 2:
        raise ValueError("need at least two feature columns to project")
    std = feats.std(axis=0)
    z = (feats - feats.mean(axis=0)) / np.where(std > 0, std, 1.0)
    _, _, vt = np.linalg.svd(z, full_matrices=False)
    comps = vt[:2]
    for i in range(2):
        peak = np.argmax(np.abs(comps[i]))
        if comps[i, peak] < 0:
            comps[i] = -comps[i]
    return z @ comps.T
