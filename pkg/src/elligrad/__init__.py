"""Estimation of elliptically contoured distributions by Riemannian
information gradients, online and batch, with moment and fixed-point
baselines, Monte Carlo benchmarks, and color image applications."""

from .models import (
    EstimationScope,
    HDerivs,
    ModelKind,
    ThetaParams,
    h_derivs,
    log_density,
    log_normalizer,
    mahalanobis_delta,
    mean_nll,
)
from .manifold import (
    MetricWeights,
    TangentVector,
    metric_inner,
    metric_norm_sq,
    product_distance_sq,
    product_retract,
    spd_distance_sq,
    spd_exp,
    split_parallel_perp,
    tangent_distance_form,
)
from .fisher import (
    InfoConstants,
    batch_nat_grad,
    info_constants,
    radial_expectation,
    stochastic_nat_grad,
)
from .sampling import SamplerConfig, make_true_params, perturb_params, sample, sample_stream
from .estimators import (
    ConvergenceError,
    EstimateTrace,
    IdgConfig,
    IsgConfig,
    LineSearchError,
    fp_fit,
    idg_fit,
    isg_fit,
    mm_fit,
)
from .bench import (
    Chi2Result,
    EfficiencyResult,
    RateResult,
    StationarityResult,
    TimeResult,
    TrialPlan,
    bench_chi2,
    bench_efficiency,
    bench_rate,
    bench_stationarity,
    bench_time,
)

__version__ = "0.1.0"
