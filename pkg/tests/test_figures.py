"""Figure rendering: files appear, valid PNG, no display needed."""

import numpy as np
import pytest

from elligrad.bench import TrialPlan, bench_chi2, bench_efficiency, bench_rate, bench_stationarity, bench_time
from elligrad.figures import (
    fig_chi2,
    fig_efficiency,
    fig_projection,
    fig_rate,
    fig_stationarity,
    fig_time,
)
from elligrad.models import EstimationScope

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@pytest.fixture(scope="module")
def tiny_results():
    plan = TrialPlan(trials=2, m=3, n_samples=600, methods=("mm", "isg"), base_seed=5)
    full = TrialPlan(
        trials=2,
        m=3,
        n_samples=600,
        scope=EstimationScope.MU_SIGMA_BETA,
        methods=("isg",),
        base_seed=5,
        a_coeff=100.0,
        init_d2=(0.1, 0.45),
    )
    return {
        "rate": bench_rate(TrialPlan(trials=2, m=3, n_samples=600, base_seed=5)),
        "chi2": bench_chi2(TrialPlan(trials=2, m=3, n_samples=600, base_seed=5)),
        "eff": bench_efficiency(plan),
        "time": bench_time(plan),
        "stat": bench_stationarity(full),
    }


def assert_png(path):
    assert path.exists()
    assert path.read_bytes()[:8] == PNG_MAGIC
    assert path.stat().st_size > 1000


def test_each_renderer_writes_png(tiny_results, tmp_path):
    jobs = [
        (fig_rate, "rate"),
        (fig_chi2, "chi2"),
        (fig_efficiency, "eff"),
        (fig_time, "time"),
        (fig_stationarity, "stat"),
    ]
    for render, key in jobs:
        out = tmp_path / f"{key}.png"
        returned = render(tiny_results[key], out)
        assert returned == str(out)
        assert_png(out)


def test_projection_figure(tmp_path):
    pts = np.array([[0.0, 1.0], [1.0, -1.0], [2.0, 0.5]])
    out = tmp_path / "proj.png"
    fig_projection(pts, out, labels=["a", "b", "c"])
    assert_png(out)


def test_projection_rejects_wrong_shape(tmp_path):
    with pytest.raises(ValueError, match="K x 2"):
        fig_projection(np.zeros((3, 3)), tmp_path / "bad.png")
