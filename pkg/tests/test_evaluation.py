from __future__ import annotations

import csv

import numpy as np
import pytest

from fusioncdrf.cv import CVConfig
from fusioncdrf.errors import DataError
from fusioncdrf.evaluation import (
    RESULT_FIELDS,
    TABLE_FIELDS,
    BenchmarkConfig,
    RiskReport,
    build_table,
    curve_rows,
    empirical_risk_vs_truth,
    monte_carlo_benchmark,
    percent_reduction,
    read_results,
)
from fusioncdrf.kernels import LAPLACE, KernelSpec
from fusioncdrf.krr import FittedCDRF
from fusioncdrf.nuisance import NuisanceConfig, OutcomeConfig, RatioConfig
from fusioncdrf.reference import ReferenceMeasure
from fusioncdrf.simulation import true_cdrf

MU = ReferenceMeasure.uniform()


def test_risk_zero_and_offset():
    exact = lambda a: true_cdrf("gaussian", np.asarray(a).reshape(-1))  # noqa: E731
    assert empirical_risk_vs_truth(exact, "gaussian", MU, 500, seed=1) == 0.0
    offset = lambda a: exact(a) + 0.1  # noqa: E731
    for seed in (1, 2):
        assert empirical_risk_vs_truth(offset, "gaussian", MU, 500, seed) == pytest.approx(0.01, rel=1e-12)
    with pytest.raises(ValueError):
        empirical_risk_vs_truth(exact, "gaussian", MU, 0)


def test_risk_order_invariant():
    def model(a):
        a = np.asarray(a).reshape(-1)
        return np.sin(7 * a)

    draws = MU.sample(300, 4).reshape(-1)
    diff = model(draws) - true_cdrf("gaussian", draws)
    shuffled = np.random.default_rng(0).permutation(diff)
    assert np.mean(diff**2) == pytest.approx(np.mean(shuffled**2), rel=1e-14)
    assert empirical_risk_vs_truth(model, "gaussian", MU, 300, 4) == pytest.approx(np.mean(diff**2), rel=1e-14)


@pytest.mark.parametrize(
    "fused, nonfused, expected",
    [(90.2, 145.3, 38), (7.5, 11.6, 35), (1.0, 1.0, 0), (2.0, 1.0, -100), (0.5, 1.0, 50), (0.995, 1.0, 1)],
)
def test_percent_reduction(fused, nonfused, expected):
    assert percent_reduction(fused, nonfused) == expected


def test_percent_reduction_domain():
    with pytest.raises(ValueError):
        percent_reduction(1.0, 0.0)


def test_table_medians():
    rows = [
        RiskReport("gaussian", "uniform", 100, r, m, v)
        for r, (f, u) in enumerate([(1.0, 2.0), (3.0, 4.0), (2.0, 9.0)])
        for m, v in (("fusion", f), ("no_fusion", u))
    ]
    (row,) = build_table(rows)
    assert (row.fusion_median, row.nofusion_median, row.pct_reduction) == (2.0, 4.0, 50)


FAST = BenchmarkConfig(
    ns=(60,),
    runs=3,
    master_seed=5,
    m_eval=200,
    cv=CVConfig(folds=2, lambda_grid=(0.001, 0.01)),
    nuisance=NuisanceConfig(
        ratio=RatioConfig(n_basis=20, bandwidth_multipliers=(1.0,), folds=2),
        outcome=OutcomeConfig(kernels=("varying",), bandwidth_multipliers=(1.0,), folds=2),
    ),
)


def test_runs_one_table_equals_run():
    cfg = BenchmarkConfig(**{**FAST.__dict__, "runs": 1})
    (row,) = monte_carlo_benchmark(cfg, workers=1)
    from fusioncdrf.evaluation import run_single

    fused, nonfused = run_single(cfg, "gaussian", "uniform", 60, 0)
    assert row.fusion_median == fused.risk and row.nofusion_median == nonfused.risk


def test_resume_matches_uninterrupted(tmp_path):
    full = tmp_path / "full"
    part = tmp_path / "part"
    monte_carlo_benchmark(FAST, full, workers=1)
    monte_carlo_benchmark(FAST, part, workers=1, max_new_runs=1)
    assert len(read_results(part / "results.csv", FAST)) == 2
    monte_carlo_benchmark(FAST, part, workers=1)
    for name in ("results.csv", "table.csv"):
        assert (full / name).read_bytes() == (part / name).read_bytes()
    with (full / "results.csv").open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    assert next(csv.reader(lines)) == RESULT_FIELDS
    with (full / "table.csv").open() as fh:
        header = next(csv.reader(ln for ln in fh if not ln.startswith("#")))
    assert header == TABLE_FIELDS


def test_results_from_other_config_rejected(tmp_path):
    monte_carlo_benchmark(FAST, tmp_path, workers=1, max_new_runs=1)
    other = BenchmarkConfig(**{**FAST.__dict__, "master_seed": 6})
    with pytest.raises(DataError):
        read_results(tmp_path / "results.csv", other)


def test_benchmark_config_validation():
    with pytest.raises(DataError):
        BenchmarkConfig(runs=0)


def test_curve_rows():
    model = FittedCDRF([0.0], [0.0], [0.2], [0.6], KernelSpec(LAPLACE, 0.4), 0.1)
    rows = curve_rows(model, "gaussian")
    assert len(rows) == 201 and rows[0][0] == 0.0 and rows[-1][0] == 1.0
    assert rows[100][1] == pytest.approx(0.5957691, abs=1e-7) and rows[100][2] == 0.0
    assert curve_rows(model)[5][1] is None


@pytest.mark.parametrize(
    "cell, fused, nonfused, reported",
    [(("gaussian", "uniform", 100), 90.2e-3, 145.3e-3, 38), (("trigonometric", "beta(0.5,0.5)", 3200), 7.5e-2, 11.6e-2, 35)],
)
def test_reference_reductions_consistent(cell, fused, nonfused, reported):
    assert percent_reduction(fused, nonfused) == reported


def _flaky(failing_runs):
    from fusioncdrf import evaluation
    from fusioncdrf.errors import NumericError

    original = evaluation.run_single

    def run(cfg, family, measure, n, run):
        if run in failing_runs:
            raise NumericError("synthetic failure")
        return original(cfg, family, measure, n, run)

    return run


def test_failures_below_threshold_are_skipped(monkeypatch, caplog, tmp_path):
    from fusioncdrf import evaluation

    cfg = BenchmarkConfig(**{**FAST.__dict__, "runs": 21})
    monkeypatch.setattr(evaluation, "run_single", _flaky({4}))
    monte_carlo_benchmark(cfg, tmp_path, workers=1)
    assert "synthetic failure" in caplog.text
    runs = {r.run for r in read_results(tmp_path / "results.csv", cfg)}
    assert runs == set(range(21)) - {4}


def test_failures_at_threshold_abort(monkeypatch):
    from fusioncdrf import evaluation
    from fusioncdrf.errors import FusionError

    cfg = BenchmarkConfig(**{**FAST.__dict__, "runs": 20})
    monkeypatch.setattr(evaluation, "run_single", _flaky({0}))
    with pytest.raises(FusionError, match="5%"):
        monte_carlo_benchmark(cfg, workers=1)
