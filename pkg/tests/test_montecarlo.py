"""Tests for the simulation harness: DGP determinism and coverage plumbing."""

import json
import math

import numpy as np
import pytest

from simplexci.estimators import quadratic_components
from simplexci.montecarlo import CoverageReport, McSpec, coverage_experiment, generate_panel


def reconstruct_means(spec, eta_seed):
    """Population group-mean paths rebuilt from the documented recipe."""
    K, T = spec.K, spec.t0
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(eta_seed)))
    eta = gen.standard_normal((K, T))
    trend = np.arange(1, T + 1) / T
    signs = (-1.0) ** np.arange(K)
    untreated = 0.5 + 0.5 * signs[:, None] * trend[None, :] + eta
    treated = spec.w0 @ untreated
    return np.vstack([treated, untreated])


def test_generate_panel_is_bit_deterministic():
    spec = McSpec(K=3, n_j=5, t0=6, reps=1, seed=0)
    a = generate_panel(spec, eta_seed=7, rep_seed=40)
    b = generate_panel(spec, eta_seed=7, rep_seed=40)
    assert np.array_equal(a.outcome, b.outcome)
    assert np.array_equal(a.unit, b.unit)
    assert np.array_equal(a.group, b.group)
    assert np.array_equal(a.time, b.time)
    c = generate_panel(spec, eta_seed=7, rep_seed=41)
    assert not np.array_equal(a.outcome, c.outcome)


def test_generate_panel_matches_documented_recipe_exactly():
    spec = McSpec(K=4, n_j=3, t0=5, reps=1, seed=0)
    panel = generate_panel(spec, eta_seed=11, rep_seed=12)
    means = reconstruct_means(spec, eta_seed=11)
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(12)))
    noise = gen.standard_normal((spec.K + 1, spec.n_j, spec.t0))
    expected = (means[:, None, :] + noise).reshape(-1)
    assert np.array_equal(panel.outcome, expected)


def test_vertex_override_ties_treated_path_to_one_donor():
    spec = McSpec(K=3, n_j=4, t0=6, reps=1, seed=0, w0_override=(0.0, 1.0, 0.0))
    means = reconstruct_means(spec, eta_seed=3)
    assert np.array_equal(means[0], means[2])


def test_sample_means_track_population_paths():
    spec = McSpec(K=3, n_j=400, t0=8, reps=1, seed=0)
    panel = generate_panel(spec, eta_seed=21, rep_seed=22)
    sample = quadratic_components(panel).group_means
    population = reconstruct_means(spec, eta_seed=21)
    # unit noise has variance 1, so each cell mean has sd 1/sqrt(n_j)
    gap = np.abs(sample - population)
    assert np.max(gap) <= 4.5 / math.sqrt(spec.n_j), np.max(gap)


def test_coverage_experiment_is_deterministic():
    spec = McSpec(K=3, n_j=20, t0=6, reps=8, seed=11, grid_n=10)
    first = coverage_experiment(spec, projection=True)
    second = coverage_experiment(spec, projection=True)
    assert first.to_dict() == second.to_dict()
    assert first.to_json() == second.to_json()
    # timing is wall clock and must stay out of the serialized form
    assert "timing_seconds" not in first.to_dict()
    assert "timing_seconds" in first.to_dict(include_timing=True)


def test_projection_coverage_dominates_point_coverage_on_grid():
    # the interior truth (0.2, 0.4, 0.4) sits on the 1/10 lattice, so whenever
    # the point test accepts, the swept set is non-empty and every projection
    # interval contains the true coordinate
    spec = McSpec(K=3, n_j=30, t0=6, reps=12, seed=5, grid_n=10)
    report = coverage_experiment(spec, projection=True)
    assert report.failures == 0
    assert report.resolution == 10
    for j in range(spec.K):
        assert report.projection_coverage[j] >= report.coverage - 1e-12
    assert 0.0 <= report.empty_rate <= 1.0 - report.coverage + 1e-12


def test_small_run_coverage_is_sane():
    spec = McSpec(K=3, n_j=50, t0=10, reps=60, seed=2)
    report = coverage_experiment(spec)
    assert report.failures == 0
    se = math.sqrt(0.05 * 0.95 / spec.reps)
    assert report.coverage >= 0.95 - 4.0 * se
    assert report.coverage <= 1.0


def test_mcspec_validation_and_true_weights():
    with pytest.raises(ValueError):
        McSpec(K=1)
    with pytest.raises(ValueError):
        McSpec(n_j=1)
    with pytest.raises(ValueError):
        McSpec(t0=0)
    with pytest.raises(ValueError):
        McSpec(design="edge")
    with pytest.raises(ValueError):
        McSpec(reps=0)
    with pytest.raises(ValueError):
        McSpec(alpha=1.0)
    assert np.allclose(McSpec(K=5).w0, [0.2, 0.2, 0.2, 0.2, 0.2])
    assert np.allclose(McSpec(K=5, design="boundary").w0, [0.5, 0.5, 0.0, 0.0, 0.0])
    assert np.allclose(McSpec(K=3).w0, [0.2, 0.4, 0.4])
    with pytest.raises(ValueError):
        McSpec(K=3, w0_override=(0.5, 0.5)).w0


def test_report_serialization_roundtrip():
    spec = McSpec(K=3, n_j=20, t0=6, reps=4, seed=1, grid_n=10)
    report = coverage_experiment(spec, projection=True)
    doc = json.loads(report.to_json())
    assert doc == report.to_dict()
    text = report.to_text()
    assert "coverage of the weight vector" in text
    assert "empty-set rate" in text
