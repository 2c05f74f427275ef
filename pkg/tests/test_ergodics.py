import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pairdrift.model import ModelParams
from pairdrift.ergodics import (EnsembleHistory, RunningStats, batched_means,
                                empirical_moment, empirical_z_inverse_moment,
                                equilibrium_history, estimate_mu_U,
                                estimate_tail_exponent, geometric_drift_probe,
                                hill_estimator, laplace_crosscheck,
                                rank_regression)
from pairdrift.integrate import aux_time_average


@given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=200))
@settings(max_examples=100, deadline=None)
def test_running_stats_matches_two_pass(xs):
    rs = RunningStats().push(xs)
    arr = np.asarray(xs)
    assert rs.n == arr.size
    assert rs.mean == pytest.approx(arr.mean(), rel=1e-9, abs=1e-9)
    assert rs.variance == pytest.approx(arr.var(ddof=1), rel=1e-7, abs=1e-7)
    assert rs.min == arr.min() and rs.max == arr.max()


def test_running_stats_merge_associative():
    rng = np.random.default_rng(0)
    a, b, c = rng.normal(3, 2, (3, 1000))
    left = RunningStats().push(a).merge(RunningStats().push(b).merge(
        RunningStats().push(c)))
    flat = RunningStats().push(np.concatenate([a, b, c]))
    assert left.mean == pytest.approx(flat.mean, rel=1e-12)
    assert left.variance == pytest.approx(flat.variance, rel=1e-10)


def test_batched_means_iid_coverage():
    rng = np.random.default_rng(1)
    hits = 0
    for trial in range(50):
        x = rng.normal(0.7, 1.0, 4000)
        mean, half, _ = batched_means(x, 40)
        hits += abs(mean - 0.7) <= half
    assert hits >= 42  # ~95% coverage


def test_mu_U_positive_short_run():
    p = ModelParams.physical(h=0.5)
    est = estimate_mu_U(p, T=4000.0, dt=1e-3, seed=8, n_blocks=400)
    assert est.positive
    assert abs(est.v_mean) <= 4.0 * est.v_half_width + 1e-3


def test_mu_U_antithetic_v_flip():
    """Flipping the V-channel noise negates V and leaves U untouched."""
    p = ModelParams.physical(h=0.3)
    u1, v1, _ = aux_time_average(p, T=50.0, dt=1e-3, seed=3, n_blocks=10)
    u2, v2, _ = aux_time_average(p, T=50.0, dt=1e-3, seed=3, n_blocks=10,
                                 flip_v_noise=True)
    np.testing.assert_array_equal(u1, u2)
    np.testing.assert_allclose(v1, -v2, rtol=1e-12, atol=1e-15)


def test_hill_on_synthetic_pareto():
    rng = np.random.default_rng(5)
    for alpha in (2.0, 4.0):
        x = rng.pareto(alpha, 300000) + 1.0
        est = estimate_tail_exponent(x)
        assert est.stable
        assert est.exponent == pytest.approx(alpha, rel=0.08)
        assert est.k_used >= 50


def test_hill_flags_exponential():
    rng = np.random.default_rng(6)
    x = rng.exponential(1.0, 300000)
    est = estimate_tail_exponent(x)
    assert not est.stable


def test_rank_regression_close_to_hill():
    rng = np.random.default_rng(7)
    x = rng.pareto(3.0, 200000) + 1.0
    hill = estimate_tail_exponent(x, method="hill")
    rank = estimate_tail_exponent(x, method="rank")
    assert rank.exponent == pytest.approx(hill.exponent, rel=0.15)
    assert hill_estimator(x, 1000) == pytest.approx(3.0, rel=0.15)
    assert rank_regression(x, 1000) == pytest.approx(3.0, rel=0.2)


def test_tail_estimate_validation():
    from pairdrift.ergodics import TailEstimate
    with pytest.raises(ValueError):
        TailEstimate(exponent=2.0, stderr=0.1, k_used=10, method="hill",
                     stable=True)
    with pytest.raises(ValueError):
        estimate_tail_exponent(np.ones(100))


def test_moment_lambda_zero_exact():
    hist = equilibrium_history(ModelParams(h=0.5), n_paths=16, T=10.0,
                               dt=1e-3, seed=2, stride_steps=100)
    est = empirical_moment(hist, 0.0)
    assert est.mean == pytest.approx(1.0, abs=1e-12)
    assert est.half_width == pytest.approx(0.0, abs=1e-12)


def test_moment_estimates_stabilize():
    p = ModelParams(h=0.5)
    hist = equilibrium_history(p, n_paths=64, T=120.0, dt=1e-3, seed=4,
                               stride_steps=50)
    est = empirical_moment(hist, 1.0)
    assert est.stable
    zm = empirical_z_inverse_moment(hist)
    assert zm.stable
    assert zm.mean >= 1.0  # z <= 1 pointwise
    assert zm.stats.min >= 1.0


def test_moment_two_seeds_agree():
    p = ModelParams(h=0.5)
    ests = []
    for seed in (11, 12):
        hist = equilibrium_history(p, n_paths=64, T=240.0, dt=1e-3,
                                   seed=seed, stride_steps=50)
        ests.append(empirical_z_inverse_moment(hist, burn_frac=0.25))
    gap = abs(ests[0].mean - ests[1].mean)
    joint = math.hypot(ests[0].half_width, ests[1].half_width)
    assert gap <= joint


def test_moment_accepts_recorded_paths():
    from pairdrift.integrate import simulate, StepConfig, SystemKind
    from pairdrift.model import State, Chart
    p = ModelParams(h=0.5)
    paths = [simulate(SystemKind.XYZ, State(Chart.XYZ, 0.0, 0.0, 0.5), p,
                      StepConfig(dt_base=1e-3, seed=s, record_stride=20), 5.0)
             for s in range(3)]
    est = empirical_moment(paths, 1.0)
    assert est.stats.n > 0


def test_laplace_crosscheck_rows(lp05, p05):
    rows = laplace_crosscheck([0.0, lp05.eta_star, -lp05.eta_star], [0.4],
                              p05, lp05, n_paths=4000, dt=1e-3, seed=5)
    by_eta = {r["eta0"]: r for r in rows}
    assert by_eta[lp05.eta_star]["mc"] == 1.0
    assert by_eta[lp05.eta_star]["quad"] == pytest.approx(1.0, rel=1e-12)
    assert by_eta[-lp05.eta_star]["z_score"] == 0.0
    assert abs(by_eta[0.0]["z_score"]) < 4.0


def test_laplace_small_s_tends_to_one(lp05, p05):
    rows = laplace_crosscheck([0.0], [1e-4], p05, lp05, n_paths=2000,
                              dt=1e-3, seed=6)
    assert rows[0]["quad"] == pytest.approx(1.0, abs=5e-3)
    assert rows[0]["mc"] == pytest.approx(1.0, abs=5e-3)


def test_drift_probe_basics(lp05_full, p05):
    from pairdrift.cli import probe_starts
    starts = probe_starts(lp05_full, p05, 3)
    res = geometric_drift_probe(starts, [0.0, 0.5, 1.0, 2.0], p05, lp05_full,
                                n_paths=300, dt=1e-3, seed=9)
    assert res.initial_exact
    assert res.eps_hat < 1.0
    assert res.bound_holds
    # means decrease from far-out starts
    for s in {tuple(r["s0"]) for r in res.table}:
        seq = [r["mean"] for r in res.table if tuple(r["s0"]) == s]
        assert seq[0] > seq[-1]


def test_mu_U_two_seeds_agree():
    p = ModelParams.physical(h=0.2)
    a = estimate_mu_U(p, T=4000.0, dt=1e-3, seed=21, n_blocks=400)
    b = estimate_mu_U(p, T=4000.0, dt=1e-3, seed=22, n_blocks=400)
    assert abs(a.mean - b.mean) <= math.hypot(a.half_width, b.half_width)


def test_mu_U_multiple_paths_pooled():
    p = ModelParams.physical(h=0.3)
    est = estimate_mu_U(p, T=1500.0, dt=1e-3, seed=5, n_paths=3,
                        n_blocks=150)
    assert est.positive
