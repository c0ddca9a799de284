import numpy as np
import pytest

from m6arena.errors import EstimationError, ParameterError
from m6arena.market import ReturnPanel, sample_returns
from m6arena.msm import (MomentTarget, candidate_set, estimate_theta, moment_function,
                         moment_stats, msm_objective, objective_from_tables,
                         simulate_moment_dist, simulate_moment_table)
from m6arena.portfolio import BaselineTheta


def _naive_moments(x):
    n = len(x)
    mean = 0.0
    for v in x:
        mean += v
    mean /= n
    m2 = sum((v - mean) ** 2 for v in x) / n
    m4 = sum((v - mean) ** 4 for v in x) / n
    return mean, m4 / m2 ** 2


def test_moment_stats_two_point():
    assert moment_stats([1, 1, -1, -1]) == (0.0, 1.0)


def test_moment_stats_gaussian():
    x = np.random.default_rng(0).standard_normal(1_000_000)
    assert moment_stats(x)[1] == pytest.approx(3.0, abs=0.05)


def test_moment_stats_naive_oracle(rng):
    x = rng.standard_t(5, size=163)
    mean, kurt = moment_stats(x)
    m, k = _naive_moments(list(x))
    assert abs(mean - m) < 1e-12 and abs(kurt - k) < 1e-12


def test_moment_stats_invariance(rng):
    x = rng.normal(size=50)
    assert moment_stats(3 * x + 7)[1] == pytest.approx(moment_stats(x)[1], rel=1e-10)
    with pytest.raises(EstimationError):
        moment_stats([2.0, 2.0, 2.0])


def test_target_validation():
    with pytest.raises(ParameterError):
        MomentTarget(np.zeros(2), np.array([3.0, 0.5]), 163)
    t = MomentTarget.from_leaderboard(np.array([[1.0, np.nan], [-1.0, 2.0], [1.0, 0.0], [-1.0, 1.0]]))
    assert t.g1[0] == 0.0 and t.g2[0] == 1.0
    assert t.g1[1] == pytest.approx(1.0)


def test_candidate_set_sizes():
    cand = candidate_set(2)
    assert sorted(map(tuple, cand)) == sorted([(2, 0, 0), (1, 0, 1), (0, 0, 2), (1, 1, 0), (0, 1, 1)])
    full = candidate_set(100)
    assert len(full) == 5150
    assert np.all(full.sum(axis=1) == 100)
    assert not np.any(full[:, 1] == 100)
    assert [tuple(r) for r in full] == sorted(tuple(r) for r in full)


@pytest.fixture(scope="module")
def interval_panel(model):
    return sample_returns(model, 60, 77)


def test_all_long_has_no_dispersion_in_mean(interval_panel):
    mu1, var1, _, _ = simulate_moment_dist(BaselineTheta(100, 0, 0), interval_panel, 0, 20, 1,
                                           n_teams=30, pool_size=None)
    # every team holds all assets; only summation order differs across teams
    assert var1 < 1e-28


def test_operating_point_is_finite(interval_panel):
    vals = simulate_moment_dist(BaselineTheta(38, 29, 33), interval_panel, 1, 200, 1)
    assert np.all(np.isfinite(vals)) and vals[1] > 0 and vals[3] > 0


def test_more_simulations_consistent(interval_panel):
    th = BaselineTheta(38, 29, 33)
    a = simulate_moment_dist(th, interval_panel, 2, 500, 4)
    b = simulate_moment_dist(th, interval_panel, 2, 1000, 4)
    assert b[1] / a[1] == pytest.approx(1.0, abs=0.25)
    assert b[3] / a[3] == pytest.approx(1.0, abs=0.35)


def test_common_random_numbers(interval_panel):
    cand = candidate_set(100)[::500]
    full = simulate_moment_table(cand, interval_panel, 0, 50, 40, 9)
    one = simulate_moment_table(cand[3:4], interval_panel, 0, 50, 40, 9)
    assert np.array_equal(full[3], one[0])


def test_objective_homogeneity(rng):
    target = MomentTarget(np.array([0.1, 0.2]), np.array([3.0, 4.0]), 163)
    table = np.abs(rng.normal(1.0, 0.2, size=(2, 3, 4)))
    g = moment_function(target, table)
    manual = np.sum(g.mean(axis=0) ** 2, axis=-1)
    assert np.allclose(objective_from_tables(target, table), manual)
    c = 2.5
    assert np.allclose(np.sum((c * g).mean(axis=0) ** 2, axis=-1), c ** 2 * manual)


def test_zero_variance_is_an_error():
    target = MomentTarget(np.array([0.0]), np.array([3.0]), 10)
    with pytest.raises(EstimationError):
        moment_function(target, np.array([[[0.0, 0.0, 3.0, 1.0]]]))


def _simulated_target(panel, theta, n_teams, seed):
    rng = np.random.default_rng(seed)
    w = np.stack([np.stack([_ternary(theta, panel.n_assets, rng) for _ in range(panel.n_intervals)])
                  for _ in range(n_teams)])
    cols = []
    for m in range(panel.n_intervals):
        x = np.log1p(w[:, m] @ panel.interval_returns(m))
        cols.append(x.sum(axis=1) / x.std(axis=1, ddof=1))
    return MomentTarget.from_leaderboard(np.array(cols).T)


def _ternary(theta, n, rng):
    perm = rng.permutation(n)
    w = np.zeros(n)
    mag = 1.0 / (theta.n_plus + theta.n_minus)
    w[perm[:theta.n_plus]] = mag
    w[perm[n - theta.n_minus:]] = -mag
    return w


def test_swapped_theta_fits_worse(model):
    panel = sample_returns(model, 240, 3)
    truth = BaselineTheta(50, 20, 30)
    swapped = BaselineTheta(30, 20, 50)
    worse = 0
    for seed in range(5):
        target = _simulated_target(panel, truth, 163, seed)
        worse += msm_objective(target, swapped, panel, 300, seed) > \
            msm_objective(target, truth, panel, 300, seed)
    assert worse >= 4


def test_exhaustive_search_toy_universe(rng):
    r = rng.normal(0.0005, 0.01, size=(2, 40))
    panel = ReturnPanel(r, 20)
    target = MomentTarget(np.array([0.3, -0.2]), np.array([2.5, 2.8]), 12)
    res = estimate_theta(target, panel, n_sim=40, rng_seed=5, pool_size=60)
    assert len(res.candidates) == 5
    by_hand = {}
    for c in candidate_set(2):
        try:
            by_hand[tuple(c)] = msm_objective(target, BaselineTheta(*c), panel, 40, 5, 60)
        except EstimationError:
            continue
    assert res.theta.as_tuple() == min(by_hand, key=by_hand.get)
    assert res.objective == pytest.approx(min(by_hand.values()))


def test_search_is_global_min_and_deterministic(model):
    panel = sample_returns(model, 60, 8)
    target = _simulated_target(panel, BaselineTheta(38, 29, 33), 50, 1)
    cand = candidate_set(100)[::37]
    a = estimate_theta(target, panel, 50, 3, candidates=cand)
    b = estimate_theta(target, panel, 50, 3, candidates=cand)
    assert a.theta == b.theta and np.array_equal(a.surface, b.surface, equal_nan=True)
    assert not np.any(a.surface < a.objective)


def test_panel_interval_mismatch(model):
    panel = sample_returns(model, 40, 1)
    target = MomentTarget(np.zeros(3), np.full(3, 3.0), 10)
    with pytest.raises(ParameterError):
        msm_objective(target, BaselineTheta(38, 29, 33), panel, 10)
