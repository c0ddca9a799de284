"""Tournament Monte Carlo: one focal team against K - 1 non-strategic opponents.

Two environments:

* stylized - returns from the market model, opponents redraw baseline
  ternary portfolios every interval;
* bootstrap - the M observed intervals are resampled with replacement and
  each opponent copies a randomly drawn real submission for that interval.

Several focal strategies can be evaluated against the same simulated field
(common random numbers); the opponents never react to the focal team, so
this is equivalent to running each strategy separately with the same seed.

Ranks can use either the exact window IR or the additive score (sum of
interval IRs), the objective the rank-optimization policy is solved for.
The two differ markedly for a focal team whose risk changes between
intervals: the exact IR weights each interval by its share of the pooled
variance. ``mean_ir`` is always the exact IR over all intervals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dp_policy import RankPolicy, act, qth_largest
from .errors import ConfigurationError, IngestionError, ParameterError
from .market import MarketModel, ReturnPanel, conditional_predictable_sum, draw_returns
from .portfolio import BaselineTheta, SubmissionPanel, kernel_seed, long_count
from .scoring import ir_from_stats, log_returns

Q_REPORT = (1, 5, 10, 20)


@dataclass(frozen=True)
class FocalStrategy:
    kind: str  # baseline | tangency | rank_opt | bootstrapped
    lam: float = 0.0
    policy: RankPolicy | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("baseline", "tangency", "rank_opt", "bootstrapped"):
            raise ParameterError(f"unknown focal strategy {self.kind!r}")
        if self.kind == "rank_opt" and self.policy is None:
            raise ParameterError("rank_opt needs a solved policy")
        if self.lam < 0:
            raise ParameterError("lambda must be >= 0")
        if not self.name:
            label = {
                "tangency": f"tangency(lambda={self.lam:g})",
                "rank_opt": f"rank_opt(q={self.policy.q})" if self.policy else "rank_opt",
            }.get(self.kind, self.kind)
            object.__setattr__(self, "name", label)


def baseline() -> FocalStrategy:
    return FocalStrategy("baseline")


def bootstrapped() -> FocalStrategy:
    return FocalStrategy("bootstrapped")


def tangency(lam: float) -> FocalStrategy:
    return FocalStrategy("tangency", lam=lam)


def rank_opt(policy: RankPolicy) -> FocalStrategy:
    return FocalStrategy("rank_opt", policy=policy)


@dataclass(frozen=True)
class ArenaConfig:
    environment: str = "stylized"
    n_teams: int = 163
    focal: FocalStrategy = field(default_factory=baseline)
    n_reps: int = 100_000
    rng_seed: int = 0
    scoring: str = "additive"

    def __post_init__(self):
        if self.scoring not in SCORING:
            raise ParameterError(f"unknown scoring {self.scoring!r}")
        if self.environment not in ("stylized", "bootstrap"):
            raise ParameterError(f"unknown environment {self.environment!r}")
        if self.n_teams < 2 or self.n_reps < 1:
            raise ParameterError("need n_teams >= 2 and n_reps >= 1")


@dataclass(frozen=True)
class ArenaReport:
    name: str
    n_reps: int
    mean_ir: float
    mean_beta_plus: float
    prob_rank_leq: dict
    rank_histogram: np.ndarray
    quarterly_prob_top3: tuple = ()
    sd_ir: float = float("nan")

    def prob_se(self, q: int) -> float:
        p = self.prob_rank_leq[q]
        return float(np.sqrt(p * (1 - p) / self.n_reps))

    def row(self) -> dict:
        out = {"portfolio": self.name, "mean_ir": self.mean_ir,
               "mean_beta_plus": self.mean_beta_plus}
        out.update({f"p_rank_le_{q}": p for q, p in self.prob_rank_leq.items()})
        for j, p in enumerate(self.quarterly_prob_top3, start=1):
            out[f"p_q{j}_rank_le_3"] = p
        return out


# ---------------------------------------------------------------------------
# statistics helpers


def _stats(ret_log: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = ret_log.sum(axis=-1)
    m2 = ((ret_log - s[..., None] / ret_log.shape[-1]) ** 2).sum(axis=-1)
    return s, m2


def cumulative_ir(sums: np.ndarray, m2: np.ndarray, d: int) -> np.ndarray:
    """Exact IR over intervals 1..m for every m (last axis indexes intervals)."""
    n_int = sums.shape[-1]
    s_cum = np.cumsum(sums, axis=-1)
    n = d * np.arange(1, n_int + 1)
    pooled = np.cumsum(m2, axis=-1) + np.cumsum(sums ** 2 / d, axis=-1) - s_cum ** 2 / n
    with np.errstate(invalid="ignore", divide="ignore"):
        out = s_cum / np.sqrt(pooled / (n - 1))
    return np.where(pooled > 0, out, np.nan)


SCORING = ("exact", "additive")


def cumulative_scores(sums, m2, d: int, scoring: str = "additive") -> np.ndarray:
    """Cumulative score after each interval: exact window IR or sum of interval IRs."""
    if scoring == "exact":
        return cumulative_ir(sums, m2, d)
    if scoring != "additive":
        raise ParameterError(f"unknown scoring {scoring!r}")
    with np.errstate(invalid="ignore", divide="ignore"):
        ir = sums / np.sqrt(m2 / (d - 1))
    return np.cumsum(np.where(m2 > 0, ir, np.nan), axis=-1)


def _rank_against(focal: np.ndarray, opp: np.ndarray) -> np.ndarray:
    """1 + #{opponents with score >= focal}; failed focal scores rank last."""
    r = 1 + (opp >= focal[:, None]).sum(axis=1)
    return np.where(np.isfinite(focal), r, opp.shape[1] + 1)


class _Tracker:
    """Accumulates focal outcomes across batches."""

    def __init__(self, name: str, n_teams: int, n_quarters: int):
        self.name = name
        self.n_teams = n_teams
        self.ir = []
        self.beta = []
        self.ranks = []
        self.qranks = []
        self.n_quarters = n_quarters

    def add(self, ir_total, beta, rank, qrank):
        self.ir.append(ir_total)
        self.beta.append(beta)
        self.ranks.append(rank)
        self.qranks.append(qrank)

    def report(self) -> ArenaReport:
        ir = np.concatenate(self.ir)
        ranks = np.concatenate(self.ranks)
        beta = np.concatenate(self.beta)
        hist = np.bincount(ranks - 1, minlength=self.n_teams)
        probs = {q: float(np.mean(ranks <= q)) for q in Q_REPORT if q <= self.n_teams}
        quarterly = ()
        if self.n_quarters:
            qr = np.concatenate(self.qranks)
            quarterly = tuple(float(np.mean(qr[:, j] <= 3)) for j in range(self.n_quarters))
        finite = np.isfinite(ir)
        return ArenaReport(self.name, len(ir), float(np.mean(ir[finite])),
                           float(np.nanmean(beta)), probs, hist, quarterly,
                           float(np.std(ir[finite])))


def _quarter_windows(n_int: int) -> list[tuple[int, int]]:
    if n_int % 3:
        return []
    return [(3 * j, 3 * j + 3) for j in range(n_int // 3)]


def _quarter_ranks(f_s, f_m2, o_s, o_m2, d, windows, scoring):
    out = np.empty((f_s.shape[0], len(windows)), dtype=int)
    for j, (a, b) in enumerate(windows):
        fi = cumulative_scores(f_s[:, a:b], f_m2[:, a:b], d, scoring)[..., -1]
        oi = cumulative_scores(o_s[:, :, a:b], o_m2[:, :, a:b], d, scoring)[..., -1]
        out[:, j] = _rank_against(fi, np.where(np.isfinite(oi), oi, -np.inf))
    return out


def _play_focal(strategy: FocalStrategy, r_int: list, o_s, o_m2, d: int, model, rng,
                opp_draw=None, gap_scoring="additive", theta=None):
    """Simulate the focal team over all intervals of one batch.

    ``r_int[m]`` holds the (B, I, d) returns of slot m. Returns focal
    interval stats (B, M) and beta+ (B, M).
    """
    bsz = o_s.shape[0]
    n_int = len(r_int)
    n_assets = r_int[0].shape[1]
    f_s = np.empty((bsz, n_int))
    f_m2 = np.empty((bsz, n_int))
    beta = np.full((bsz, n_int), np.nan)
    if strategy.kind == "rank_opt":
        opp_cum = cumulative_scores(o_s, o_m2, d, gap_scoring)
        qmax = qth_largest(np.where(np.isfinite(opp_cum), opp_cum, -np.inf),
                           strategy.policy.q, axis=1)
    if strategy.kind == "tangency":
        cov_inv = np.linalg.inv(model.covariance)
    for m in range(n_int):
        r = r_int[m]
        if strategy.kind == "baseline":
            s, q2 = _kernels.subset_interval_stats(
                np.ascontiguousarray(r), d, np.array([theta.n_plus]),
                np.array([theta.n_minus]), kernel_seed(rng))
            f_s[:, m], f_m2[:, m] = s[:, 0, 0], q2[:, 0, 0]
            beta[:, m] = theta.n_plus / (theta.n_plus + theta.n_minus)
            continue
        if strategy.kind == "bootstrapped":
            w = opp_draw(m, rng)
        elif strategy.kind == "tangency":
            ps = conditional_predictable_sum(model, r.sum(axis=-1), d, strategy.lam, rng)
            target = (1.0 - strategy.lam) * model.mu_r + ps
            raw = target @ cov_inv
            w = raw / np.abs(raw).sum(axis=1, keepdims=True)
        else:
            if m == 0:
                delta = np.zeros(bsz)
            else:
                own = cumulative_scores(f_s[:, :m], f_m2[:, :m], d, gap_scoring)[:, -1]
                delta = own - qmax[:, m - 1]
                delta = np.where(np.isfinite(delta), delta, strategy.policy.delta_grid[0])
            b = act(strategy.policy, m + 1, delta)
            n_plus = np.array([long_count(x, n_assets) for x in np.atleast_1d(b)])
            w = _kernels.subset_weights(n_assets, n_plus, n_assets - n_plus, kernel_seed(rng))
        ret = log_returns(np.einsum("bi,bit->bt", w, r))
        f_s[:, m], f_m2[:, m] = _stats(ret)
        gross = np.abs(w).sum(axis=1)
        beta[:, m] = np.clip(w, 0, None).sum(axis=1) / gross
    return f_s, f_m2, beta


def _finish(trackers, strategies, results, o_s, o_m2, d, windows, scoring):
    opp_total = cumulative_scores(o_s, o_m2, d, scoring)[..., -1]
    opp_total = np.where(np.isfinite(opp_total), opp_total, -np.inf)
    for strat in strategies:
        f_s, f_m2, beta = results[strat.name]
        total = cumulative_scores(f_s, f_m2, d, scoring)[..., -1]
        rank = _rank_against(total, opp_total)
        qrank = _quarter_ranks(f_s, f_m2, o_s, o_m2, d, windows, scoring) if windows else None
        trackers[strat.name].add(ir_from_stats(f_s, f_m2, d), beta.ravel(), rank, qrank)


def _streams(rng_seed, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(int(rng_seed)).spawn(n)]


def simulate_stylized(model: MarketModel, theta: BaselineTheta, strategies, n_teams: int = 163,
                      n_reps: int = 10_000, rng_seed=0, n_intervals: int = 12,
                      batch: int = 200, scoring: str = "additive",
                      gap_scoring: str | None = None) -> dict[str, ArenaReport]:
    """Stylized arena for several focal strategies against one shared field."""
    strategies = list(strategies)
    names = [s.name for s in strategies]
    if len(set(names)) != len(names):
        raise ConfigurationError("focal strategy names must be unique")
    for s in strategies:
        if s.kind == "bootstrapped":
            raise ConfigurationError("bootstrapped focal needs the bootstrap environment")
    if theta.n_assets != model.n_assets:
        raise ParameterError("theta and model disagree on the number of assets")
    field_rng, *focal_rngs = _streams(rng_seed, 1 + len(strategies))
    d = model.days_per_interval
    n_opp = n_teams - 1
    windows = _quarter_windows(n_intervals)
    trackers = {s.name: _Tracker(s.name, n_teams, len(windows)) for s in strategies}
    for start in range(0, n_reps, batch):
        b = min(batch, n_reps - start)
        r = draw_returns(model, (b, model.n_assets, n_intervals * d), field_rng)
        o_s, o_m2 = _kernels.subset_interval_stats(
            r, d, np.full(n_opp, theta.n_plus), np.full(n_opp, theta.n_minus),
            kernel_seed(field_rng))
        r_int = [r[:, :, m * d:(m + 1) * d] for m in range(n_intervals)]
        results = {s.name: _play_focal(s, r_int, o_s, o_m2, d, model, frng,
                                       gap_scoring=gap_scoring or scoring, theta=theta)
                   for s, frng in zip(strategies, focal_rngs)}
        _finish(trackers, strategies, results, o_s, o_m2, d, windows, scoring)
    return {name: t.report() for name, t in trackers.items()}


def run_stylized(config: ArenaConfig, model: MarketModel, theta: BaselineTheta,
                 policy: RankPolicy | None = None) -> ArenaReport:
    focal = config.focal
    if policy is not None and focal.kind == "rank_opt" and focal.policy is None:
        focal = rank_opt(policy)
    out = simulate_stylized(model, theta, [focal], config.n_teams, config.n_reps,
                            config.rng_seed, scoring=config.scoring)
    return out[focal.name]


def resampled_intervals(n_intervals: int, n_reps: int, rng_seed) -> np.ndarray:
    """Interval index sequences (n_reps, M) used by the bootstrap arena."""
    idx_rng = _streams(rng_seed, 1)[0]
    return idx_rng.integers(0, n_intervals, size=(n_reps, n_intervals))


def simulate_bootstrap(panel: ReturnPanel, submissions: SubmissionPanel, strategies,
                       n_teams: int = 163, n_reps: int = 10_000, rng_seed=0,
                       batch: int = 200, scoring: str = "additive",
                      gap_scoring: str | None = None) -> dict[str, ArenaReport]:
    """Bootstrap arena: resampled observed intervals, opponents copy real submissions."""
    strategies = list(strategies)
    for s in strategies:
        if s.kind in ("tangency", "baseline"):
            raise ConfigurationError(f"{s.kind} focal needs the stylized environment")
    n_int = panel.n_intervals
    if submissions.n_intervals != n_int:
        raise IngestionError(
            f"submissions cover {submissions.n_intervals} intervals, prices cover {n_int}")
    if submissions.n_assets != panel.n_assets:
        raise IngestionError("submissions and prices disagree on the asset universe")
    active = submissions.active
    pools = [np.flatnonzero(active[:, m]) for m in range(n_int)]
    for m, p in enumerate(pools):
        if len(p) == 0:
            raise IngestionError(f"no submissions for interval {m + 1}")
    d = panel.days_per_interval
    n_opp = n_teams - 1
    windows = _quarter_windows(n_int)
    idx_all = resampled_intervals(n_int, n_reps, rng_seed)
    _, field_rng, *focal_rngs = _streams(rng_seed, 2 + len(strategies))
    trackers = {s.name: _Tracker(s.name, n_teams, len(windows)) for s in strategies}
    w_all = submissions.weights
    for start in range(0, n_reps, batch):
        b = min(batch, n_reps - start)
        idx = idx_all[start:start + b]
        r_int = [np.stack([panel.interval_returns(j) for j in idx[:, m]]) for m in range(n_int)]
        o_s = np.empty((b, n_opp, n_int))
        o_m2 = np.empty((b, n_opp, n_int))
        for m in range(n_int):
            w = _draw_submissions(w_all, pools, idx[:, m], n_opp, field_rng)
            ret = log_returns(np.matmul(w, r_int[m]))
            o_s[:, :, m], o_m2[:, :, m] = _stats(ret)

        def opp_draw(m, rng, _idx=idx):
            return _draw_submissions(w_all, pools, _idx[:, m], 1, rng)[:, 0, :]

        results = {s.name: _play_focal(s, r_int, o_s, o_m2, d, None, frng, opp_draw, gap_scoring or scoring)
                   for s, frng in zip(strategies, focal_rngs)}
        _finish(trackers, strategies, results, o_s, o_m2, d, windows, scoring)
    return {name: t.report() for name, t in trackers.items()}


def _draw_submissions(w_all, pools, intervals, n, rng) -> np.ndarray:
    """(B, n, I) weights drawn with replacement from real submissions of each interval."""
    out = np.empty((len(intervals), n, w_all.shape[2]))
    for row, m in enumerate(intervals):
        teams = pools[m][rng.integers(0, len(pools[m]), size=n)]
        out[row] = w_all[teams, m, :]
    return out


def run_bootstrap(config: ArenaConfig, panel: ReturnPanel, submissions: SubmissionPanel,
                  policy: RankPolicy | None = None) -> ArenaReport:
    focal = config.focal
    if policy is not None and focal.kind == "rank_opt" and focal.policy is None:
        focal = rank_opt(policy)
    out = simulate_bootstrap(panel, submissions, [focal], config.n_teams, config.n_reps,
                             config.rng_seed, scoring=config.scoring)
    return out[focal.name]


# ---------------------------------------------------------------------------
# leaderboards against a fixed return panel


def simulate_leaderboards(panel: ReturnPanel, theta: BaselineTheta, n_teams: int,
                          n_sims: int, rng_seed) -> np.ndarray:
    """IR of baseline teams against fixed returns: (n_sims, K, M + 1).

    Columns 0..M-1 are interval IRs, the last column the whole-horizon IR.
    """
    rng = np.random.default_rng(rng_seed)
    d = panel.days_per_interval
    r = np.ascontiguousarray(panel.returns[None])
    n = n_teams * n_sims
    s, m2 = _kernels.subset_interval_stats(r, d, np.full(n, theta.n_plus),
                                           np.full(n, theta.n_minus), kernel_seed(rng))
    s = s[0].reshape(n_sims, n_teams, -1)
    m2 = m2[0].reshape(n_sims, n_teams, -1)
    with np.errstate(invalid="ignore", divide="ignore"):
        interval = s / np.sqrt(m2 / (d - 1))
    total = ir_from_stats(s, m2, d)
    return np.concatenate([interval, total[..., None]], axis=-1)


STAT_NAMES = ("mean", "sd", "q01", "q99")


def board_stats(board: np.ndarray) -> np.ndarray:
    """Cross-team (mean, sd, q0.01, q0.99) per column; board (..., K, C) -> (..., C, 4)."""
    b = np.asarray(board, dtype=float)
    k = b.shape[-2]
    sd = b.std(axis=-2, ddof=1) if k > 1 else np.full(b.shape[:-2] + b.shape[-1:], np.nan)
    return np.stack([b.mean(axis=-2), sd, np.quantile(b, 0.01, axis=-2),
                     np.quantile(b, 0.99, axis=-2)], axis=-1)


def leaderboard_stats(boards, observed: np.ndarray | None = None) -> list[dict]:
    """Per-column table of simulated (and observed) leaderboard statistics.

    ``boards`` has shape (n_sims, K, C); each row of the result holds, for
    every statistic, the mean over simulations, the across-simulation sd and
    the observed value when ``observed`` (K_obs, C) is given.
    """
    boards = np.asarray(boards, dtype=float)
    if boards.ndim != 3 or boards.shape[0] < 1:
        raise ParameterError("boards must have shape (n_sims, K, C)")
    st = board_stats(boards)
    mean = st.mean(axis=0)
    sd = st.std(axis=0, ddof=1) if st.shape[0] > 1 else np.zeros_like(mean)
    obs = board_stats(observed) if observed is not None else None
    n_col = boards.shape[2]
    rows = []
    for c in range(n_col):
        row = {"m": str(c + 1) if c < n_col - 1 else "total"}
        for j, name in enumerate(STAT_NAMES):
            if obs is not None:
                row[f"{name}_obs"] = float(obs[c, j])
            row[f"{name}_sim"] = float(mean[c, j])
            row[f"{name}_sim_sd"] = float(sd[c, j])
        rows.append(row)
    return rows
