"""Descriptive diagnostics of submitted portfolios.

Long share beta+, skewness exposure gamma, rank changes against beta+ and
the median split of top-rank probabilities by average long share. Smoothed
curves are replaced by binned means with standard errors (bin width 0.1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateInputError, ParameterError
from .market import ReturnPanel
from .portfolio import SubmissionPanel
from .scoring import ScoreBoard, ir_columns, rank_with_failures

BIN_WIDTH = 0.1


def _gross(w: np.ndarray) -> np.ndarray:
    g = np.abs(w).sum(axis=-1)
    if np.any(g[np.isfinite(g)] <= 0):
        raise DegenerateInputError("zero gross exposure: long share undefined")
    return g


def beta_plus(w) -> np.ndarray | float:
    """Share of gross exposure held long; works on the last axis."""
    w = np.asarray(w, dtype=float)
    out = np.clip(w, 0, None).sum(axis=-1) / _gross(w)
    return float(out) if out.ndim == 0 else out


def asset_skewness(panel: ReturnPanel) -> np.ndarray:
    """Sample skewness of each asset's daily returns over the whole panel."""
    return stats.skew(panel.returns, axis=1)


def skew_exposure(w, asset_skews) -> np.ndarray | float:
    """gamma = sum_i (w_i / sum|w|) * skew_i; works on the last axis."""
    w = np.asarray(w, dtype=float)
    out = (w @ np.asarray(asset_skews, dtype=float)) / _gross(w)
    return float(out) if out.ndim == 0 else out


def period_windows(n_intervals: int) -> dict[str, tuple[int, int]]:
    """Quarter windows Q1.. (three intervals each) plus the global window."""
    out = {}
    if n_intervals % 3 == 0:
        out = {f"Q{j + 1}": (3 * j, 3 * j + 2) for j in range(n_intervals // 3)}
    out["global"] = (0, n_intervals - 1)
    return out


@dataclass(frozen=True)
class TeamExposure:
    beta_plus: np.ndarray          # (M, K); NaN where inactive
    gamma: np.ndarray | None       # (M, K) or None
    beta_bar_plus: dict            # period -> (K,)
    rank_by_period: dict           # period -> (K,)
    team_ids: tuple

    @property
    def n_teams(self) -> int:
        return self.beta_plus.shape[1]


def team_exposure(submissions: SubmissionPanel, panel: ReturnPanel | None = None,
                  board: ScoreBoard | None = None) -> TeamExposure:
    """beta+ (and gamma when returns are given) per interval and team, period
    averages and, when a scoreboard is given, ranks per period."""
    w = submissions.weights  # (K, M, I)
    active = submissions.active
    bp = np.full(active.shape, np.nan)
    bp[active] = beta_plus(w[active])
    gamma = None
    if panel is not None:
        gamma = np.full(active.shape, np.nan)
        gamma[active] = skew_exposure(w[active], asset_skewness(panel))
        gamma = gamma.T
    bp = bp.T
    windows = period_windows(submissions.n_intervals)
    bbar = {p: quiet_nanmean(bp[a:b + 1]) for p, (a, b) in windows.items()}
    ranks = {}
    if board is not None:
        for p, win in windows.items():
            ranks[p] = board.ranks[win] if win in board.ranks else rank_with_failures(
                ir_columns(board.daily_ret, win[0] * board.days_per_interval,
                           (win[1] + 1) * board.days_per_interval - 1))
    return TeamExposure(bp, gamma, bbar, ranks, submissions.team_ids)


def quiet_nanmean(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """nanmean that returns NaN for all-NaN slices without warning."""
    n = np.isfinite(x).sum(axis=axis)
    tot = np.where(np.isfinite(x), x, 0.0).sum(axis=axis)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, tot / n, np.nan)


def mean_beta_by_interval(exposure: TeamExposure) -> np.ndarray:
    """Average over active teams of beta+ for each interval."""
    return quiet_nanmean(exposure.beta_plus, axis=1)


def cumulative_ranks(board: ScoreBoard) -> np.ndarray:
    """Leaderboard rank after each interval (IR over intervals 1..m): (M, K)."""
    d = board.days_per_interval
    return np.stack([rank_with_failures(ir_columns(board.daily_ret, 0, (m + 1) * d - 1))
                     for m in range(board.n_intervals)])


def _binned(x: np.ndarray, y: np.ndarray, edges: np.ndarray):
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, len(edges) - 2)
    for b in range(len(edges) - 1):
        sel = y[idx == b]
        n = len(sel)
        mean = float(sel.mean()) if n else float("nan")
        se = float(sel.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        yield b, n, mean, se


def rank_change_profile(board: ScoreBoard, exposure: TeamExposure,
                        bin_width: float = BIN_WIDTH) -> list[dict]:
    """Mean |rank_{m-1} - rank_m| by beta+_m bin, for every m >= 2."""
    if board.n_intervals < 2:
        raise ParameterError("need at least two intervals")
    ranks = cumulative_ranks(board)
    edges = np.round(np.arange(0.0, 1.0 + bin_width / 2, bin_width), 10)
    rows = []
    for m in range(1, board.n_intervals):
        change = np.abs(ranks[m - 1] - ranks[m]).astype(float)
        bp = exposure.beta_plus[m]
        ok = np.isfinite(bp)
        for b, n, mean, se in _binned(bp[ok], change[ok], edges):
            rows.append({"m": m + 1, "beta_lo": float(edges[b]), "beta_hi": float(edges[b + 1]),
                         "n": n, "mean_abs_rank_change": mean, "se": se})
    return rows


def exposure_by_rank(values, ranks, bin_size: int = 10) -> list[dict]:
    """Mean of a per-team exposure within rank bins of ``bin_size`` places."""
    v = np.asarray(values, dtype=float)
    r = np.asarray(ranks)
    ok = np.isfinite(v)
    k = len(v)
    edges = np.arange(1, k + bin_size + 1, bin_size)
    rows = []
    for b, n, mean, se in _binned(r[ok], v[ok], edges):
        if edges[b] > k:
            break
        rows.append({"rank_lo": int(edges[b]), "rank_hi": int(min(edges[b + 1] - 1, k)),
                     "n": n, "mean": mean, "se": se})
    return rows


def equal_weight_ir(panel: ReturnPanel, windows: dict) -> dict:
    """IR of the equally weighted all-long portfolio for each window."""
    w = np.full(panel.n_assets, 1.0 / panel.n_assets)
    ret = np.log1p(w @ panel.returns)[:, None]
    d = panel.days_per_interval
    return {p: float(ir_columns(ret, a * d, (b + 1) * d - 1)[0]) for p, (a, b) in windows.items()}


def median_split_table(exposure: TeamExposure, q_list=(5, 10),
                       benchmark_ir: dict | None = None) -> list[dict]:
    """Top-q probabilities for teams below / at-or-above the median beta-bar+.

    Teams without any submission in a period are left out of that period.
    Below means strictly below the median.
    """
    rows = []
    for period, bbar in exposure.beta_bar_plus.items():
        if period not in exposure.rank_by_period:
            raise ParameterError(f"no ranks for period {period}")
        r = np.asarray(exposure.rank_by_period[period])
        ok = np.isfinite(bbar)
        med = float(np.median(bbar[ok])) if ok.any() else float("nan")
        below = ok & (bbar < med)
        above = ok & ~(bbar < med)
        row = {"period": period, "median_beta_bar_plus": med,
               "n_below": int(below.sum()), "n_above": int(above.sum())}
        for q in q_list:
            for name, grp in (("below", below), ("above", above)):
                n = grp.sum()
                row[f"p_top{q}_{name}"] = float(np.mean(r[grp] <= q)) if n else float("nan")
                row[f"n_top{q}_{name}"] = int(np.sum(r[grp] <= q))
        if benchmark_ir is not None:
            row["equal_weight_ir"] = benchmark_ir.get(period, float("nan"))
        rows.append(row)
    return rows
