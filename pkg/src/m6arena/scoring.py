"""Team returns, information ratio (IR) and leaderboard ranks.

The IR of a window is the sum of daily log returns over the window divided by
their sample standard deviation (divisor n - 1, mean with divisor n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ScoreError
from .market import ReturnPanel
from .portfolio import SubmissionPanel


def daily_plain_returns(weights: SubmissionPanel | np.ndarray,
                        panel: ReturnPanel) -> np.ndarray:
    """RET[t, k] = sum_i w[k, m(t), i] r[i, t]; NaN while a team is inactive."""
    w = weights.weights if isinstance(weights, SubmissionPanel) else np.asarray(weights, float)
    n_teams, n_intervals, n_assets = w.shape
    if n_assets != panel.n_assets:
        raise ScoreError("weights and returns disagree on the number of assets")
    if n_intervals != panel.n_intervals:
        raise ScoreError(
            f"weights cover {n_intervals} intervals, returns cover {panel.n_intervals}"
        )
    out = np.empty((panel.n_days, n_teams))
    for m in range(n_intervals):
        sl = panel.interval_slice(m)
        out[sl] = (w[:, m, :] @ panel.returns[:, sl]).T
    return out


def log_returns(ret_plain: np.ndarray) -> np.ndarray:
    ret_plain = np.asarray(ret_plain, dtype=float)
    bad = ret_plain <= -1
    if np.any(bad):
        t, *k = np.argwhere(bad)[0]
        raise ScoreError(f"team return <= -1 (bankruptcy) at day {t}, column {k}")
    return np.log1p(ret_plain)


def daily_returns(weights: SubmissionPanel | np.ndarray, panel: ReturnPanel) -> np.ndarray:
    """Daily log returns ln(1 + RET), shape (T, K)."""
    return log_returns(daily_plain_returns(weights, panel))


def ir(daily_ret, t1: int | None = None, t2: int | None = None) -> float:
    """IR over days t1..t2 inclusive (defaults: whole series)."""
    x = np.asarray(daily_ret, dtype=float)
    t1 = 0 if t1 is None else t1
    t2 = len(x) - 1 if t2 is None else t2
    if t2 <= t1:
        raise ScoreError("IR window needs t2 > t1")
    w = x[t1:t2 + 1]
    n = len(w)
    total = float(np.sum(w))
    var = float(np.sum((w - total / n) ** 2)) / (n - 1)
    if not var > 0:
        raise ScoreError("zero variance in IR window")
    return total / np.sqrt(var)


def ir_columns(daily_ret: np.ndarray, t1: int = 0, t2: int | None = None) -> np.ndarray:
    """Vectorised IR per column over t1..t2; NaN-prefixed columns start at their
    first finite day. Zero-variance columns give NaN."""
    x = np.asarray(daily_ret, dtype=float)
    t2 = x.shape[0] - 1 if t2 is None else t2
    w = x[t1:t2 + 1]
    valid = ~np.isnan(w)
    n = valid.sum(axis=0)
    filled = np.where(valid, w, 0.0)
    total = filled.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = total / n
        dev = np.where(valid, w - mean, 0.0)
        var = (dev ** 2).sum(axis=0) / (n - 1)
        out = total / np.sqrt(var)
    out[~(var > 0) | (n < 2)] = np.nan
    return out


def rank(ir_values) -> np.ndarray:
    """rank_k = #{k' : IR_k' >= IR_k}; ties share the larger rank."""
    v = np.asarray(ir_values, dtype=float)
    s = np.sort(v)
    return len(v) - np.searchsorted(s, v, side="left")


def rank_with_failures(ir_values) -> np.ndarray:
    """rank() with non-finite scores mapped to the worst rank K."""
    v = np.asarray(ir_values, dtype=float)
    finite = np.isfinite(v)
    out = np.full(len(v), len(v), dtype=int)
    if finite.any():
        fv = v[finite]
        out[finite] = rank(fv)
    return out


def ir_additive(daily_ret, days_per_interval: int) -> np.ndarray:
    """Per-interval IR, each standardised by its own interval's sd.

    The cumulative additive score over intervals m1..m2 is the plain sum of
    the returned values.
    """
    x = np.asarray(daily_ret, dtype=float)
    if days_per_interval < 2:
        raise ScoreError("each interval needs at least two days")
    if x.shape[0] % days_per_interval:
        raise ScoreError("series length is not a whole number of intervals")
    blocks = x.reshape(-1, days_per_interval, *x.shape[1:])
    total = blocks.sum(axis=1)
    var = ((blocks - total[:, None] / days_per_interval) ** 2).sum(axis=1) / (days_per_interval - 1)
    if np.any(~(var > 0)):
        raise ScoreError("zero variance within an interval")
    return total / np.sqrt(var)


def ir_from_stats(sums: np.ndarray, m2: np.ndarray, n_days: int) -> np.ndarray:
    """IR from per-interval (sum, centred sum of squares) over the last axis.

    Intervals are pooled with the parallel-variance identity, so the result
    is the exact IR over the concatenated window.
    """
    counts = n_days
    n_int = sums.shape[-1]
    n = counts * n_int
    total = sums.sum(axis=-1)
    means = sums / counts
    grand = total / n
    pooled = m2.sum(axis=-1) + counts * ((means - grand[..., None]) ** 2).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = total / np.sqrt(pooled / (n - 1))
    return np.where(pooled > 0, out, np.nan)


@dataclass(frozen=True)
class ScoreBoard:
    """Daily log returns with IR and ranks for a set of windows.

    Windows are inclusive zero-based interval pairs ``(m1, m2)``.
    """

    daily_ret: np.ndarray
    days_per_interval: int
    team_ids: tuple
    ir: dict
    ranks: dict

    @classmethod
    def build(cls, daily_ret: np.ndarray, days_per_interval: int, team_ids=None,
              windows=None) -> "ScoreBoard":
        x = np.asarray(daily_ret, dtype=float)
        n_int = x.shape[0] // days_per_interval
        if team_ids is None:
            team_ids = tuple(str(k) for k in range(x.shape[1]))
        if windows is None:
            windows = [(m, m) for m in range(n_int)] + [(0, n_int - 1)]
        irs, ranks = {}, {}
        for m1, m2 in windows:
            t1, t2 = m1 * days_per_interval, (m2 + 1) * days_per_interval - 1
            v = ir_columns(x, t1, t2)
            irs[(m1, m2)] = v
            ranks[(m1, m2)] = rank_with_failures(v)
        return cls(x, days_per_interval, tuple(team_ids), irs, ranks)

    @property
    def n_teams(self) -> int:
        return self.daily_ret.shape[1]

    @property
    def n_intervals(self) -> int:
        return self.daily_ret.shape[0] // self.days_per_interval

    def rows(self):
        """(team_id, window label, IR, rank) rows in window then team order."""
        for (m1, m2), v in self.ir.items():
            label = f"{m1 + 1}-{m2 + 1}"
            r = self.ranks[(m1, m2)]
            for k, tid in enumerate(self.team_ids):
                yield tid, label, v[k], int(r[k])
