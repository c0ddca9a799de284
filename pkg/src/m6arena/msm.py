"""Method of simulated moments for the baseline position counts theta.

For each interval m the observed leaderboard gives the cross-team mean g1
and kurtosis g2 of the interval IR. Their distribution under a candidate
theta is simulated by redrawing every team's ternary weights against the
fixed observed returns of that interval. The moment function is

    g_j = ((g_j_obs - mu_j)^2 - var_j) / sqrt(var_j),   j = 1, 2

averaged over intervals, with identity weighting. theta is found by
exhaustive search over all (n_plus, n_zero, n_minus) summing to I.

Simulated teams come from a pool of ``pool_size`` per-team draws per
interval that is shared by every candidate (common random numbers); the
``n_sim`` panels of K teams are index draws from that pool. With
``pool_size=None`` every panel uses fresh, distinct teams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import EstimationError, ParameterError
from .market import ReturnPanel
from .portfolio import BaselineTheta

DEFAULT_N_SIM = 1000
DEFAULT_POOL = 2000


@dataclass(frozen=True)
class MomentTarget:
    g1: np.ndarray
    g2: np.ndarray
    n_teams: int

    def __post_init__(self):
        g1 = np.asarray(self.g1, dtype=float)
        g2 = np.asarray(self.g2, dtype=float)
        if g1.ndim != 1 or g1.shape != g2.shape or len(g1) < 1:
            raise ParameterError("g1 and g2 must be equal-length, non-empty vectors")
        if np.any(g2 < 1 - 1e-12):
            raise ParameterError("kurtosis below its lower bound of one")
        object.__setattr__(self, "g1", g1)
        object.__setattr__(self, "g2", g2)

    @property
    def n_intervals(self) -> int:
        return len(self.g1)

    @classmethod
    def from_leaderboard(cls, interval_ir: np.ndarray) -> "MomentTarget":
        """Build from per-interval IR of shape (K, M); NaN entries are dropped."""
        x = np.asarray(interval_ir, dtype=float)
        g = [moment_stats(col[np.isfinite(col)]) for col in x.T]
        return cls(np.array([a for a, _ in g]), np.array([b for _, b in g]), x.shape[0])


@dataclass(frozen=True)
class MSMResult:
    theta: BaselineTheta
    objective: float
    candidates: np.ndarray
    surface: np.ndarray


def moment_stats(ir_cross_section) -> tuple[float, float]:
    """Cross-sectional mean and kurtosis (population moments, divisor K)."""
    x = np.asarray(ir_cross_section, dtype=float)
    mean = float(x.mean())
    dev = x - mean
    v2 = float(np.mean(dev ** 2))
    if not v2 > 0:
        raise EstimationError("zero cross-sectional variance")
    return mean, float(np.mean(dev ** 4)) / v2 ** 2


def candidate_set(n_assets: int) -> np.ndarray:
    """All (n_plus, n_zero, n_minus) with sum I and n_zero != I, lexicographic."""
    out = [(p, n_assets - p - n, n)
           for p in range(n_assets + 1)
           for n in range(n_assets + 1 - p)
           if p + n > 0]
    out.sort()
    return np.array(out, dtype=np.int64)


def _interval_seeds(rng_seed, m: int) -> tuple[int, np.random.Generator]:
    ss = np.random.SeedSequence([int(rng_seed), 7919, int(m)])
    rng = np.random.default_rng(ss)
    return int(rng.integers(0, 2**31 - 1)), rng


def simulate_moment_table(candidates, panel: ReturnPanel, m: int, n_sim: int,
                          n_teams: int, rng_seed, pool_size: int | None = DEFAULT_POOL) -> np.ndarray:
    """(C, 4) table of mu_g1, var_g1, mu_g2, var_g2 for every candidate theta.

    Interval ``m`` is zero-based. The random stream depends only on
    ``(rng_seed, m)`` so all candidates share draws.
    """
    if n_sim < 2:
        raise ParameterError("n_sim must be >= 2")
    cand = np.atleast_2d(np.asarray(candidates, dtype=np.int64))
    if np.any(cand.sum(axis=1) != panel.n_assets):
        raise ParameterError("candidate counts must sum to the number of assets")
    r = np.ascontiguousarray(panel.interval_returns(m))
    kseed, rng = _interval_seeds(rng_seed, m)
    if pool_size is None:
        pool_n = n_sim * n_teams
        idx = np.arange(pool_n, dtype=np.int64).reshape(n_sim, n_teams)
    else:
        pool_n = pool_size
        idx = rng.integers(0, pool_n, size=(n_sim, n_teams))
    pool = _kernels.candidate_pool_ir(r, cand[:, 0], cand[:, 2], pool_n, kseed)
    return _kernels.panel_moments(pool, idx)


def simulate_moment_dist(theta: BaselineTheta, panel: ReturnPanel, m: int, n_sim: int,
                         rng_seed, n_teams: int = 163,
                         pool_size: int | None = DEFAULT_POOL) -> tuple[float, float, float, float]:
    """Simulated (mu_g1, var_g1, mu_g2, var_g2) for one theta and interval."""
    row = simulate_moment_table([theta.as_tuple()], panel, m, n_sim, n_teams,
                                rng_seed, pool_size)[0]
    return tuple(float(v) for v in row)


def moment_function(target: MomentTarget, table: np.ndarray, strict: bool = True) -> np.ndarray:
    """Standardised moment function per interval: (M, C, 2) from (M, C, 4) tables.

    With ``strict=False`` candidates with zero simulated variance get NaN
    instead of raising.
    """
    mu1, v1, mu2, v2 = (table[..., j] for j in range(4))
    degenerate = ~(v1 > 0) | ~(v2 > 0)
    if strict and np.any(degenerate):
        raise EstimationError("zero simulated variance; standardization undefined")
    g1 = target.g1[:, None]
    g2 = target.g2[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        a = ((g1 - mu1) ** 2 - v1) / np.sqrt(v1)
        b = ((g2 - mu2) ** 2 - v2) / np.sqrt(v2)
    out = np.stack([a, b], axis=-1)
    out[degenerate] = np.nan
    return out


def objective_from_tables(target: MomentTarget, tables: np.ndarray,
                          strict: bool = True) -> np.ndarray:
    gbar = moment_function(target, tables, strict).mean(axis=0)
    return np.einsum("cj,cj->c", gbar, gbar)


def _tables(target, candidates, panel, n_sim, rng_seed, pool_size):
    if panel.n_intervals != target.n_intervals:
        raise ParameterError("target and return panel disagree on the number of intervals")
    return np.stack([
        simulate_moment_table(candidates, panel, m, n_sim, target.n_teams, rng_seed, pool_size)
        for m in range(target.n_intervals)
    ])


def msm_objective(target: MomentTarget, theta: BaselineTheta, panel: ReturnPanel,
                  n_sim: int = DEFAULT_N_SIM, rng_seed=0,
                  pool_size: int | None = DEFAULT_POOL) -> float:
    """gbar' gbar for a single theta."""
    tables = _tables(target, [theta.as_tuple()], panel, n_sim, rng_seed, pool_size)
    return float(objective_from_tables(target, tables)[0])


def estimate_theta(target: MomentTarget, panel: ReturnPanel, n_sim: int = DEFAULT_N_SIM,
                   rng_seed=0, pool_size: int | None = DEFAULT_POOL,
                   candidates=None) -> MSMResult:
    """Exhaustive-search MSM estimate; ties go to the lexicographically smallest theta."""
    cand = candidate_set(panel.n_assets) if candidates is None else np.asarray(candidates)
    tables = _tables(target, cand, panel, n_sim, rng_seed, pool_size)
    surface = objective_from_tables(target, tables, strict=False)
    if np.all(np.isnan(surface)):
        raise EstimationError("objective undefined for every candidate")
    surf = np.where(np.isnan(surface), np.inf, surface)
    best = int(np.argmin(surf))  # first minimum == lexicographically smallest
    return MSMResult(BaselineTheta(*map(int, cand[best])), float(surface[best]), cand, surface)
