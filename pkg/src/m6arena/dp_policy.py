"""Backward induction for the probability of finishing at rank <= q.

The state before submission m is the gap Delta between the focal team's
cumulative additive IR and the q-th highest cumulative score among the K - 1
opponents. The action is the long share beta+ of a +-1/I portfolio, on a
0.1 grid. Gap increments are simulated once per (m, beta+) against a field
of baseline opponents and reused for every grid point:

    increment = own interval IR - (qth_max_m - qth_max_{m-1})

Terminal stage: V_M(D) = max_b P(D + inc >= 0).
Earlier stages: V_m(D) = max_b E[V_{m+1}(D + inc)], with V_{m+1}
interpolated linearly on the grid and clamped at its ends.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigurationError, ParameterError
from .market import MarketModel, _as_rng, draw_returns
from .portfolio import BETA_GRID, BaselineTheta, kernel_seed, long_count

DELTA_GRID = np.round(np.arange(-40.0, 40.0 + 1e-9, 0.5), 10)
DEFAULT_PATHS = 10_000


@dataclass(frozen=True)
class TransitionKernel:
    increments: np.ndarray  # (M, n_beta, n_paths)
    beta_grid: np.ndarray
    q: int
    n_teams: int

    @property
    def n_intervals(self) -> int:
        return self.increments.shape[0]

    @property
    def n_paths(self) -> int:
        return self.increments.shape[2]


@dataclass(frozen=True)
class RankPolicy:
    q: int
    delta_grid: np.ndarray
    beta_grid: np.ndarray
    beta_table: np.ndarray   # (M, G): beta+ at submission m (row m-1) given Delta
    value_table: np.ndarray  # (M, G): V_m(Delta)

    @property
    def n_intervals(self) -> int:
        return self.beta_table.shape[0]

    def rows(self):
        """(m, Delta, beta+, V) rows, m one-based."""
        for m in range(self.n_intervals):
            for g, delta in enumerate(self.delta_grid):
                yield m + 1, float(delta), float(self.beta_table[m, g]), float(self.value_table[m, g])


def simulate_field(model: MarketModel, theta: BaselineTheta, n_paths: int, rng_seed,
                   n_teams: int = 163, n_intervals: int = 12, beta_grid=BETA_GRID,
                   batch: int = 250) -> tuple[np.ndarray, np.ndarray]:
    """Simulate opponents' cumulative additive IR and the focal interval IR per beta+.

    Returns ``(opp_cum, own)`` with shapes (n_paths, K-1, M) and
    (n_paths, n_beta, M).
    """
    if n_paths < 1:
        raise ParameterError("n_paths must be >= 1")
    if theta.n_assets != model.n_assets:
        raise ParameterError("theta and model disagree on the number of assets")
    rng = _as_rng(rng_seed)
    d = model.days_per_interval
    n_opp = n_teams - 1
    opp_plus = np.full(n_opp, theta.n_plus)
    opp_minus = np.full(n_opp, theta.n_minus)
    own_plus = np.array([long_count(b, model.n_assets) for b in beta_grid])
    own_minus = model.n_assets - own_plus
    opp_cum = np.empty((n_paths, n_opp, n_intervals))
    own = np.empty((n_paths, len(beta_grid), n_intervals))
    for start in range(0, n_paths, batch):
        b = min(batch, n_paths - start)
        r = draw_returns(model, (b, model.n_assets, n_intervals * d), rng)
        s, q2 = _kernels.subset_interval_stats(r, d, opp_plus, opp_minus, kernel_seed(rng))
        opp_cum[start:start + b] = np.cumsum(s / np.sqrt(q2 / (d - 1)), axis=-1)
        s, q2 = _kernels.subset_interval_stats(r, d, own_plus, own_minus, kernel_seed(rng))
        own[start:start + b] = s / np.sqrt(q2 / (d - 1))
    return opp_cum, own


def qth_largest(x: np.ndarray, q: int, axis: int) -> np.ndarray:
    n = x.shape[axis]
    if not 1 <= q <= n:
        raise ParameterError(f"q={q} outside 1..{n}")
    return np.take(np.partition(x, n - q, axis=axis), n - q, axis=axis)


def kernel_from_field(opp_cum: np.ndarray, own: np.ndarray, q: int,
                      beta_grid=BETA_GRID) -> TransitionKernel:
    qmax = qth_largest(opp_cum, q, axis=1)  # (n_paths, M)
    step = np.diff(qmax, axis=1, prepend=0.0)
    inc = own - step[:, None, :]
    return TransitionKernel(np.ascontiguousarray(np.transpose(inc, (2, 1, 0))),
                            np.asarray(beta_grid, float), q, opp_cum.shape[1] + 1)


def build_kernels(model: MarketModel, theta: BaselineTheta, qs, n_paths: int = DEFAULT_PATHS,
                  rng_seed=0, n_teams: int = 163, n_intervals: int = 12,
                  beta_grid=BETA_GRID) -> dict[int, TransitionKernel]:
    """Kernels for several target ranks from one simulated field."""
    opp_cum, own = simulate_field(model, theta, n_paths, rng_seed, n_teams, n_intervals, beta_grid)
    return {q: kernel_from_field(opp_cum, own, q, beta_grid) for q in qs}


def build_kernel(model: MarketModel, theta: BaselineTheta, q: int,
                 n_paths: int = DEFAULT_PATHS, rng_seed=0, n_teams: int = 163,
                 n_intervals: int = 12, beta_grid=BETA_GRID) -> TransitionKernel:
    return build_kernels(model, theta, [q], n_paths, rng_seed, n_teams, n_intervals,
                         beta_grid)[q]


def _choose(values: np.ndarray, ses: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per grid point: the highest beta whose value is within one MC standard
    error of the difference to the best. values/ses have shape (n_beta, G)."""
    best = values.argmax(axis=0)
    cols = np.arange(values.shape[1])
    gap = values[best, cols][None, :] - values
    ok = gap <= np.sqrt(ses[best, cols][None, :] ** 2 + ses ** 2)
    # highest admissible index along beta axis
    chosen = values.shape[0] - 1 - np.argmax(ok[::-1], axis=0)
    return chosen, values[chosen, cols]


def solve(kernel: TransitionKernel, delta_grid=None, q: int | None = None) -> RankPolicy:
    """Backward induction on a fixed Delta grid."""
    grid = DELTA_GRID if delta_grid is None else np.asarray(delta_grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ConfigurationError("delta grid must be strictly increasing with >= 2 points")
    if q is not None and q != kernel.q:
        raise ConfigurationError(f"kernel was built for q={kernel.q}, not q={q}")
    inc = kernel.increments
    n_int, n_beta, n_paths = inc.shape
    if n_paths < 1 or not np.all(np.isfinite(inc)):
        raise ConfigurationError("empty or non-finite kernel cell")
    beta_table = np.empty((n_int, len(grid)))
    value_table = np.empty((n_int, len(grid)))
    v_next = None
    for m in range(n_int - 1, -1, -1):
        vals = np.empty((n_beta, len(grid)))
        ses = np.empty((n_beta, len(grid)))
        for j in range(n_beta):
            nxt = grid[:, None] + inc[m, j][None, :]
            if v_next is None:
                y = (nxt >= 0.0).astype(float)
            else:
                y = np.interp(nxt, grid, v_next)
            vals[j] = y.mean(axis=1)
            ses[j] = y.std(axis=1) / np.sqrt(n_paths)
        chosen, v = _choose(vals, ses)
        beta_table[m] = kernel.beta_grid[chosen]
        value_table[m] = v
        v_next = v
    return RankPolicy(kernel.q, grid, kernel.beta_grid, beta_table, value_table)


def act(policy: RankPolicy, m: int, delta) -> np.ndarray | float:
    """beta+ for submission m (one-based) at gap ``delta``: nearest grid point."""
    if not 1 <= m <= policy.n_intervals:
        raise ParameterError(f"m must lie in 1..{policy.n_intervals}")
    grid = policy.delta_grid
    d = np.clip(np.asarray(delta, dtype=float), grid[0], grid[-1])
    pos = np.searchsorted(grid, d)
    pos = np.clip(pos, 1, len(grid) - 1)
    left = grid[pos - 1]
    right = grid[pos]
    idx = np.where(d - left <= right - d, pos - 1, pos)
    out = policy.beta_table[m - 1, idx]
    return float(out) if np.ndim(out) == 0 else out
