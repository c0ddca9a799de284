"""Portfolio families: random ternary baseline, tangency, and rank-optimization weights."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DegenerateInputError, NumericError, ParameterError
from .market import MarketModel, _as_rng

GROSS_MIN = 0.25
GROSS_MAX = 1.0
RANK_OPT_POSITION = 0.01
BETA_GRID = np.round(np.linspace(0.0, 1.0, 11), 1)


def kernel_seed(rng: np.random.Generator) -> int:
    """Integer seed for the compiled kernels, drawn from ``rng``."""
    return int(rng.integers(0, 2**31 - 1))


@dataclass(frozen=True)
class BaselineTheta:
    n_plus: int
    n_zero: int
    n_minus: int

    def __post_init__(self):
        if min(self.n_plus, self.n_zero, self.n_minus) < 0:
            raise ParameterError(f"negative position count in {self}")
        if self.n_plus + self.n_minus == 0:
            raise ParameterError("theta needs at least one nonzero position")

    @property
    def n_assets(self) -> int:
        return self.n_plus + self.n_zero + self.n_minus

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.n_plus, self.n_zero, self.n_minus)


@dataclass(frozen=True)
class SubmissionPanel:
    """Weights ``w[k, m, i]`` for K teams, M intervals, I assets.

    Rows of NaN mark intervals before a team's first submission.
    """

    weights: np.ndarray
    team_ids: tuple = field(default=())
    asset_ids: tuple = field(default=())

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 3:
            raise ParameterError("weights must have shape (teams, intervals, assets)")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if not self.team_ids:
            object.__setattr__(self, "team_ids", tuple(str(k) for k in range(w.shape[0])))
        if not self.asset_ids:
            object.__setattr__(self, "asset_ids", tuple(range(w.shape[2])))
        if len(self.team_ids) != w.shape[0] or len(self.asset_ids) != w.shape[2]:
            raise ParameterError("id tuples do not match the weight array")

    @property
    def n_teams(self) -> int:
        return self.weights.shape[0]

    @property
    def n_intervals(self) -> int:
        return self.weights.shape[1]

    @property
    def n_assets(self) -> int:
        return self.weights.shape[2]

    @property
    def active(self) -> np.ndarray:
        """Boolean (K, M): team has weights in force during interval m."""
        return ~np.isnan(self.weights).any(axis=2)

    def subset(self, teams) -> "SubmissionPanel":
        teams = list(teams)
        return SubmissionPanel(self.weights[teams],
                               tuple(self.team_ids[k] for k in teams), self.asset_ids)


def validate_weights(w) -> bool:
    """True iff the gross exposure lies in [0.25, 1]."""
    gross = float(np.sum(np.abs(np.asarray(w, dtype=float))))
    tol = 1e-12
    return GROSS_MIN - tol <= gross <= GROSS_MAX + tol


def sample_baseline(theta: BaselineTheta, rng_seed) -> np.ndarray:
    """Random ternary portfolio: counts fixed by ``theta``, assets drawn without replacement."""
    if not isinstance(theta, BaselineTheta):
        theta = BaselineTheta(*theta)
    rng = _as_rng(rng_seed)
    out = _kernels.subset_weights(theta.n_assets, np.array([theta.n_plus]),
                                  np.array([theta.n_minus]), kernel_seed(rng))
    return out[0]


def sample_baseline_panel(theta: BaselineTheta, n_teams: int, n_intervals: int,
                          rng_seed) -> np.ndarray:
    """Fresh baseline draws for every (team, interval): shape (K, M, I)."""
    rng = _as_rng(rng_seed)
    n = n_teams * n_intervals
    w = _kernels.subset_weights(theta.n_assets, np.full(n, theta.n_plus),
                                np.full(n, theta.n_minus), kernel_seed(rng))
    return w.reshape(n_teams, n_intervals, theta.n_assets)


def tangency_weights(model: MarketModel, predictable_sum=None, gross_cap: float = 1.0,
                     mean=None, covariance=None) -> np.ndarray:
    """Sigma^-1 ((1 - lambda) mu + sum_t r_p), rescaled to gross exposure ``gross_cap``.

    ``mean``/``covariance`` override the model's compound-symmetric moments.
    """
    mu = model.mean_vector if mean is None else np.asarray(mean, dtype=float)
    cov = model.covariance if covariance is None else np.asarray(covariance, dtype=float)
    ps = np.zeros_like(mu) if predictable_sum is None else np.asarray(predictable_sum, float)
    target = (1.0 - model.lam) * mu + ps
    try:
        raw = np.linalg.solve(cov, target)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"covariance is singular: {exc}") from exc
    gross = np.sum(np.abs(raw))
    if not np.isfinite(gross):
        raise NumericError("tangency solve produced non-finite weights")
    if gross == 0.0:
        raise DegenerateInputError("tangency target is the zero vector")
    return raw * (gross_cap / gross)


def long_count(beta_plus: float, n_assets: int) -> int:
    """Round-half-up count of long positions for a long share ``beta_plus``."""
    if not 0.0 <= beta_plus <= 1.0:
        raise ParameterError(f"beta_plus must lie in [0, 1], got {beta_plus}")
    return int(math.floor(beta_plus * n_assets + 0.5 + 1e-9))


def rank_opt_weights(beta_plus: float, rng_seed, n_assets: int = 100) -> np.ndarray:
    """+-0.01 on every asset with ``round(beta_plus * I)`` longs at random positions.

    The position size is 1/I so gross exposure is exactly one; with I = 100
    this is the +-0.01 portfolio.
    """
    n_long = long_count(beta_plus, n_assets)
    rng = _as_rng(rng_seed)
    out = _kernels.subset_weights(n_assets, np.array([n_long]),
                                  np.array([n_assets - n_long]), kernel_seed(rng))
    return out[0]
