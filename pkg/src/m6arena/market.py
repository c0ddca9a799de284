"""Return-generating process: homogeneous assets with compound-symmetric covariance.

Returns are IID over days, ``r_t ~ N(mu * 1, Sigma)`` with
``Sigma = sigma_rr * I + sigma_rr_prime * (J - I)``. Under predictability
``lambda`` each draw splits into an unpredictable part
``r_u ~ N((1 - lambda) mu, (1 - lambda) Sigma)`` and an independent
predictable part ``r_p ~ N(lambda mu, lambda Sigma)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EstimationError, ParameterError

DAYS_PER_INTERVAL = 20
TRADING_DAYS = 252


@dataclass(frozen=True)
class MarketModel:
    mu_r: float = 0.00037
    sigma_rr: float = 0.00038
    sigma_rr_prime: float = 0.00013
    lam: float = 0.0
    n_assets: int = 100
    days_per_interval: int = DAYS_PER_INTERVAL

    def __post_init__(self):
        if self.n_assets < 1 or self.days_per_interval < 1:
            raise ParameterError("n_assets and days_per_interval must be positive")
        if not self.sigma_rr > 0:
            raise ParameterError(f"sigma_rr must be positive, got {self.sigma_rr}")
        if self.sigma_rr_prime < 0:
            raise ParameterError("sigma_rr_prime must be non-negative")
        if self.n_assets > 1 and not self.sigma_rr_prime < self.sigma_rr:
            raise ParameterError(
                "compound-symmetry covariance is not positive definite: "
                f"sigma_rr_prime={self.sigma_rr_prime} >= sigma_rr={self.sigma_rr}"
            )
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must lie in [0, 1], got {self.lam}")

    @property
    def mean_vector(self) -> np.ndarray:
        return np.full(self.n_assets, self.mu_r)

    @property
    def covariance(self) -> np.ndarray:
        n = self.n_assets
        cov = np.full((n, n), self.sigma_rr_prime)
        np.fill_diagonal(cov, self.sigma_rr)
        return cov

    def with_lambda(self, lam: float) -> "MarketModel":
        return MarketModel(self.mu_r, self.sigma_rr, self.sigma_rr_prime, lam,
                           self.n_assets, self.days_per_interval)


@dataclass(frozen=True)
class ReturnPanel:
    """Daily simple returns ``returns[i, t]`` split into equal-length intervals.

    ``unpredictable``/``predictable`` are present only for panels generated
    with ``lambda > 0``; their sum is ``returns``.
    """

    returns: np.ndarray
    days_per_interval: int = DAYS_PER_INTERVAL
    unpredictable: np.ndarray | None = None
    predictable: np.ndarray | None = None
    asset_ids: tuple = field(default=())
    dates: tuple = field(default=())

    def __post_init__(self):
        r = np.asarray(self.returns, dtype=float)
        if r.ndim != 2:
            raise ParameterError("returns must be a 2-d (assets x days) array")
        if self.days_per_interval < 1 or r.shape[1] % self.days_per_interval:
            raise ParameterError(
                f"{r.shape[1]} days do not split into intervals of {self.days_per_interval}"
            )
        r.setflags(write=False)
        object.__setattr__(self, "returns", r)
        if not self.asset_ids:
            object.__setattr__(self, "asset_ids", tuple(range(r.shape[0])))
        elif len(self.asset_ids) != r.shape[0]:
            raise ParameterError("asset_ids length does not match returns")

    @property
    def n_assets(self) -> int:
        return self.returns.shape[0]

    @property
    def n_days(self) -> int:
        return self.returns.shape[1]

    @property
    def n_intervals(self) -> int:
        return self.n_days // self.days_per_interval

    @property
    def interval_index(self) -> np.ndarray:
        """Zero-based interval of every day."""
        return np.arange(self.n_days) // self.days_per_interval

    def interval_slice(self, m: int) -> slice:
        """Day slice of zero-based interval ``m``."""
        d = self.days_per_interval
        return slice(m * d, (m + 1) * d)

    def interval_returns(self, m: int) -> np.ndarray:
        return self.returns[:, self.interval_slice(m)]


def _as_rng(seed) -> np.random.Generator:
    if seed is None:
        raise ParameterError("a seed is required; implicit entropy is not allowed")
    return np.random.default_rng(seed)


def draw_returns(model: MarketModel, shape: tuple, rng: np.random.Generator,
                 scale: float = 1.0, mean_scale: float = 1.0) -> np.ndarray:
    """Compound-symmetric normal draws with assets on axis -2 and days on axis -1.

    ``scale`` multiplies the covariance and ``mean_scale`` the mean; the
    factor model ``mu + sqrt(s') f 1 + sqrt(s - s') e`` is exact for s' >= 0.
    """
    *lead, n_assets, n_days = shape
    if n_assets != model.n_assets:
        raise ParameterError("shape does not match model.n_assets")
    common = rng.standard_normal((*lead, 1, n_days))
    idio = rng.standard_normal(shape)
    out = idio * np.sqrt(scale * (model.sigma_rr - model.sigma_rr_prime))
    out += common * np.sqrt(scale * model.sigma_rr_prime)
    out += mean_scale * model.mu_r
    return out


def sample_returns(model: MarketModel, n_days: int, rng_seed) -> ReturnPanel:
    """Draw an IID panel of ``n_days`` daily returns from ``model``."""
    if n_days < 1:
        raise ParameterError("n_days must be >= 1")
    rng = _as_rng(rng_seed)
    d = model.days_per_interval if n_days % model.days_per_interval == 0 else n_days
    shape = (model.n_assets, n_days)
    if model.lam == 0.0:
        return ReturnPanel(draw_returns(model, shape, rng), d)
    lam = model.lam
    r_u = draw_returns(model, shape, rng, scale=1.0 - lam, mean_scale=1.0 - lam)
    r_p = draw_returns(model, shape, rng, scale=lam, mean_scale=lam)
    return ReturnPanel(r_u + r_p, d, unpredictable=r_u, predictable=r_p)


def conditional_predictable_sum(model: MarketModel, interval_sum: np.ndarray,
                                n_days: int, lam: float,
                                rng: np.random.Generator) -> np.ndarray:
    """Draw sum_t r_p over an interval given the realised sum of total returns.

    With ``r = r_u + r_p`` and both components proportional to Sigma,
    ``sum r_p | sum r ~ N(lam * sum r, n_days * lam * (1 - lam) * Sigma)``.
    Assets are on axis -1 of ``interval_sum``.
    """
    if lam == 0.0:
        return np.zeros_like(interval_sum)
    shape = interval_sum.shape
    noise = draw_returns(model, (*shape[:-1], shape[-1], 1), rng,
                         scale=n_days * lam * (1.0 - lam), mean_scale=0.0)[..., 0]
    return lam * interval_sum + noise


def fit_covariance_cs(panel: ReturnPanel | np.ndarray) -> tuple[float, float]:
    """Compound-symmetry MLE: mean diagonal and mean off-diagonal of the
    unbiased sample covariance."""
    r = panel.returns if isinstance(panel, ReturnPanel) else np.asarray(panel, float)
    n_assets, n_days = r.shape
    if n_assets < 2:
        raise EstimationError("need at least two assets for the off-diagonal mean")
    if n_days < 2:
        raise EstimationError("need at least two days for a sample covariance")
    s = np.cov(r, ddof=1)
    diag = float(np.trace(s)) / n_assets
    off = (float(s.sum()) - float(np.trace(s))) / (n_assets * (n_assets - 1))
    return diag, off


def daily_mean_from_annual(annual_return: float, trading_days: int = TRADING_DAYS) -> float:
    """Geometric per-day mean that compounds to ``annual_return``."""
    if trading_days <= 0:
        raise ParameterError("trading_days must be positive")
    if annual_return <= -1:
        raise ParameterError("annual_return must exceed -1")
    return (1.0 + annual_return) ** (1.0 / trading_days) - 1.0


_CONFIG_KEYS = {
    "mu_r": float, "sigma_rr": float, "sigma_rr_prime": float,
    "lambda": float, "lam": float, "n_assets": int, "days_per_interval": int,
}


def load_model_config(path: str | Path) -> MarketModel:
    """Read a MarketModel from ``key=value`` lines (``#`` starts a comment)."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            continue
        values["lam" if key == "lambda" else key] = _CONFIG_KEYS[key](val)
    return MarketModel(**values)
