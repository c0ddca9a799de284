"""Test of equal expected Sharpe ratios across K portfolios (WYY test).

The statistic is

    T^2 = n (Q s)' (Q Omega Q')^{-1} (Q s)

where ``s`` holds the Sharpe ratios m1 / sqrt(m2 - m1^2) of plain daily
returns, Q is the (K-1) x K first-difference contrast, and Omega is a HAC
(Bartlett kernel) delta-method estimate of the asymptotic covariance of
sqrt(n) s. The automatic bandwidth is Andrews' AR(1) plug-in rule applied to
the per-team influence series. Critical values come either from chi^2_{K-1} or from a sign-flip
wild bootstrap that multiplies each team's weights in each interval by an
independent +-1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _kernels
from .errors import NumericError, ParameterError, ScoreError
from .market import MarketModel, ReturnPanel, _as_rng, draw_returns
from .portfolio import BaselineTheta, SubmissionPanel, kernel_seed
from .scoring import daily_plain_returns

log = logging.getLogger(__name__)

PSD_FLOOR = 1e-12


@dataclass(frozen=True)
class TestReport:
    t2: float
    dof: int
    p_asymptotic: float
    p_bootstrap: float | None = None
    n_bootstrap: int = 0
    alpha_rejections: dict = field(default_factory=dict)
    bootstrap_draws: np.ndarray | None = field(default=None, repr=False)

    __test__ = False  # not a pytest class


def newey_west_bandwidth(n_days: int) -> int:
    """Fixed-rate rule floor(4 (T/100)^(2/9)); kept for comparison runs."""
    return int(math.floor(4.0 * (n_days / 100.0) ** (2.0 / 9.0)))


def andrews_bandwidth(z: np.ndarray) -> int:
    """Andrews (1991) AR(1) plug-in Bartlett bandwidth for the columns of z (T, p).

    Returns the largest lag with nonzero weight, floor(1.1447 (alpha T)^(1/3)).
    """
    z = np.asarray(z, dtype=float)
    n = z.shape[0]
    z = z - z.mean(axis=0)
    lag = z[:-1]
    denom = (lag ** 2).sum(axis=0)
    keep = denom > 0
    if n < 3 or not keep.any():
        return 0
    rho = np.clip((z[1:, keep] * lag[:, keep]).sum(axis=0) / denom[keep], -0.97, 0.97)
    s2 = ((z[1:, keep] - rho * lag[:, keep]) ** 2).mean(axis=0)
    num = (4.0 * rho ** 2 * s2 ** 2 / ((1 - rho) ** 6 * (1 + rho) ** 2)).sum()
    den = (s2 ** 2 / (1 - rho) ** 4).sum()
    if not den > 0:
        return 0
    return int(min(math.floor(1.1447 * (num / den * n) ** (1.0 / 3.0)), n - 2))


def influence_series(ret: np.ndarray) -> np.ndarray:
    """Per-day delta-method terms a_k RET + b_k RET^2, same shape as ret."""
    ret = np.asarray(ret, dtype=float)
    m1, m2 = sharpe_moments(ret)
    a, b = sharpe_gradient(m1, m2)
    return ret * a[..., None, :] + ret ** 2 * b[..., None, :]


def sharpe_moments(ret: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and second raw moments along the day axis (-2)."""
    ret = np.asarray(ret, dtype=float)
    return ret.mean(axis=-2), (ret ** 2).mean(axis=-2)


def sharpe_plain(ret: np.ndarray) -> np.ndarray:
    """Sharpe ratio m1 / sqrt(m2 - m1^2) per column of plain daily returns (T, K)."""
    ret = np.asarray(ret, dtype=float)
    if ret.shape[-2] < 2:
        raise ScoreError("need at least two days")
    m1 = ret.mean(axis=-2)
    # centred form of m2 - m1^2; avoids cancellation on near-constant series
    var = ((ret - m1[..., None, :]) ** 2).mean(axis=-2)
    if np.any(~(var > 1e-14 * np.maximum(m1 ** 2, np.finfo(float).tiny))):
        raise ScoreError("zero variance return series")
    return m1 / np.sqrt(var)


def sharpe_gradient(m1, m2) -> tuple[np.ndarray, np.ndarray]:
    """Analytic partial derivatives of m1 / sqrt(m2 - m1^2) wrt (m1, m2)."""
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    s3 = (m2 - m1 ** 2) ** 1.5
    return m2 / s3, -0.5 * m1 / s3


def long_run_covariance(y: np.ndarray, bandwidth: int) -> np.ndarray:
    """Bartlett-kernel long-run covariance of the rows of y (..., T, p), demeaned."""
    y = np.asarray(y, dtype=float)
    n = y.shape[-2]
    if not 0 <= bandwidth < n:
        raise ParameterError(f"bandwidth {bandwidth} must lie in [0, {n})")
    y = y - y.mean(axis=-2, keepdims=True)
    yt = np.swapaxes(y, -1, -2)
    v = yt @ y / n
    for j in range(1, bandwidth + 1):
        g = yt[..., :, j:] @ y[..., :-j, :] / n
        v = v + (1.0 - j / (bandwidth + 1.0)) * (g + np.swapaxes(g, -1, -2))
    return v


def _psd_repair(omega: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(omega)
    if evals.min() >= 0:
        return omega
    k = omega.shape[-1]
    floor = PSD_FLOOR * max(float(np.trace(omega)), 0.0) / k
    log.warning("HAC covariance not PSD (min eigenvalue %.3g); flooring at %.3g",
                evals.min(), floor)
    evals = np.maximum(evals, floor)
    return (evecs * evals) @ evecs.T


def hac_omega(ret: np.ndarray, bandwidth: int | None = None, repair: bool = True) -> np.ndarray:
    """Delta-method HAC covariance of sqrt(n) * Sharpe ratios, shape (..., K, K).

    Stacks y_t = (RET_t, RET_t^2); the long-run covariance of y is mapped
    through the block-diagonal gradient, which is the same as the long-run
    covariance of the per-team influence series a_k RET + b_k RET^2.
    ``bandwidth=None`` selects it from the data with ``andrews_bandwidth``.
    """
    z = influence_series(ret)
    if bandwidth is None:
        if z.ndim != 2:
            raise ParameterError("automatic bandwidth needs a single (T, K) panel")
        bandwidth = andrews_bandwidth(z)
    omega = long_run_covariance(z, bandwidth)
    omega = 0.5 * (omega + np.swapaxes(omega, -1, -2))
    if repair and omega.ndim == 2:
        omega = _psd_repair(omega)
    return omega


def contrast(k: int) -> np.ndarray:
    """(K-1) x K first-difference matrix with rows e_j - e_{j+1}."""
    q = np.zeros((k - 1, k))
    idx = np.arange(k - 1)
    q[idx, idx] = 1.0
    q[idx, idx + 1] = -1.0
    return q


def t2_statistic(ir, omega, n_days: int) -> np.ndarray | float:
    """n (Q ir)' (Q Omega Q')^{-1} (Q ir); broadcasts over leading axes."""
    ir = np.asarray(ir, dtype=float)
    omega = np.asarray(omega, dtype=float)
    k = ir.shape[-1]
    if k < 2:
        raise ParameterError("need at least two teams")
    qi = ir[..., :-1] - ir[..., 1:]
    qo = omega[..., :-1, :] - omega[..., 1:, :]
    qoq = qo[..., :, :-1] - qo[..., :, 1:]
    try:
        x = np.linalg.solve(qoq, qi[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            "contrast covariance is singular; merge teams with identical "
            "submissions before testing"
        ) from exc
    t2 = n_days * np.sum(qi * x, axis=-1)
    if np.ndim(t2) == 0:
        if not np.isfinite(t2):
            raise NumericError("non-finite T^2; merge duplicate teams")
        return float(max(t2, 0.0))
    return np.maximum(t2, 0.0)


def flip_signs(ret: np.ndarray, days_per_interval: int, rng: np.random.Generator,
               n_boot: int) -> np.ndarray:
    """Wild-bootstrap resamples of plain returns (T, K) -> (n_boot, T, K).

    Each (interval, team) block is multiplied by an independent +-1, which
    is the same as flipping that team's whole weight vector for the interval.
    """
    n_days, k = ret.shape
    n_int = n_days // days_per_interval
    xi = rng.choice(np.array([-1.0, 1.0]), size=(n_boot, n_int, 1, k))
    flipped = ret.reshape(n_int, days_per_interval, k)[None] * xi
    return flipped.reshape(n_boot, n_days, k)


def wild_bootstrap_draws(ret: np.ndarray, days_per_interval: int, n_boot: int,
                         rng_seed, bandwidth: int | None = None,
                         chunk: int = 64) -> np.ndarray:
    """Sorted bootstrap draws of T^2 from sign-flipped plain returns (T, K).

    An automatic bandwidth is chosen once on the original sample and held
    fixed across draws.
    """
    if n_boot < 1:
        raise ParameterError("n_boot must be >= 1")
    rng = _as_rng(rng_seed)
    ret = np.asarray(ret, dtype=float)
    n_days = ret.shape[0]
    if bandwidth is None:
        bandwidth = andrews_bandwidth(influence_series(ret))
    out = []
    redrawn = 0
    remaining = n_boot
    while remaining > 0:
        b = min(chunk, remaining)
        sample = flip_signs(ret, days_per_interval, rng, b)
        m1, m2 = sharpe_moments(sample)
        ok = np.all(m2 - m1 ** 2 > 0, axis=-1)
        if not ok.all():
            redrawn += int((~ok).sum())
            sample = sample[ok]
            if sample.shape[0] == 0:
                continue
        s = sharpe_plain(sample)
        om = hac_omega(sample, bandwidth)
        out.append(t2_statistic(s, om, n_days))
        remaining -= sample.shape[0]
    if redrawn:
        log.info("wild bootstrap redrew %d degenerate resamples", redrawn)
    return np.sort(np.concatenate(out))


def wild_bootstrap_critical(weights: SubmissionPanel | np.ndarray, panel: ReturnPanel,
                            n_boot: int, rng_seed, bandwidth: int | None = None) -> np.ndarray:
    """Bootstrap distribution of T^2 for submitted weights against a return panel."""
    ret = daily_plain_returns(weights, panel)
    return wild_bootstrap_draws(ret, panel.days_per_interval, n_boot, rng_seed, bandwidth)


def wyy_test(ret: np.ndarray, days_per_interval: int, n_boot: int = 0, rng_seed=None,
             alphas=(0.01, 0.05, 0.1), bandwidth: int | None = None) -> TestReport:
    """Full test on plain daily returns (T, K).

    With ``n_boot > 0`` rejections use bootstrap quantiles, otherwise the
    chi^2 quantiles.
    """
    ret = np.asarray(ret, dtype=float)
    n_days, k = ret.shape
    s = sharpe_plain(ret)
    if bandwidth is None:
        bandwidth = andrews_bandwidth(influence_series(ret))
    om = hac_omega(ret, bandwidth)
    t2 = t2_statistic(s, om, n_days)
    dof = k - 1
    p_asy = float(stats.chi2.sf(t2, dof))
    if n_boot > 0:
        draws = wild_bootstrap_draws(ret, days_per_interval, n_boot, rng_seed, bandwidth)
        p_boot = float(np.mean(draws >= t2))
        rej = {a: bool(t2 > np.quantile(draws, 1 - a)) for a in alphas}
        return TestReport(t2, dof, p_asy, p_boot, n_boot, rej, draws)
    rej = {a: bool(t2 > stats.chi2.ppf(1 - a, dof)) for a in alphas}
    return TestReport(t2, dof, p_asy, None, 0, rej)


def identical_team_groups(weights: SubmissionPanel | np.ndarray) -> list[list[int]]:
    """Groups of teams whose weight arrays are bitwise identical (NaNs equal)."""
    w = weights.weights if isinstance(weights, SubmissionPanel) else np.asarray(weights)
    flat = np.ascontiguousarray(np.nan_to_num(w.reshape(w.shape[0], -1), nan=np.inf))
    groups: dict[bytes, list[int]] = {}
    for k in range(flat.shape[0]):
        groups.setdefault(flat[k].tobytes(), []).append(k)
    return list(groups.values())


def merge_identical_teams(weights: SubmissionPanel) -> SubmissionPanel:
    """Keep one representative of every group of identical submissions."""
    keep = sorted(g[0] for g in identical_team_groups(weights))
    dropped = weights.n_teams - len(keep)
    if dropped:
        log.info("merged %d duplicate team submissions", dropped)
    return weights.subset(keep)


def simulate_null_returns(model: MarketModel, theta: BaselineTheta, n_teams: int,
                          n_intervals: int, n_reps: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Plain daily returns of baseline teams, shape (n_reps, T, K)."""
    d = model.days_per_interval
    r = draw_returns(model, (n_reps, model.n_assets, n_intervals * d), rng)
    ret = _kernels.subset_daily_returns(
        r, d, np.full(n_teams, theta.n_plus), np.full(n_teams, theta.n_minus),
        kernel_seed(rng))
    return np.swapaxes(ret, 1, 2)


def level_study(k_values, n_reps: int, alphas, rng_seed, model: MarketModel | None = None,
                theta: BaselineTheta | None = None, n_boot: int = 0,
                n_intervals: int = 12, bandwidth: int | None = None) -> list[dict]:
    """Null rejection rates of the test under the stylized model.

    Returns rows ``{"K", "alpha", "method", "rate", "n_reps"}`` with method
    "asymptotic" and, when ``n_boot > 0``, "bootstrap".
    """
    model = model or MarketModel()
    theta = theta or BaselineTheta(38, 29, 33)
    rng = _as_rng(rng_seed)
    rows = []
    for k in k_values:
        rej_asy = np.zeros((n_reps, len(alphas)), dtype=bool)
        rej_wb = np.zeros((n_reps, len(alphas)), dtype=bool)
        for rep in range(n_reps):
            ret = simulate_null_returns(model, theta, k, n_intervals, 1, rng)[0]
            boot_seed = rng.integers(2**63 - 1) if n_boot else None
            rep_report = wyy_test(ret, model.days_per_interval, n_boot, boot_seed,
                                  alphas, bandwidth)
            crit = stats.chi2.ppf(1 - np.asarray(alphas), k - 1)
            rej_asy[rep] = rep_report.t2 > crit
            if n_boot:
                rej_wb[rep] = [rep_report.alpha_rejections[a] for a in alphas]
        for j, a in enumerate(alphas):
            rows.append({"K": k, "alpha": a, "method": "asymptotic",
                         "rate": float(rej_asy[:, j].mean()), "n_reps": n_reps})
            if n_boot:
                rows.append({"K": k, "alpha": a, "method": "bootstrap",
                             "rate": float(rej_wb[:, j].mean()), "n_reps": n_reps})
    return rows
