"""Pipeline stages behind the command-line interface.

Each stage writes its CSV outputs into the run directory and returns the
list of files written. Random streams are derived from the master seed and
the stage name, so a stage produces the same output whether it runs alone or
as part of ``reproduce_all``.
"""

from __future__ import annotations

import hashlib
import logging
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, arena, dp_policy, empirics, msm, sharpe_test
from .dataio import (PriceData, ingest_prices, ingest_submissions, merge_duplicate_teams,
                     write_table)
from .errors import ConfigurationError, M6ArenaError
from .market import MarketModel, ReturnPanel, daily_mean_from_annual, fit_covariance_cs, \
    load_model_config, sample_returns
from .portfolio import BaselineTheta, SubmissionPanel
from .scoring import ScoreBoard, daily_plain_returns, daily_returns

log = logging.getLogger(__name__)

PAPER_THETA = BaselineTheta(38, 29, 33)
SELF_TEST_THETA = BaselineTheta(50, 20, 30)
N_TEAMS = 163
N_INTERVALS = 12


@dataclass(frozen=True)
class Scale:
    arena_stylized: int
    arena_bootstrap: int
    dp_paths: int
    level_reps: int
    level_boot: int
    msm_sim: int
    leaderboard_sims: int
    msm_pool: int = msm.DEFAULT_POOL


FULL = Scale(100_000, 10_000, 10_000, 1_000, 1_000, 1_000, 10_000)
DESK = Scale(20_000, 5_000, 10_000, 200, 200, 1_000, 1_000)


@dataclass(frozen=True)
class RunConfig:
    seed: int
    out: Path
    prices: Path | None = None
    submissions: Path | None = None
    model: MarketModel = field(default_factory=MarketModel)
    alphas: tuple = (0.01, 0.05, 0.1)
    qs: tuple = (1, 20)
    scale: Scale = DESK
    reps: int | None = None
    strict: bool = False
    annual_return: float | None = None

    def __post_init__(self):
        if self.seed is None:
            raise ConfigurationError("a seed is required")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")


def stage_seed(seed: int, stage: str) -> int:
    ss = np.random.SeedSequence([int(seed), zlib.crc32(stage.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass
class Data:
    prices: PriceData | None = None
    panel: ReturnPanel | None = None
    submissions: SubmissionPanel | None = None
    merged_groups: list = field(default_factory=list)

    @property
    def has_prices(self) -> bool:
        return self.panel is not None

    @property
    def has_submissions(self) -> bool:
        return self.has_prices and self.submissions is not None


def _present(path, label: str):
    if path is not None and not Path(path).exists():
        log.warning("%s file %s not found; data-dependent outputs are skipped", label, path)
        return None
    return path


def load_data(cfg: RunConfig) -> Data:
    """Ingest whatever inputs exist; a missing file counts as not supplied."""
    cfg = replace(cfg, prices=_present(cfg.prices, "prices"),
                  submissions=_present(cfg.submissions, "submissions"))
    data = Data()
    if cfg.prices is not None:
        data.prices = ingest_prices(cfg.prices)
        data.panel = data.prices.panel(cfg.model.days_per_interval)
    if cfg.submissions is not None:
        if data.panel is None:
            raise ConfigurationError("submissions need a price file")
        sub, _ = ingest_submissions(cfg.submissions, data.panel.n_intervals,
                                    data.panel.asset_ids, cfg.strict)
        data.submissions, data.merged_groups = merge_duplicate_teams(sub)
    return data


def _board(data: Data) -> ScoreBoard:
    return ScoreBoard.build(daily_returns(data.submissions, data.panel),
                            data.panel.days_per_interval, data.submissions.team_ids)


def _interval_ir(board: ScoreBoard) -> np.ndarray:
    return np.stack([board.ir[(m, m)] for m in range(board.n_intervals)], axis=1)


def _synthetic_panel(cfg: RunConfig, stage: str) -> ReturnPanel:
    d = cfg.model.days_per_interval
    return sample_returns(cfg.model.with_lambda(0.0), N_INTERVALS * d, stage_seed(cfg.seed, stage))


# ---------------------------------------------------------------------------
# stages


def calibrate_market(cfg: RunConfig, data: Data) -> list[Path]:
    if not data.has_prices:
        raise ConfigurationError("calibrate-market needs --prices")
    s_rr, s_rr_p = fit_covariance_cs(data.panel)
    sample_mean = float(data.panel.returns.mean())
    mu = daily_mean_from_annual(cfg.annual_return) if cfg.annual_return is not None \
        else sample_mean
    row = {"mu_r": mu, "sample_mean": sample_mean, "sigma_rr": s_rr,
           "sigma_rr_prime": s_rr_p, "n_assets": data.panel.n_assets,
           "n_days": data.panel.n_days}
    return [write_table(cfg.out / "market.csv", [row])]


def calibrate_theta(cfg: RunConfig, data: Data) -> list[Path]:
    n_sim = cfg.scale.msm_sim
    seed = stage_seed(cfg.seed, "calibrate-theta")
    if data.has_submissions:
        panel = data.panel
        target = msm.MomentTarget.from_leaderboard(_interval_ir(_board(data)))
        name = "theta.csv"
        truth = None
    else:
        panel = _synthetic_panel(cfg, "calibrate-theta/panel")
        truth = SELF_TEST_THETA
        boards = arena.simulate_leaderboards(panel, truth, N_TEAMS, 1,
                                             stage_seed(cfg.seed, "calibrate-theta/truth"))
        target = msm.MomentTarget.from_leaderboard(boards[0, :, :-1])
        name = "theta_selftest.csv"
    res = msm.estimate_theta(target, panel, n_sim, seed, cfg.scale.msm_pool)
    row = {"n_plus": res.theta.n_plus, "n_zero": res.theta.n_zero,
           "n_minus": res.theta.n_minus, "objective": res.objective, "n_sim": n_sim}
    if truth is not None:
        row.update({"true_n_plus": truth.n_plus, "true_n_zero": truth.n_zero,
                    "true_n_minus": truth.n_minus})
    surface = [{"n_plus": int(c[0]), "n_zero": int(c[1]), "n_minus": int(c[2]), "objective": v}
               for c, v in zip(res.candidates, res.surface)]
    return [write_table(cfg.out / name, [row]),
            write_table(cfg.out / name.replace("theta", "msm_surface"), surface)]


def test_sharpe(cfg: RunConfig, data: Data) -> list[Path]:
    out = []
    sc = cfg.scale
    rows = sharpe_test.level_study([N_TEAMS], sc.level_reps, cfg.alphas,
                                   stage_seed(cfg.seed, "test-sharpe/level163"), cfg.model,
                                   PAPER_THETA)
    rows += sharpe_test.level_study([5], sc.level_reps, cfg.alphas,
                                    stage_seed(cfg.seed, "test-sharpe/level5"), cfg.model,
                                    PAPER_THETA, n_boot=sc.level_boot)
    out.append(write_table(cfg.out / "sharpe_level.csv", rows,
                           ["K", "alpha", "method", "rate", "n_reps"]))
    if data.has_submissions:
        ret = daily_plain_returns(data.submissions, data.panel)
        active = np.isfinite(ret).all(axis=0)
        rep = sharpe_test.wyy_test(ret[:, active], data.panel.days_per_interval,
                                   sc.level_boot, stage_seed(cfg.seed, "test-sharpe/data"),
                                   cfg.alphas)
        row = {"t2": rep.t2, "dof": rep.dof, "p_asymptotic": rep.p_asymptotic,
               "p_bootstrap": rep.p_bootstrap, "n_boot": rep.n_bootstrap,
               "n_teams": int(active.sum()), "n_merged_groups": len(data.merged_groups)}
        out.append(write_table(cfg.out / "sharpe_test.csv", [row]))
    return out


def solve_policies(cfg: RunConfig) -> dict[int, dp_policy.RankPolicy]:
    kernels = dp_policy.build_kernels(cfg.model.with_lambda(0.0), PAPER_THETA, cfg.qs,
                                      cfg.scale.dp_paths, stage_seed(cfg.seed, "solve-policy"),
                                      N_TEAMS, N_INTERVALS)
    return {q: dp_policy.solve(k) for q, k in kernels.items()}


def write_policies(cfg: RunConfig, policies) -> list[Path]:
    out = []
    for q, pol in policies.items():
        rows = [{"m": m, "delta": dl, "beta_plus": b, "value": v} for m, dl, b, v in pol.rows()]
        out.append(write_table(cfg.out / f"policy_q{q}.csv", rows))
    return out


def solve_policy(cfg: RunConfig, data: Data, policies=None) -> list[Path]:
    return write_policies(cfg, policies or solve_policies(cfg))


def _histogram_rows(reports: dict, scoring: str) -> list[dict]:
    rows = []
    names = list(reports)
    k = len(next(iter(reports.values())).rank_histogram)
    for r in range(k):
        row = {"scoring": scoring, "rank": r + 1}
        row.update({n: int(reports[n].rank_histogram[r]) for n in names})
        rows.append(row)
    return rows


def run_arena(cfg: RunConfig, data: Data, policies=None) -> list[Path]:
    policies = policies or solve_policies(cfg)
    model = cfg.model.with_lambda(0.0)
    focals = [arena.baseline(), arena.tangency(0.0), arena.tangency(0.0003)]
    focals += [arena.rank_opt(policies[q]) for q in sorted(policies)]
    n = cfg.reps or cfg.scale.arena_stylized
    rows, hist = [], []
    for scoring in arena.SCORING:
        rep = arena.simulate_stylized(model, PAPER_THETA, focals, N_TEAMS, n,
                                      stage_seed(cfg.seed, "run-arena/stylized"),
                                      N_INTERVALS, scoring=scoring)
        rows += [{"scoring": scoring, "n_reps": r.n_reps, **r.row()} for r in rep.values()]
        hist += _histogram_rows(rep, scoring)
    out = [write_table(cfg.out / "arena_stylized.csv", rows),
           write_table(cfg.out / "arena_stylized_hist.csv", hist)]
    if data.has_submissions:
        focals = [arena.bootstrapped()] + [arena.rank_opt(policies[q]) for q in sorted(policies)]
        nb = cfg.reps or cfg.scale.arena_bootstrap
        rows, hist = [], []
        for scoring in arena.SCORING:
            rep = arena.simulate_bootstrap(data.panel, data.submissions, focals, N_TEAMS, nb,
                                           stage_seed(cfg.seed, "run-arena/bootstrap"),
                                           scoring=scoring)
            rows += [{"scoring": scoring, "n_reps": r.n_reps, **r.row()} for r in rep.values()]
            hist += _histogram_rows(rep, scoring)
        out += [write_table(cfg.out / "arena_bootstrap.csv", rows),
                write_table(cfg.out / "arena_bootstrap_hist.csv", hist)]
    return out


def leaderboard(cfg: RunConfig, data: Data) -> list[Path]:
    """Observed vs simulated leaderboard statistics; synthetic returns without data."""
    if data.has_prices:
        panel, name = data.panel, "leaderboard_stats.csv"
    else:
        panel, name = _synthetic_panel(cfg, "leaderboard/panel"), "leaderboard_stats_synthetic.csv"
    boards = arena.simulate_leaderboards(panel, PAPER_THETA, N_TEAMS,
                                         cfg.scale.leaderboard_sims,
                                         stage_seed(cfg.seed, "leaderboard"))
    observed = None
    if data.has_submissions:
        board = _board(data)
        observed = np.concatenate([_interval_ir(board),
                                   board.ir[(0, board.n_intervals - 1)][:, None]], axis=1)
        observed = observed[np.isfinite(observed).all(axis=1)]
    return [write_table(cfg.out / name, arena.leaderboard_stats(boards, observed))]


def empirics_stage(cfg: RunConfig, data: Data) -> list[Path]:
    if not data.has_submissions:
        raise ConfigurationError("empirics needs --prices and --submissions")
    board = _board(data)
    ex = empirics.team_exposure(data.submissions, data.panel, board)
    windows = empirics.period_windows(data.panel.n_intervals)
    bench = empirics.equal_weight_ir(data.panel, windows)
    beta_m = [{"m": m + 1, "mean_beta_plus": v}
              for m, v in enumerate(empirics.mean_beta_by_interval(ex))]
    by_rank = []
    g_bar = empirics.quiet_nanmean(ex.gamma)
    for label, vals in (("beta_bar_plus", ex.beta_bar_plus["global"]), ("gamma", g_bar)):
        by_rank += [{"series": label, **r}
                    for r in empirics.exposure_by_rank(vals, ex.rank_by_period["global"])]
    return [
        write_table(cfg.out / "beta_by_interval.csv", beta_m),
        write_table(cfg.out / "rank_change_profile.csv", empirics.rank_change_profile(board, ex)),
        write_table(cfg.out / "median_split.csv", empirics.median_split_table(ex, (5, 10), bench)),
        write_table(cfg.out / "exposure_by_rank.csv", by_rank),
    ]


STAGES = {
    "calibrate-market": (calibrate_market, "prices"),
    "calibrate-theta": (calibrate_theta, None),
    "test-sharpe": (test_sharpe, None),
    "solve-policy": (solve_policy, None),
    "run-arena": (run_arena, None),
    "leaderboard": (leaderboard, None),
    "empirics": (empirics_stage, "submissions"),
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def reproduce_all(cfg: RunConfig) -> Path:
    """Run every stage; data-dependent stages are skipped without data.

    Writes ``manifest.csv`` (stage, status, file, sha256) and
    ``run_info.csv`` (seed, versions). A failing stage stops the run after
    the partial manifest is written.
    """
    import numba
    import scipy

    data = load_data(cfg)
    manifest = []
    policies = None
    failure = None
    for stage, (fn, needs) in STAGES.items():
        if (needs == "prices" and not data.has_prices) or \
                (needs == "submissions" and not data.has_submissions):
            manifest.append({"stage": stage, "status": "skipped (no data)", "file": "", "sha256": ""})
            continue
        log.info("stage %s", stage)
        try:
            if stage == "solve-policy":
                policies = solve_policies(cfg)
                files = write_policies(cfg, policies)
            elif stage == "run-arena":
                files = run_arena(cfg, data, policies)
            else:
                files = fn(cfg, data)
        except M6ArenaError as exc:
            manifest.append({"stage": stage, "status": f"failed: {exc}", "file": "", "sha256": ""})
            failure = (stage, exc)
            break
        for f in files:
            manifest.append({"stage": stage, "status": "ok", "file": f.name, "sha256": _sha256(f)})
        if stage == "test-sharpe" and not data.has_submissions:
            manifest.append({"stage": stage, "status": "skipped (no data): test on submissions",
                             "file": "", "sha256": ""})
        if stage == "run-arena" and not data.has_submissions:
            manifest.append({"stage": stage, "status": "skipped (no data): bootstrap arena",
                             "file": "", "sha256": ""})
    info = [{"key": k, "value": v} for k, v in (
        ("seed", cfg.seed), ("m6arena", __version__), ("numpy", np.__version__),
        ("scipy", scipy.__version__), ("numba", numba.__version__),
        ("prices", cfg.prices.name if cfg.prices else ""),
        ("submissions", cfg.submissions.name if cfg.submissions else ""),
        ("scale", "desk" if cfg.scale == DESK else ("full" if cfg.scale == FULL else "custom")),
        ("reps", cfg.reps or ""),
    )]
    write_table(cfg.out / "run_info.csv", info, ["key", "value"])
    path = write_table(cfg.out / "manifest.csv", manifest, ["stage", "status", "file", "sha256"])
    if failure:
        stage, exc = failure
        raise M6ArenaError(f"stage {stage} failed: {exc}") from exc
    return path


def with_model_config(cfg: RunConfig, path) -> RunConfig:
    return replace(cfg, model=load_model_config(path))
