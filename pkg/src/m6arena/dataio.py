"""CSV ingestion and export.

Input formats (header row required):

* prices: ``date,asset_id,close`` sorted by date, one close per asset and date;
* submissions: ``team_id,interval,asset_id,weight`` with one-based intervals.

Report tables are written with numbers at 6 significant digits. Data files
(prices, weights) are written with full float precision so that a written
file re-ingests to an identical array. All writes go to a temporary file in
the target directory that is then renamed into place.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IngestionError
from .market import DAYS_PER_INTERVAL, ReturnPanel
from .portfolio import GROSS_MAX, GROSS_MIN, SubmissionPanel
from .sharpe_test import identical_team_groups

log = logging.getLogger(__name__)

PRICE_HEADER = ("date", "asset_id", "close")
SUBMISSION_HEADER = ("team_id", "interval", "asset_id", "weight")


@dataclass(frozen=True)
class PriceData:
    dates: tuple
    asset_ids: tuple
    close: np.ndarray  # (I, D)

    @property
    def returns(self) -> np.ndarray:
        return self.close[:, 1:] / self.close[:, :-1] - 1.0

    def panel(self, days_per_interval: int = DAYS_PER_INTERVAL) -> ReturnPanel:
        r = self.returns
        if r.shape[1] == 0 or r.shape[1] % days_per_interval:
            raise IngestionError(
                f"{r.shape[1]} daily returns do not split into intervals of {days_per_interval}")
        return ReturnPanel(r, days_per_interval, asset_ids=self.asset_ids,
                           dates=self.dates[1:])


@dataclass(frozen=True)
class Violation:
    team_id: str
    interval: int
    gross: float


def _reader(path, header):
    f = open(path, newline="")
    rd = csv.reader(f)
    first = next(rd, None)
    if first is None or tuple(c.strip() for c in first) != header:
        f.close()
        raise IngestionError(f"{path}: expected header {','.join(header)}, got {first}")
    return f, rd


def ingest_prices(path) -> PriceData:
    """Read daily closes; errors carry the CSV row number (header is row 1)."""
    f, rd = _reader(path, PRICE_HEADER)
    series: dict[str, dict[str, float]] = {}
    first_row: dict[str, int] = {}
    dates: list[str] = []
    with f:
        for row_no, row in enumerate(rd, start=2):
            if len(row) != 3:
                raise IngestionError(f"{path}: row {row_no}: expected 3 fields")
            date, asset, raw = (c.strip() for c in row)
            try:
                close = float(raw)
            except ValueError:
                raise IngestionError(f"{path}: row {row_no}: bad close {raw!r}") from None
            if not (close > 0 and math.isfinite(close)):
                raise IngestionError(f"{path}: row {row_no}: nonpositive price {raw}")
            if dates and date < dates[-1]:
                raise IngestionError(
                    f"{path}: row {row_no}: date {date} precedes {dates[-1]}; dates must be sorted")
            if not dates or date != dates[-1]:
                dates.append(date)
            s = series.setdefault(asset, {})
            first_row.setdefault(asset, row_no)
            if date in s:
                raise IngestionError(f"{path}: row {row_no}: duplicate price for {asset} on {date}")
            s[date] = close
    if len(dates) < 2:
        raise IngestionError(f"{path}: need at least two dates")
    assets = tuple(sorted(series))
    close = np.empty((len(assets), len(dates)))
    for i, a in enumerate(assets):
        s = series[a]
        missing = [d for d in dates if d not in s]
        if missing:
            raise IngestionError(
                f"{path}: asset {a} (first seen row {first_row[a]}) has no price on {missing[0]}")
        close[i] = [s[d] for d in dates]
    close.setflags(write=False)
    return PriceData(tuple(dates), assets, close)


def ingest_submissions(path, n_intervals: int = 12, asset_ids=None,
                       strict: bool = False) -> tuple[SubmissionPanel, list[Violation]]:
    """Read submissions, carry weights forward and check the gross-exposure rule.

    Intervals before a team's first submission stay NaN (inactive). Assets a
    team did not mention in a submission get weight zero. Gross exposures
    outside [0.25, 1] are returned as violations and logged; with
    ``strict=True`` they raise.
    """
    f, rd = _reader(path, SUBMISSION_HEADER)
    subs: dict[str, dict[int, dict[str, float]]] = {}
    seen_assets: set[str] = set()
    with f:
        for row_no, row in enumerate(rd, start=2):
            if len(row) != 4:
                raise IngestionError(f"{path}: row {row_no}: expected 4 fields")
            team, m_raw, asset, w_raw = (c.strip() for c in row)
            try:
                m = int(m_raw)
                w = float(w_raw)
            except ValueError:
                raise IngestionError(f"{path}: row {row_no}: bad interval or weight") from None
            if not 1 <= m <= n_intervals:
                raise IngestionError(f"{path}: row {row_no}: interval {m} outside 1..{n_intervals}")
            if not math.isfinite(w):
                raise IngestionError(f"{path}: row {row_no}: non-finite weight")
            cell = subs.setdefault(team, {}).setdefault(m, {})
            if asset in cell:
                raise IngestionError(
                    f"{path}: row {row_no}: duplicate weight for team {team}, interval {m}, asset {asset}")
            cell[asset] = w
            seen_assets.add(asset)
    if not subs:
        raise IngestionError(f"{path}: no submissions")
    if asset_ids is None:
        asset_ids = tuple(sorted(seen_assets))
    asset_ids = tuple(str(a) for a in asset_ids)
    unknown = seen_assets.difference(asset_ids)
    if unknown:
        raise IngestionError(f"{path}: unknown asset ids {sorted(unknown)[:5]}")
    col = {a: i for i, a in enumerate(asset_ids)}
    teams = tuple(sorted(subs))
    weights = np.full((len(teams), n_intervals, len(asset_ids)), np.nan)
    violations = []
    for k, team in enumerate(teams):
        current = None
        for m in range(1, n_intervals + 1):
            if m in subs[team]:
                current = np.zeros(len(asset_ids))
                for a, w in subs[team][m].items():
                    current[col[a]] = w
                gross = float(np.abs(current).sum())
                if not GROSS_MIN - 1e-12 <= gross <= GROSS_MAX + 1e-12:
                    violations.append(Violation(team, m, gross))
            if current is not None:
                weights[k, m - 1] = current
    for v in violations:
        log.warning("team %s interval %d: gross exposure %.6g outside [%g, %g]",
                    v.team_id, v.interval, v.gross, GROSS_MIN, GROSS_MAX)
    if strict and violations:
        v = violations[0]
        raise IngestionError(
            f"{len(violations)} gross-exposure violations, first: team {v.team_id} "
            f"interval {v.interval} gross {v.gross:.6g}")
    return SubmissionPanel(weights, teams, asset_ids), violations


def merge_duplicate_teams(panel: SubmissionPanel) -> tuple[SubmissionPanel, list[list[str]]]:
    """Count teams with identical submissions once; returns the merged groups."""
    groups = identical_team_groups(panel)
    keep = sorted(g[0] for g in groups)
    merged = [[panel.team_ids[k] for k in g] for g in groups if len(g) > 1]
    if merged:
        log.info("merged %d groups of identical teams", len(merged))
    return panel.subset(keep), merged


# ---------------------------------------------------------------------------
# writers


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return f"{x:.6g}"
    return str(x)


def _atomic_write(path: Path, write_rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            write_rows(csv.writer(f, lineterminator="\n"))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_table(path, rows, columns=None) -> Path:
    """Write dict rows with a header; numbers at 6 significant digits."""
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(c for c in r if c not in columns)

    def _w(w):
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c, "")) for c in columns])

    return _atomic_write(path, _w)


def write_prices(data: PriceData, path) -> Path:
    def _w(w):
        w.writerow(PRICE_HEADER)
        for t, d in enumerate(data.dates):
            for i, a in enumerate(data.asset_ids):
                w.writerow([d, a, repr(float(data.close[i, t]))])

    return _atomic_write(path, _w)


def write_submissions(panel: SubmissionPanel, path, only_changes: bool = True) -> Path:
    """Write weights in ingestion format; by default only intervals where the
    weights differ from the previous interval (the carry-forward inverse)."""
    w_all = panel.weights

    def _w(w):
        w.writerow(SUBMISSION_HEADER)
        for k, team in enumerate(panel.team_ids):
            prev = None
            for m in range(panel.n_intervals):
                cur = w_all[k, m]
                if np.isnan(cur).any():
                    continue
                if only_changes and prev is not None and np.array_equal(cur, prev):
                    continue
                for i, a in enumerate(panel.asset_ids):
                    w.writerow([team, m + 1, a, repr(float(cur[i]))])
                prev = cur

    return _atomic_write(path, _w)


def prices_from_returns(returns: np.ndarray, dates=None, asset_ids=None,
                        start: float = 100.0) -> PriceData:
    """Synthetic closes that compound the given simple returns from ``start``."""
    r = np.asarray(returns, dtype=float)
    close = start * np.concatenate([np.ones((r.shape[0], 1)), np.cumprod(1.0 + r, axis=1)], axis=1)
    if dates is None:
        dates = tuple(f"d{t:05d}" for t in range(close.shape[1]))
    if asset_ids is None:
        asset_ids = tuple(f"A{i:03d}" for i in range(r.shape[0]))
    return PriceData(tuple(dates), tuple(asset_ids), close)
