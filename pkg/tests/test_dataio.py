import logging

import numpy as np
import pytest

from m6arena.dataio import (PriceData, fmt, ingest_prices, ingest_submissions,
                            merge_duplicate_teams, prices_from_returns, write_prices,
                            write_submissions, write_table)
from m6arena.errors import IngestionError
from m6arena.portfolio import SubmissionPanel, sample_baseline_panel


def _write(path, text):
    path.write_text(text)
    return path


def test_two_day_return(tmp_path):
    f = _write(tmp_path / "p.csv", "date,asset_id,close\n2022-03-04,ABC,100\n2022-03-07,ABC,101\n")
    data = ingest_prices(f)
    assert data.returns.shape == (1, 1)
    assert data.returns[0, 0] == pytest.approx(0.01, rel=1e-12)


@pytest.mark.parametrize("body,needle", [
    ("d2,A,1\nd1,A,1\n", "row 3"),
    ("d1,A,0\n", "row 2"),
    ("d1,A,-3\n", "nonpositive"),
    ("d1,A,1\nd1,A,2\n", "duplicate"),
    ("d1,A,1\nd1,B,1\nd2,A,1\n", "no price"),
    ("d1,A\n", "row 2"),
    ("d1,A,abc\n", "bad close"),
])
def test_price_errors(tmp_path, body, needle):
    f = _write(tmp_path / "p.csv", "date,asset_id,close\n" + body)
    with pytest.raises(IngestionError, match=needle):
        ingest_prices(f)


def test_price_header_required(tmp_path):
    f = _write(tmp_path / "p.csv", "day,ticker,px\nd1,A,1\n")
    with pytest.raises(IngestionError, match="header"):
        ingest_prices(f)


def test_price_round_trip_is_exact(tmp_path, year_panel):
    data = prices_from_returns(year_panel.returns[:7, :40])
    write_prices(data, tmp_path / "p.csv")
    back = ingest_prices(tmp_path / "p.csv")
    assert back.asset_ids == data.asset_ids and back.dates == data.dates
    assert np.array_equal(back.close, data.close)
    assert np.array_equal(back.panel(20).returns, data.panel(20).returns)


def test_panel_needs_whole_intervals():
    data = PriceData(("a", "b", "c"), ("X",), np.array([[1.0, 1.1, 1.2]]))
    with pytest.raises(IngestionError):
        data.panel(20)


def _subs(tmp_path, rows):
    text = "team_id,interval,asset_id,weight\n" + "".join(f"{r}\n" for r in rows)
    return _write(tmp_path / "s.csv", text)


def test_carry_forward(tmp_path):
    f = _subs(tmp_path, ["T1,1,A,0.3", "T1,1,B,-0.2", "T2,3,A,0.5"])
    panel, violations = ingest_submissions(f, n_intervals=4)
    assert not violations
    assert panel.team_ids == ("T1", "T2") and panel.asset_ids == ("A", "B")
    assert np.all(panel.weights[0] == [0.3, -0.2])
    assert np.isnan(panel.weights[1, :2]).all()
    assert np.all(panel.weights[1, 2:] == [0.5, 0.0])


def test_gross_violations(tmp_path, caplog):
    f = _subs(tmp_path, ["T1,1,A,0.05", "T1,1,B,0.05", "T1,2,A,0.5"])
    with caplog.at_level(logging.WARNING):
        _, violations = ingest_submissions(f, n_intervals=2)
    assert [(v.team_id, v.interval) for v in violations] == [("T1", 1)]
    assert violations[0].gross == pytest.approx(0.1)
    assert "gross exposure" in caplog.text
    with pytest.raises(IngestionError, match="violations"):
        ingest_submissions(f, n_intervals=2, strict=True)


@pytest.mark.parametrize("row,needle", [
    ("T1,13,A,0.3", "outside"),
    ("T1,x,A,0.3", "bad interval"),
    ("T1,1,Z,0.3", "unknown asset"),
    ("T1,1,A,nan", "non-finite"),
])
def test_submission_errors(tmp_path, row, needle):
    f = _subs(tmp_path, [row])
    with pytest.raises(IngestionError, match=needle):
        ingest_submissions(f, asset_ids=("A", "B"))


def test_duplicate_submission_row(tmp_path):
    f = _subs(tmp_path, ["T1,1,A,0.3", "T1,1,A,0.4"])
    with pytest.raises(IngestionError, match="row 3"):
        ingest_submissions(f)


def test_submission_round_trip(tmp_path, theta):
    w = sample_baseline_panel(theta, 4, 12, 1)
    w[2, :5] = np.nan
    w[3, 6:] = w[3, 5]
    panel = SubmissionPanel(w, ("a", "b", "c", "d"), tuple(f"A{i:03d}" for i in range(100)))
    write_submissions(panel, tmp_path / "s.csv")
    back, violations = ingest_submissions(tmp_path / "s.csv", 12, panel.asset_ids)
    assert not violations
    assert np.array_equal(back.weights, panel.weights, equal_nan=True)


def test_dummy_copies_merged(theta):
    dummy = np.full((12, 100), 0.01)
    w = np.concatenate([np.tile(dummy, (14, 1, 1)), sample_baseline_panel(theta, 5, 12, 2)])
    panel = SubmissionPanel(w, tuple(f"T{k}" for k in range(19)))
    merged, groups = merge_duplicate_teams(panel)
    assert merged.n_teams == 6
    assert groups == [[f"T{k}" for k in range(14)]]


def test_fmt():
    assert fmt(1 / 3) == "0.333333"
    assert fmt(123456789.0) == "1.23457e+08"
    assert fmt(float("nan")) == "nan"
    assert fmt(np.int64(7)) == "7"
    assert fmt(True) == "true"
    assert fmt("x") == "x"


def test_write_table_atomic(tmp_path):
    path = write_table(tmp_path / "sub" / "t.csv", [{"a": 1, "b": 0.5}, {"b": 2.0, "c": "z"}])
    assert path.read_text() == "a,b,c\n1,0.5,\n,2,z\n"
    assert [p.name for p in path.parent.iterdir()] == ["t.csv"]

    class Boom(dict):
        def get(self, *a):
            raise RuntimeError("disk full")

    with pytest.raises(RuntimeError):
        write_table(path, [Boom(a=1)], ["a"])
    assert path.read_text() == "a,b,c\n1,0.5,\n,2,z\n"
    assert [p.name for p in path.parent.iterdir()] == ["t.csv"]
