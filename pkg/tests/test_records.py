import json
import math

import numpy as np

from alignflock.records import BlowUpDetected, EnergyTrace, fmt, read_csv, to_jsonable, write_csv, write_json


def test_fmt_round_trips():
    for x in (0.1, 1 / 3, math.pi * 1e-300, -2.5e17):
        assert float(fmt(x)) == x


def test_csv_round_trip(tmp_path):
    rows = np.random.default_rng(0).normal(size=(5, 3))
    p = write_csv(tmp_path / "a.csv", ["a", "b", "c"], rows)
    header, data = read_csv(p)
    assert header == ["a", "b", "c"]
    assert np.array_equal(data, rows)


def test_trace_columns(tmp_path):
    tr = EnergyTrace()
    tr.append(0.0, 1.0, 2.0, 3.0)
    tr.append(0.5, 0.5, 2.0, 1.0)
    header, data = read_csv(tr.to_csv(tmp_path / "t.csv"))
    assert header == ["t", "deltaE", "D", "V"]
    assert data.shape == (2, 4)


def test_json_handles_non_finite(tmp_path):
    p = write_json(tmp_path / "x.json", {"a": np.float64(math.inf), "b": [np.nan, 1.5], "c": np.int64(3)})
    obj = json.loads(p.read_text())
    assert obj == {"a": "inf", "b": ["nan", 1.5], "c": 3}


def test_blowup_report():
    e = BlowUpDetected("gradient too large", 0.25, location=np.array([1.0]), value=9.0)
    rep = to_jsonable(e.report())
    assert rep["time"] == 0.25 and rep["location"] == [1.0] and rep["value"] == 9.0
