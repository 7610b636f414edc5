import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hs

from henon_thermo import artifacts as io
from henon_thermo.errors import SchemaError


@given(hs.floats(allow_nan=False, allow_infinity=False))
def test_floats_round_trip_exactly(x):
    assert json.loads(io.dumps({"v": x}))["v"] == x


def test_dumps_is_deterministic_and_typed():
    doc = {"b": np.float64(0.1), "a": [np.int64(3), True, None], "c": np.array([1.5, 2.0])}
    text = io.dumps(doc)
    assert text == io.dumps(dict(reversed(list(doc.items()))))
    assert '"a"' in text.splitlines()[1]
    assert "0.10000000000000001" in text and "2.0" in text


def test_non_finite_becomes_null():
    back = json.loads(io.dumps({"x": math.nan, "y": math.inf}))
    assert back == {"x": None, "y": None}


def test_envelope_and_schema_checks(tmp_path):
    p = io.write_json(tmp_path / "a.json", "thing", {"v": 1}, {"b": 1e-4})
    doc = io.read_json(p, "thing")
    assert doc["schema_version"].startswith("1.") and doc["config"] == {"b": 0.0001}
    with pytest.raises(SchemaError):
        io.read_json(p, "other")
    doc["schema_version"] = "2.0"
    (tmp_path / "b.json").write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        io.read_json(tmp_path / "b.json")


def test_csv_format(tmp_path):
    p = io.write_csv(tmp_path / "t.csv", ["k", "v"], [[1, 1234567.25], [2, float("nan")]])
    raw = open(p, "rb").read()
    assert b"\r" not in raw and raw.endswith(b"\n")
    assert raw.decode("utf-8").splitlines() == ["k,v", "1,1234567.25", "2,nan"]


def test_tree_digests_skip_timings(tmp_path):
    io.write_text(tmp_path / "x.json", "{}\n")
    io.write_text(tmp_path / "timings.json", "{}\n")
    assert list(io.tree_digests(tmp_path)) == ["x.json"]
