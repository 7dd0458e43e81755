import json
from fractions import Fraction

import mpmath as mp
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sigmalab import records
from sigmalab.dirichlet import quadratic_character
from sigmalab.recovery import DemoReport


def test_header_and_records(tmp_path):
    path = tmp_path / "r.jsonl"
    w = records.RecordWriter(path, "test")
    w.write(records.make_record("a", x=1))
    w.write(records.make_record("b", y=[1, 2]))
    lines = path.read_text().splitlines()
    head = json.loads(lines[0])
    assert head["type"] == "header" and "created" in head and head["schema_version"] == 1
    recs = records.read_records(path)
    assert [r["kind"] for r in recs] == ["a", "b"]
    assert len(records.read_records(path, include_headers=True)) == 3


def test_values_serialize():
    with mp.workprec(128):
        rec = records.make_record(
            "v",
            f=mp.mpf(1) / 3,
            z=mp.mpc(1, -2),
            q=Fraction(-3, 7),
            chi=quadratic_character(5),
            rep=DemoReport(15, 4, "exact-oracle", True, (5, 3), 0.0),
        )
    assert rec["f"].startswith("0.3333333333333333333333333333333333333")
    assert rec["z"] == {"re": records.to_jsonable(mp.mpf(1)), "im": records.to_jsonable(mp.mpf(-2))}
    assert rec["q"] == "-3/7"
    assert rec["chi"]["exponents"] == [None, 0, 1, 1, 0]
    assert rec["rep"]["factors"] == [5, 3]


json_values = st.recursive(
    st.none() | st.booleans() | st.integers() | st.text() | st.floats(allow_nan=False, allow_infinity=False),
    lambda children: st.lists(children, max_size=4) | st.dictionaries(st.text(max_size=5), children, max_size=4),
    max_leaves=12,
)


@given(st.dictionaries(st.text(min_size=1, max_size=6).filter(lambda k: k not in ("type", "schema_version", "kind")), json_values, max_size=5))
def test_round_trip(fields):
    rec = records.make_record("prop", **fields)
    line = records.dumps(rec)
    parsed = records.loads(line)
    assert parsed == rec
    assert records.dumps(parsed) == line


def test_rejects_unknown_schema():
    with pytest.raises(records.SchemaError):
        records.loads('{"type":"record","schema_version":99,"kind":"x"}')
    with pytest.raises(records.SchemaError):
        records.loads('{"foo":1}')


def test_default_path_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(records.OUT_DIR_ENV, str(tmp_path))
    assert records.default_path() == tmp_path / records.DEFAULT_FILE
