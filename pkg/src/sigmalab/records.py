"""Line-delimited JSON record store.

Each run appends one header line ``{"type": "header", "schema_version": 1,
"created": <UTC timestamp>, "command": ...}`` followed by one record per line
``{"type": "record", "schema_version": 1, "kind": ..., ...}``.  Keys are
sorted and separators fixed, so identical inputs give byte-identical record
lines; the timestamp lives only in the header.

Arbitrary-precision numbers are stored as decimal strings (40 significant
digits), complex numbers as ``{"re": ..., "im": ...}``, rationals as "p/q".
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import json
import os
from fractions import Fraction
from pathlib import Path

import mpmath as mp

from .dirichlet import DirichletCharacter

SCHEMA_VERSION = 1
DIGITS = 40
OUT_DIR_ENV = "SIGMALAB_OUT_DIR"
DEFAULT_FILE = "records.jsonl"


class SchemaError(ValueError):
    pass


def to_jsonable(obj):
    """Convert package values to JSON primitives (deterministically)."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return obj if obj == obj and abs(obj) != float("inf") else str(obj)
    if isinstance(obj, mp.mpf):
        return mp.nstr(obj, DIGITS, strip_zeros=False) if mp.isfinite(obj) else str(obj)
    if isinstance(obj, mp.mpc):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, DirichletCharacter):
        return {"modulus": obj.modulus, "order": obj.order, "exponents": list(obj.exponents)}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.repr}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, mp.matrix):
        return [[to_jsonable(obj[i, j]) for j in range(obj.cols)] for i in range(obj.rows)]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def make_record(kind: str, **fields) -> dict:
    rec = {"type": "record", "schema_version": SCHEMA_VERSION, "kind": kind}
    rec.update(to_jsonable(fields))
    return rec


def make_header(command: str) -> dict:
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return {"type": "header", "schema_version": SCHEMA_VERSION, "created": stamp, "command": command}


def dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def loads(line: str) -> dict:
    rec = json.loads(line)
    if not isinstance(rec, dict) or rec.get("type") not in ("header", "record"):
        raise SchemaError("not a record line")
    if rec.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {rec.get('schema_version')!r}")
    if rec["type"] == "record" and not isinstance(rec.get("kind"), str):
        raise SchemaError("record without kind")
    return rec


def default_path() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, ".")) / DEFAULT_FILE


class RecordWriter:
    """Append-only writer; the header is written on the first record."""

    def __init__(self, path: str | os.PathLike | None, command: str):
        self.path = Path(path) if path is not None else default_path()
        self.command = command
        self._started = False

    def write(self, record: dict):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="ascii") as fh:
            if not self._started:
                fh.write(dumps(make_header(self.command)) + "\n")
                self._started = True
            fh.write(dumps(record) + "\n")


def read_records(path, include_headers: bool = False) -> list[dict]:
    out = []
    with Path(path).open(encoding="ascii") as fh:
        for line in fh:
            if line.strip():
                rec = loads(line)
                if include_headers or rec["type"] == "record":
                    out.append(rec)
    return out


def record_lines(path) -> list[str]:
    """Raw record lines with headers removed (for byte-level comparisons)."""
    with Path(path).open(encoding="ascii") as fh:
        return [ln for ln in fh if ln.strip() and loads(ln)["type"] == "record"]
