"""Reading count tables and writing JSON-safe reports."""
from __future__ import annotations

import csv
import dataclasses
import enum
import hashlib
import io
import json
import math
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError
from .tables import ObservedTable

__all__ = ["ingest", "parse_json_table", "parse_csv_table", "load_fixture", "FIXTURES",
           "table_to_json", "table_digest", "to_jsonable"]

FIXTURES = ("icd_trial",)


def _count(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise DataError(f"{where}: count must be an integer, got {value!r}")
    try:
        num = float(value)
    except ValueError:
        raise DataError(f"{where}: count must be an integer, got {value!r}") from None
    if not math.isfinite(num) or num != int(num):
        raise DataError(f"{where}: count must be an integer, got {value!r}")
    if num < 0:
        raise DataError(f"{where}: negative count {value!r}")
    return int(num)


def _index(value, limit: Optional[int], name: str, where: str) -> int:
    if isinstance(value, bool):
        raise DataError(f"{where}: {name} must be a nonnegative integer")
    try:
        idx = int(value) if not isinstance(value, float) or value.is_integer() else None
    except (TypeError, ValueError):
        idx = None
    if idx is None or idx < 0 or (limit is not None and idx >= limit):
        bound = "" if limit is None else f" below {limit}"
        raise DataError(f"{where}: {name}={value!r} must be an integer{bound}")
    return idx


def _assemble(observed, missing, J, K) -> ObservedTable:
    n_obs = np.zeros((2, J, K))
    n_mis = np.zeros((2, K))
    for (t, x, y), n in observed.items():
        if x >= J or y >= K:
            raise DataError(f"cell (t={t}, x={x}, y={y}) outside J={J}, K={K}")
        n_obs[t, x, y] = n
    for (t, y), n in missing.items():
        if y >= K:
            raise DataError(f"cell (t={t}, y={y}) outside K={K}")
        n_mis[t, y] = n
    table = ObservedTable(n_obs, n_mis)
    if table.total <= 0:
        raise DataError("table has no units")
    return table


def parse_json_table(text: str) -> ObservedTable:
    """Parse ``{"J", "K", "observed": [{t, x, y, n}], "missing": [{t, y, n}]}``.

    Cells not listed are zero. ``J`` and ``K`` default to 2.
    """
    if not text.strip():
        raise DataError("empty input")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "observed" not in doc or "missing" not in doc:
        raise DataError("JSON table needs 'observed' and 'missing' lists")
    J = _index(doc.get("J", 2), None, "J", "header")
    K = _index(doc.get("K", 2), None, "K", "header")
    if J < 1 or K < 1:
        raise DataError("J and K must be positive")
    observed, missing = {}, {}
    for i, rec in enumerate(doc["observed"] if isinstance(doc["observed"], list) else [None]):
        where = f"observed[{i}]"
        if not isinstance(rec, dict) or set(rec) != {"t", "x", "y", "n"}:
            raise DataError(f"{where}: expected keys t, x, y, n")
        key = (_index(rec["t"], 2, "t", where), _index(rec["x"], J, "x", where),
               _index(rec["y"], K, "y", where))
        if key in observed:
            raise DataError(f"{where}: duplicate cell {key}")
        observed[key] = _count(rec["n"], where)
    for i, rec in enumerate(doc["missing"] if isinstance(doc["missing"], list) else [None]):
        where = f"missing[{i}]"
        if not isinstance(rec, dict) or not {"t", "y", "n"} <= set(rec) or set(rec) - {"t", "y", "n", "x"}:
            raise DataError(f"{where}: expected keys t, y, n")
        if rec.get("x") not in (None, ""):
            raise DataError(f"{where}: x must be absent when the covariate is missing")
        key = (_index(rec["t"], 2, "t", where), _index(rec["y"], K, "y", where))
        if key in missing:
            raise DataError(f"{where}: duplicate cell {key}")
        missing[key] = _count(rec["n"], where)
    return _assemble(observed, missing, J, K)


def parse_csv_table(text: str, J: Optional[int] = None, K: Optional[int] = None) -> ObservedTable:
    """Parse CSV with header ``t,x,y,m,n``; ``x`` is empty on rows with ``m=1``.

    ``J`` and ``K`` default to the largest index seen plus one, and at least 2.
    """
    if not text.strip():
        raise DataError("empty input")
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["t", "x", "y", "m", "n"]:
        raise DataError("CSV header must be t,x,y,m,n")
    observed, missing = {}, {}
    for i, row in enumerate(reader, start=2):
        where = f"line {i}"
        if None in row or any(v is None for v in row.values()):
            raise DataError(f"{where}: wrong number of fields")
        row = {k.strip(): v.strip() for k, v in row.items()}
        t = _index(row["t"], 2, "t", where)
        y = _index(row["y"], None, "y", where)
        m = _index(row["m"], 2, "m", where)
        n = _count(row["n"], where)
        if m == 1:
            if row["x"] != "":
                raise DataError(f"{where}: x must be empty when m=1")
            key = (t, y)
            target = missing
        else:
            if row["x"] == "":
                raise DataError(f"{where}: x is required when m=0")
            key = (t, _index(row["x"], None, "x", where), y)
            target = observed
        if key in target:
            raise DataError(f"{where}: duplicate cell {key}")
        target[key] = n
    if not observed and not missing:
        raise DataError("CSV has no data rows")
    J = J or max([2] + [x + 1 for _, x, _ in observed])
    K = K or max([2] + [y + 1 for _, _, y in observed] + [y + 1 for _, y in missing])
    return _assemble(observed, missing, J, K)


def ingest(path, format: Optional[str] = None) -> ObservedTable:
    """Read a count table from a ``.json`` or ``.csv`` file.

    Raises
    ------
    DataError
        On any schema violation, negative or non-integer count, or an
        observed covariate on a row flagged missing.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if fmt == "json":
        return parse_json_table(text)
    if fmt == "csv":
        return parse_csv_table(text)
    raise DataError(f"unknown format {fmt!r}; use json or csv")


def load_fixture(name: str) -> ObservedTable:
    """Bundled example tables; see :data:`FIXTURES`."""
    if name not in FIXTURES:
        raise DataError(f"unknown fixture {name!r}; available: {', '.join(FIXTURES)}")
    text = resources.files("subgroup_causal").joinpath("data", f"{name}.json").read_text()
    return parse_json_table(text)


def table_to_json(table: ObservedTable) -> str:
    """Canonical JSON encoding, readable by :func:`parse_json_table`."""
    observed = [{"t": t, "x": x, "y": y, "n": int(table.n_obs[t, x, y])}
                for t in range(2) for x in range(table.J) for y in range(table.K)]
    missing = [{"t": t, "y": y, "n": int(table.n_mis[t, y])}
               for t in range(2) for y in range(table.K)]
    return json.dumps({"J": table.J, "K": table.K, "observed": observed, "missing": missing},
                      sort_keys=True)


def table_digest(table: ObservedTable) -> str:
    payload = np.concatenate([np.asarray(table.n_obs).ravel(), np.asarray(table.n_mis).ravel()])
    h = hashlib.sha256(f"{table.J},{table.K};".encode())
    h.update(np.ascontiguousarray(payload, dtype="<f8").tobytes())
    return h.hexdigest()


def _float(v: float):
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def to_jsonable(obj):
    """Convert results to plain JSON types; infinities become ``"inf"``/``"-inf"``, NaN null."""
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, str) or obj is None:
        return obj
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, dict):
        return {str(to_jsonable(k)): to_jsonable(v) for k, v in obj.items()}
    if hasattr(obj, "_asdict"):
        return {k: to_jsonable(v) for k, v in obj._asdict().items()}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")
