"""Deterministic serialization: canonical JSON with fixed key order and
17-significant-digit floats (lossless round trip for doubles), plus CSV
writing with the same float convention. Identical inputs always produce
byte-identical output."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def _fmt_float(x: float) -> str:
    if x != x:
        return "null"
    if x in (float("inf"), float("-inf")):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    if x == int(x) and abs(x) < 1e15:
        return f"{x:.1f}"
    return f"{x:.17g}"


def dumps_canonical(obj, indent: int = 2, _level: int = 0) -> str:
    pad = " " * (indent * (_level + 1))
    closing = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, complex):
        return dumps_canonical({"re": obj.real, "im": obj.imag}, indent, _level)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = [dumps_canonical(v, indent, _level + 1) for v in list(obj)]
        if not items:
            return "[]"
        return "[\n" + ",\n".join(pad + it for it in items) + "\n" + closing + "]"
    if isinstance(obj, dict):
        items = []
        for k in sorted(obj.keys()):
            items.append(pad + json.dumps(str(k)) + ": "
                         + dumps_canonical(obj[k], indent, _level + 1))
        if not items:
            return "{}"
        return "{\n" + ",\n".join(items) + "\n" + closing + "}"
    raise TypeError(f"cannot serialize {type(obj)}")


def write_json(path, obj) -> None:
    Path(path).write_text(dumps_canonical(obj) + "\n")


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(f"{float(v):.17g}")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def load_schema() -> dict:
    here = Path(__file__).parent
    return json.loads((here / "report_schema.json").read_text())
