"""Deterministic result files: sorted-key JSON and tab-separated tables."""
from __future__ import annotations

import json
import math
import os
from typing import Any, Sequence

import numpy as np


def plain(obj: Any) -> Any:
    """Recursively convert numpy values and tuples into JSON-friendly Python values.

    Non-finite floats become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, complex):
        return {"re": plain(obj.real), "im": plain(obj.imag)}
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(plain(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: str, obj: Any) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def _cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.10g}"
    return str(v)


def format_table(columns: Sequence[str], rows: Sequence[dict | Sequence]) -> str:
    lines = ["\t".join(columns)]
    for row in rows:
        vals = [row.get(c) for c in columns] if isinstance(row, dict) else list(row)
        lines.append("\t".join(_cell(v) for v in vals))
    return "\n".join(lines) + "\n"


def write_table(path: str, columns: Sequence[str], rows: Sequence[dict | Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_table(columns, rows))


def read_table(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    return lines[0].split("\t"), [ln.split("\t") for ln in lines[1:]]


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory {path} is not writable")
    return path
