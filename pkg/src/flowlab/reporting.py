"""Deterministic report serialization.

report.json is byte-identical across reruns and worker counts: keys are
sorted, floats use Python repr round-tripping, and anything time- or
host-dependent goes to the separate provenance.json.
"""
from __future__ import annotations

import dataclasses
import datetime
import json
import math
import os
import platform
from typing import Iterable

import numpy as np

VERDICT_EXIT = {"pass": 0, "positive": 0, "evidence-stable": 0,
                "fail": 1, "evidence-unstable": 1,
                "inconclusive": 2, "unverified-premise": 2,
                "unresolved-by-naive": 2, "variance-warning": 2}


def to_jsonable(obj):
    """Recursively convert dataclasses/numpy objects into JSON-safe values."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {}
        for f in dataclasses.fields(obj):
            if f.name.startswith("_"):
                continue
            out[f.name] = to_jsonable(getattr(obj, f.name))
        return out
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_report(report: dict, out_dir: str, name: str = "report.json") -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    payload = json.dumps(to_jsonable(report), sort_keys=True, indent=2)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(payload + "\n")
    return path


def write_provenance(out_dir: str) -> str:
    """Timestamps and host facts live here, never in report.json."""
    path = os.path.join(out_dir, "provenance.json")
    payload = {
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def write_csv(path: str, header: Iterable[str], rows: Iterable[Iterable]) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, (float, np.floating)):
                    cells.append(repr(float(v)))
                else:
                    cells.append(str(v))
            fh.write(",".join(cells) + "\n")
    return path


def collect_verdicts(report: dict) -> list[str]:
    """Walk a report tree collecting every 'verdict' and boolean 'passed'."""
    found: list[str] = []

    def walk(node):
        if isinstance(node, dict):
            for key, value in node.items():
                if key == "verdict" and isinstance(value, str):
                    found.append(value)
                elif key == "passed" and isinstance(value, bool) and "verdict" not in node:
                    found.append("pass" if value else "fail")
                else:
                    walk(value)
        elif isinstance(node, list):
            for value in node:
                walk(value)

    walk(report)
    return found


def exit_code_for(verdicts: list[str]) -> int:
    codes = [VERDICT_EXIT.get(v, 2) for v in verdicts]
    if 1 in codes:
        return 1
    if 2 in codes:
        return 2
    return 0
