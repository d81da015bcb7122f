"""Structured verification results and their JSON/CSV encodings."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np


def jsonable(value):
    """Convert numpy values and non-finite floats into plain JSON data."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return value


@dataclass
class VerificationReport:
    """Outcome of one verification operation.

    ``margins`` holds the measured quantities, ``params`` the tolerances and
    constants the check used, and ``table`` optional per-sample rows that go
    to CSV rather than JSON.
    """

    op: str
    scenario: str
    passed: bool
    margins: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    samples: int = 0
    seed: int | None = None
    notes: list = field(default_factory=list)
    table: list | None = None

    def __bool__(self) -> bool:
        return bool(self.passed)

    def to_dict(self) -> dict:
        return jsonable(
            {
                "op": self.op,
                "scenario": self.scenario,
                "params": self.params,
                "pass": bool(self.passed),
                "margins": self.margins,
                "samples": self.samples,
                "seed": self.seed,
                "notes": list(self.notes),
            }
        )

    def summary(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        keys = list(self.margins)[:3]
        detail = ", ".join(f"{k}={_fmt(self.margins[k])}" for k in keys)
        return f"[{mark}] {self.op}: {detail}"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.4g}"
    return str(v)


def rows_to_csv(rows: list[dict]) -> str:
    """CSV text with a header row; '.' decimal, comma separated."""
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                         for k, v in row.items()})
    return buf.getvalue()
