"""Trace records, blow-up reporting and plain-text serialization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    """Round-trip float formatting (17 significant digits)."""
    return format(float(x), ".17g")


class BlowUpDetected(RuntimeError):
    """A simulation left the smooth regime (gradient cap exceeded or non-finite state)."""

    def __init__(self, message: str, time: float, location=None, value: float = math.nan, trace=None):
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time
        self.location = location
        self.value = value
        self.trace = trace

    def report(self) -> dict:
        loc = self.location
        if isinstance(loc, np.ndarray):
            loc = loc.tolist()
        return {"message": str(self), "time": self.time, "location": loc, "value": self.value}


@dataclass
class EnergyTrace:
    """Time series recorded along a particle run."""

    times: list = field(default_factory=list)
    deltaE: list = field(default_factory=list)
    diameter: list = field(default_factory=list)
    velocity_diameter: list = field(default_factory=list)
    fiedler: list | None = None

    def append(self, t, dE, D, V, lam2=None):
        self.times.append(float(t))
        self.deltaE.append(float(dE))
        self.diameter.append(float(D))
        self.velocity_diameter.append(float(V))
        if lam2 is not None:
            if self.fiedler is None:
                self.fiedler = []
            self.fiedler.append(float(lam2))

    def __len__(self):
        return len(self.times)

    def to_csv(self, path) -> Path:
        header = ["t", "deltaE", "D", "V"]
        cols = [self.times, self.deltaE, self.diameter, self.velocity_diameter]
        if self.fiedler is not None:
            header.append("lambda2")
            cols.append(self.fiedler)
        return write_csv(path, header, zip(*cols))


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    return header, data.reshape(-1, len(header))


def to_jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return v
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # repr of a Python float is the shortest round-trip form
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path
