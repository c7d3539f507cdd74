"""CSV and JSON readers/writers.

IV logs use the header ``t_s,current_a,voltage_v``. All floats are written
with 17 significant digits so a read-back reproduces them exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import MissingHeader, NonMonotoneTime, ParseError
from .workflows import DischargeDataset

IV_HEADER = ("t_s", "current_a", "voltage_v")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return "%.17g" % float(x)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_iv_csv(path):
    """Return ``(t, I, V)`` arrays from an IV log."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingHeader(f"{path} is empty; expected header {','.join(IV_HEADER)}", line=1) from None
        missing = [h for h in IV_HEADER if h not in header]
        if missing:
            raise MissingHeader(f"{path}: header lacks column(s) {', '.join(missing)}", line=1)
        cols = [header.index(h) for h in IV_HEADER]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(row[c]) for c in cols]
            except (ValueError, IndexError):
                raise ParseError(f"{path}: cannot parse {row!r}", line=lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"{path}: non-finite value in {row!r}", line=lineno)
            if rows and vals[0] <= rows[-1][0]:
                raise NonMonotoneTime(f"{path}: time {vals[0]} does not increase", line=lineno)
            rows.append(vals)
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def load_dataset(path, **meta) -> DischargeDataset:
    """Read an IV log; ``meta`` fills capacity, noise variance, OCV limits, cut-off and initial SoC."""
    t, i, v = read_iv_csv(path)
    return DischargeDataset(t, i, v, **meta)


def save_dataset(path, dataset: DischargeDataset):
    write_csv(path, IV_HEADER, zip(dataset.times, dataset.currents, dataset.voltages))


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno) from exc
