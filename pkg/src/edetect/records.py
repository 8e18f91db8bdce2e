"""File formats: JSON records for calibrations/reports, CSV for paths and data."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .calibration import AdaptiveCalibration, MixtureCalibration
from .detectors import BOTH, CUSUM, SR, RunResult
from .errors import ConfigError, DataError
from .increments import normalize_bounded

PATH_COLUMNS = ("step", "log_m_sr", "log_m_cs", "threshold", "stopped")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj) -> str:
    """JSON text; floats use shortest round-trip repr."""
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def write_json(obj, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path: Union[str, Path]) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def calibration_from_dict(d: dict):
    kind = d.get("type")
    if kind == "mixture":
        return MixtureCalibration.from_dict(d)
    if kind == "adaptive":
        return AdaptiveCalibration.from_dict(d)
    raise ConfigError(f"unknown calibration type {kind!r}")


def load_calibration(path: Union[str, Path]):
    try:
        return calibration_from_dict(read_json(path))
    except KeyError as exc:
        raise ConfigError(f"{path}: missing calibration field {exc}") from exc


def _fmt(v: float) -> str:
    return "%.17g" % v


def emit_path(result: RunResult, path: Union[str, Path]) -> None:
    """Write the log e-detector path as CSV.

    Columns: step, log_m_sr, log_m_cs (when tracked), threshold, stopped.
    In ``both`` mode the CUSUM threshold and stop flag get their own
    ``threshold_cs`` and ``stopped_cs`` columns.
    """
    mode = result.mode
    cols = ["step"]
    if mode in (SR, BOTH):
        cols.append("log_m_sr")
    if mode in (CUSUM, BOTH):
        cols.append("log_m_cs")
    cols += ["threshold", "stopped"]
    if mode == BOTH:
        cols += ["threshold_cs", "stopped_cs"]
    primary_stop = result.stop_cs if mode == CUSUM else result.stop_sr
    primary_th = result.threshold_cs if mode == CUSUM else result.threshold
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(result.n_steps):
            n = i + 1
            row = [str(n)]
            if mode in (SR, BOTH):
                row.append(_fmt(result.log_m_sr[i]))
            if mode in (CUSUM, BOTH):
                row.append(_fmt(result.log_m_cs[i]))
            row += [_fmt(primary_th), "1" if primary_stop is not None and n >= primary_stop else "0"]
            if mode == BOTH:
                row += [_fmt(result.threshold_cs),
                        "1" if result.stop_cs is not None and n >= result.stop_cs else "0"]
            w.writerow(row)


def read_path(path: Union[str, Path]) -> dict:
    """Read a path CSV back into {column: numpy array}."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty path file")
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        vals = [float(r[j]) for r in body]
        out[name] = np.asarray(vals, dtype=int if name in ("step", "stopped", "stopped_cs") else float)
    return out


def ingest_csv(path: Union[str, Path], column: Union[int, str] = 0, header: bool = True,
               normalization: Optional[tuple] = None) -> np.ndarray:
    """Read one numeric column from a CSV file.

    Args:
        path: File to read.
        column: Column index or header name.
        header: Whether the first row is a header.
        normalization: Optional (lo, hi) mapping raw values onto [0, 1].

    Returns:
        The observations in file order.

    Raises:
        DataError: on an empty file, a non-numeric cell or an out-of-range value.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if header:
        if not rows:
            raise DataError(f"{path}: empty file")
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if isinstance(column, str) and not column.lstrip("-").isdigit():
            if column not in names:
                raise ConfigError(f"{path}: no column named {column!r} (have {names})")
            col = names.index(column)
        else:
            col = int(column)
        col_name = names[col] if col < len(names) else str(col)
    else:
        if isinstance(column, str) and not column.lstrip("-").isdigit():
            raise ConfigError("column names need a header row")
        col = int(column)
        col_name = str(col)
    if not rows:
        raise DataError(f"{path}: no data rows")
    first_row = 2 if header else 1
    vals = np.empty(len(rows))
    for i, r in enumerate(rows):
        try:
            v = float(r[col])
        except (IndexError, ValueError):
            cell = r[col] if col < len(r) else "<missing>"
            raise DataError(f"{path}: row {first_row + i}, column {col_name!r}: "
                            f"cannot parse {cell!r}", first_row + i) from None
        if not math.isfinite(v):
            raise DataError(f"{path}: row {first_row + i}, column {col_name!r}: "
                            f"non-finite value", first_row + i)
        vals[i] = v
    if normalization is not None:
        lo, hi = normalization
        bad = ~((vals >= lo) & (vals <= hi))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DataError(f"{path}: row {first_row + i}: value {vals[i]} outside "
                            f"[{lo}, {hi}]", first_row + i)
        vals = normalize_bounded(vals, lo, hi)
    return vals
