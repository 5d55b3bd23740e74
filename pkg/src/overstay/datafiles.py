"""Reading and writing the plain CSV tables the tool consumes and emits."""

from __future__ import annotations

import csv
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .simulator import EmpiricalDemand, EventRecord

EVENT_COLUMNS = ("arrival_time", "duration_h", "energy_kwh", "battery_kwh")


class DataFileError(ValueError):
    pass


def bundled(name: str) -> Path:
    """Path of a file shipped in overstay/data."""
    return Path(str(resources.files("overstay") / "data" / name))


def load_events(path, days: int | None = None, **demand_kwargs) -> EmpiricalDemand:
    """Parse an events table into an EmpiricalDemand pool.

    Required columns: arrival_time (clock hours), duration_h, energy_kwh,
    battery_kwh. An optional ``day`` column fixes the number of observed days;
    otherwise ``days`` must be given (defaults to 7).
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataFileError(f"{path}: empty file")
        header = [h.strip() for h in reader.fieldnames]
        missing = [c for c in EVENT_COLUMNS if c not in header]
        if missing:
            raise DataFileError(f"{path}: missing column(s) {', '.join(missing)}")
        reader.fieldnames = header
        events, day_ids = [], set()
        for lineno, row in enumerate(reader, start=2):
            if not any((v or "").strip() for v in row.values()):
                continue
            values = {}
            for col in EVENT_COLUMNS:
                raw = (row.get(col) or "").strip()
                try:
                    values[col] = float(raw)
                except ValueError:
                    raise DataFileError(f"{path}: row {lineno}, column {col}: not a number: {raw!r}") from None
                if not math.isfinite(values[col]):
                    raise DataFileError(f"{path}: row {lineno}, column {col}: not finite")
            try:
                events.append(
                    EventRecord(values["arrival_time"], values["duration_h"], values["energy_kwh"], values["battery_kwh"])
                )
            except ValueError as exc:
                raise DataFileError(f"{path}: row {lineno}: {exc}") from None
            if "day" in header and (row.get("day") or "").strip():
                day_ids.add(row["day"].strip())
    if not events:
        raise DataFileError(f"{path}: no events")
    if days is None:
        days = len(day_ids) if day_ids else 7
    return EmpiricalDemand(events=events, days=days, **demand_kwargs)


def demand_stats(demand: EmpiricalDemand, p_max: float = 7.2) -> dict:
    return {
        "events": len(demand.events),
        "days": demand.days,
        "mean_daily_count": demand.mean_daily_count,
        "mean_duration_h": demand.mean_duration,
        "mean_charge_ratio": demand.mean_charge_ratio(p_max),
        "mean_idle_h": demand.mean_idle_hours(p_max),
    }


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(round(float(v), 10))
    return "" if v is None else str(v)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_series_csv(path, series: dict) -> Path:
    cols = list(series)
    return write_csv(path, ["step"] + cols, ([k] + [series[c][k] for c in cols] for k in range(len(series[cols[0]]))))


def read_csv_table(path) -> dict:
    """Load a CSV written by this package into column -> list (numbers parsed)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFileError(f"{path}: empty file")
        cols = {h: [] for h in header}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataFileError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            for h, v in zip(header, row):
                try:
                    cols[h].append(float(v) if v not in ("", "true", "false") else (v == "true" if v else None))
                except ValueError:
                    cols[h].append(v)
    return cols


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj))
    return path
