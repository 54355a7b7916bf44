"""Ingestion of the hourly wind CSV.

Layout: UTF-8, one header row, a ``timestamp`` column with ISO-8601 times at a
strict one-hour spacing, and the 13 variables in ``WIND_COLUMNS`` (extra
columns are ignored). Speeds and vector components are numeric; directions are
in degrees. An empty cell marks a missing value. Each direction is replaced by
its sine and cosine, giving the 17 variables of ``WIND_VARIABLES``;
``obs_Spd10m`` is the main modality.
"""

import csv
import datetime as dt
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ..exceptions import IngestionError, SchemaError
from .grids import make_grids

TIME_COLUMN = "timestamp"
SPEED_COLUMNS = ("obs_Spd10m", "obs_Spd60m", "era_Spd10m", "era_Spd60m", "era_Spd100m",
                 "era_u10m", "era_v10m", "era_u100m", "era_v100m")
DIRECTION_COLUMNS = ("obs_Dir10m", "obs_Dir60m", "era_Dir10m", "era_Dir100m")
WIND_COLUMNS = SPEED_COLUMNS + DIRECTION_COLUMNS
WIND_VARIABLES = SPEED_COLUMNS + tuple(f"{c}_{f}" for c in DIRECTION_COLUMNS for f in ("sin", "cos"))
WIND_MAIN = "obs_Spd10m"
HOURLY_ORIGIN = dt.datetime(2007, 1, 2)
DAILY_ORIGIN = dt.datetime(2019, 1, 1)
HOURS = 24
_HOUR = dt.timedelta(hours=1)


@dataclass
class WindRecord:
    """Hourly values of the 17 variables; ``values[name]`` may contain NaN."""

    times: list
    values: dict

    def hours_since(self, origin):
        return np.array([(t - origin) / _HOUR for t in self.times])


def _parse_time(text, row):
    try:
        t = dt.datetime.fromisoformat(text.strip())
    except ValueError as exc:
        raise IngestionError(f"row {row}: bad timestamp {text!r}") from exc
    if t.tzinfo is not None:
        t = t.astimezone(dt.timezone.utc).replace(tzinfo=None)
    return t


def _parse_value(text, row, col):
    text = text.strip()
    if text == "":
        return np.nan
    try:
        return float(text)
    except ValueError as exc:
        raise IngestionError(f"row {row}: column {col!r} has non-numeric value {text!r}") from exc


def direction_components(degrees):
    rad = np.deg2rad(np.asarray(degrees, dtype=float))
    return np.sin(rad), np.cos(rad)


def read_wind_csv(path):
    """Parse and validate the CSV; return a :class:`WindRecord`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (TIME_COLUMN,) + WIND_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        times, raw = [], {c: [] for c in WIND_COLUMNS}
        for i, rec in enumerate(reader, start=2):
            times.append(_parse_time(rec[TIME_COLUMN], i))
            for c in WIND_COLUMNS:
                raw[c].append(_parse_value(rec[c] or "", i, c))
    if len(times) < 2:
        raise IngestionError(f"{path}: need at least two rows")
    gaps = [f"{a.isoformat()} -> {b.isoformat()}" for a, b in zip(times, times[1:]) if b - a != _HOUR]
    if gaps:
        raise IngestionError(f"{path}: timestamps are not hourly at {len(gaps)} place(s): " + "; ".join(gaps[:10]))
    values = {c: np.array(raw[c]) for c in SPEED_COLUMNS}
    for c in DIRECTION_COLUMNS:
        values[f"{c}_sin"], values[f"{c}_cos"] = direction_components(raw[c])
    return WindRecord(times, values)


def _require_complete(name, v, where):
    bad = np.flatnonzero(np.isnan(v))
    if bad.size:
        raise IngestionError(f"{name}: missing values at {where(bad)}")


def hourly_values(record, x_days, origin=HOURLY_ORIGIN):
    """Natural cubic spline of every variable at ``x_days`` past ``origin``.

    Returns a dict of arrays aligned with ``x_days``.
    """
    hours = record.hours_since(origin)
    q = np.asarray(x_days, dtype=float).ravel() * HOURS
    lo, hi = q.min(), q.max()
    if lo < hours[0] or hi > hours[-1]:
        raise IngestionError(f"queries span hours [{lo:g}, {hi:g}] past {origin.isoformat()} "
                             f"but data cover [{hours[0]:g}, {hours[-1]:g}]")
    # only the rows bracketing the queries have to be complete
    a = max(int(np.searchsorted(hours, lo, "right")) - 2, 0)
    b = min(int(np.searchsorted(hours, hi, "left")) + 2, len(hours))
    out = {}
    for name in WIND_VARIABLES:
        v = record.values[name][a:b]
        _require_complete(name, v, lambda idx: [record.times[a + i].isoformat() for i in idx[:10]])
        out[name] = CubicSpline(hours[a:b], v, bc_type="natural")(q)
    return out


def daily_values(record, days, origin=DAILY_ORIGIN):
    """The 24 hourly values of each whole day ``origin + d`` (arrays of shape len(days) x 24)."""
    index = {t: i for i, t in enumerate(record.times)}
    rows = []
    for d in np.asarray(days, dtype=float).ravel():
        start = origin + dt.timedelta(days=float(d))
        idx = [index.get(start + h * _HOUR) for h in range(HOURS)]
        if None in idx:
            raise IngestionError(f"day {start.date().isoformat()} is not fully covered by the data")
        rows.append(idx)
    rows = np.array(rows, dtype=int).reshape(-1, HOURS)
    out = {}
    for name in WIND_VARIABLES:
        v = record.values[name][rows]
        _require_complete(name, v, lambda idx: sorted({record.times[rows.flat[i]].isoformat()
                                                      for i in idx[:10]}))
        out[name] = v
    return out


def wind_ingest(path, mode="hourly", main_x=None, aux_x=None, origin=None):
    """Read the CSV and return modality datasets, main first.

    Inputs default to the benchmark grids (``make_grids("wind")`` for hourly,
    ``make_grids("wind_daily")`` for daily). Daily responses are 24-vectors.
    """
    from .datasets import ModalityDataset

    if mode not in ("hourly", "daily"):
        raise ValueError("mode must be 'hourly' or 'daily'")
    grids = make_grids("wind" if mode == "hourly" else "wind_daily")
    main_x = grids.main if main_x is None else np.asarray(main_x, dtype=float).reshape(-1, 1)
    aux_x = grids.auxiliary if aux_x is None else np.asarray(aux_x, dtype=float).reshape(-1, 1)
    record = read_wind_csv(path)
    if mode == "hourly":
        origin = HOURLY_ORIGIN if origin is None else origin
        main_v, aux_v = hourly_values(record, main_x, origin), hourly_values(record, aux_x, origin)
        shape = lambda v: v[:, None]
    else:
        origin = DAILY_ORIGIN if origin is None else origin
        main_v, aux_v = daily_values(record, main_x, origin), daily_values(record, aux_x, origin)
        shape = lambda v: v
    out = [ModalityDataset(WIND_MAIN, main_x, shape(main_v[WIND_MAIN]), "main")]
    out += [ModalityDataset(n, aux_x, shape(aux_v[n]), "auxiliary") for n in WIND_VARIABLES if n != WIND_MAIN]
    return out
