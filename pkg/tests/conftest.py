import csv
import datetime as dt

import numpy as np
import pytest

from mmbnn.data.wind import DIRECTION_COLUMNS, SPEED_COLUMNS, TIME_COLUMN, WIND_COLUMNS


def wind_frame(start, hours, seed=0):
    """Smooth synthetic hourly wind table: (timestamps, {column: values})."""
    rng = np.random.default_rng(seed)
    t = np.arange(hours)
    times = [start + dt.timedelta(hours=int(h)) for h in t]
    cols = {}
    for j, c in enumerate(SPEED_COLUMNS):
        cols[c] = 5 + 2 * np.sin(2 * np.pi * t / 24 + j) + 0.3 * rng.standard_normal(hours)
    for j, c in enumerate(DIRECTION_COLUMNS):
        cols[c] = (180 + 90 * np.sin(2 * np.pi * t / 37 + j) + 5 * rng.standard_normal(hours)) % 360
    return times, cols


def write_wind_csv(path, times, cols, columns=WIND_COLUMNS, blanks=()):
    """``blanks`` is a collection of (row, column) cells written empty."""
    blanks = set(blanks)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([TIME_COLUMN, *columns])
        for i, t in enumerate(times):
            w.writerow([t.isoformat()] + ["" if (i, c) in blanks else repr(float(cols[c][i])) for c in columns])
    return path


@pytest.fixture
def wind_csv_factory(tmp_path):
    def make(start=dt.datetime(2007, 1, 2), hours=48, name="wind.csv", **kw):
        times, cols = wind_frame(start, hours)
        return write_wind_csv(tmp_path / name, times, cols, **kw), times, cols
    return make


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
