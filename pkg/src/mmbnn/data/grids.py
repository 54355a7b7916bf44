"""Training and evaluation input sets for the benchmark datasets."""

import datetime as dt
import itertools
from dataclasses import dataclass

import numpy as np

DATASETS = ("branin", "paciorek", "paciorek_high", "paciorek_low",
            "timeseries", "timeseries_1d", "wind", "wind_daily")

BRANIN_MAIN = ((-2, -0.5, 1, 4, 5.5, 7), (3, 4.5, 6, 9, 10.5, 12))
BRANIN_AUX = ((-3.5, -2, -0.5, 1, 2.5, 4, 5.5, 7, 8.5), (1.5, 3, 4.5, 6, 7.5, 9, 10.5, 12, 13.5))
PACIOREK_MAIN = (0.475, 0.5625, 0.7375, 0.825)
PACIOREK_EXTRA = (0.3875, 0.51875, 0.65, 0.71825, 0.9125)
PACIOREK_DIM = 4
TS_MAIN = (-1.5, -1, -0.5, 0.5, 1, 1.5)
TS_AUX = (-2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2)
WIND_MAIN_DAYS = (2, 4, 6)
WIND_AUX_DAYS = (1, 2, 3, 4, 5, 6)
WIND_STEPS = 20
WIND_DAILY_YEAR = 2019
WIND_DAILY_MAIN_MONTHS = (2, 4, 6, 7, 9, 11)


@dataclass
class Grids:
    """``main`` training inputs, ``auxiliary`` training inputs and ``evaluation`` inputs."""

    name: str
    main: np.ndarray
    auxiliary: np.ndarray
    evaluation: np.ndarray


def product_grid(*axes):
    return np.array(list(itertools.product(*axes)), dtype=float)


def _union_rows(*arrays):
    # first-seen order; exact float duplicates only
    seen, rows = set(), []
    for A in arrays:
        for r in A:
            key = tuple(r)
            if key not in seen:
                seen.add(key)
                rows.append(r)
    return np.array(rows)


def _wind_hours(days):
    pts = [k + i / WIND_STEPS for k in days for i in range(WIND_STEPS + 1)]
    return np.array(sorted(set(np.round(pts, 12))))[:, None]


def _wind_daily():
    start = dt.date(WIND_DAILY_YEAR, 1, 1)
    n = (dt.date(WIND_DAILY_YEAR + 1, 1, 1) - start).days
    days = [start + dt.timedelta(d) for d in range(n)]
    main = [float(i) for i, d in enumerate(days) if d.month in WIND_DAILY_MAIN_MONTHS]
    return np.array(main)[:, None], np.arange(n, dtype=float)[:, None]


def make_grids(name):
    """Inputs for dataset ``name``; evaluation = every input carrying auxiliary data.

    Wind inputs are days past the configured origin (fractional for the hourly
    variant, whole days of the calendar year for the daily one).
    """
    if name == "branin":
        main, aux = product_grid(*BRANIN_MAIN), product_grid(*BRANIN_AUX)
    elif name in ("paciorek", "paciorek_high", "paciorek_low"):
        main = product_grid(*[PACIOREK_MAIN] * PACIOREK_DIM)
        aux = _union_rows(main, product_grid(*[PACIOREK_EXTRA] * PACIOREK_DIM))
    elif name in ("timeseries", "timeseries_1d"):
        main, aux = product_grid(*[TS_MAIN] * 3), product_grid(*[TS_AUX] * 3)
    elif name == "wind":
        main, aux = _wind_hours(WIND_MAIN_DAYS), _wind_hours(WIND_AUX_DAYS)
    elif name == "wind_daily":
        main, aux = _wind_daily()
    else:
        raise ValueError(f"unknown dataset {name!r}; choose from {', '.join(DATASETS)}")
    return Grids(name, main, aux, aux.copy())
