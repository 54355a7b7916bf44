"""Closed-form benchmark functions: multi-fidelity Branin and Paciorek, and the
parametric time series with its summary statistics.

All functions are vectorized over leading axes and deterministic given their
inputs (and ``rng`` for the noisy series).
"""

import numpy as np

from ..exceptions import DomainError, SupportError

BRANIN_A = 1.0
BRANIN_B = 5.1 / (4 * np.pi**2)
BRANIN_C = 5 / np.pi
BRANIN_R = 6.0
BRANIN_S = 10.0
BRANIN_T = 1 / (8 * np.pi)

BRANIN_AUX_A1 = (0.0, 0.514, 1.0)
PACIOREK_A2 = {
    "paciorek": (0.25, 0.5, 0.75, 1.0),
    "paciorek_high": (0.125, 0.25, 0.375, 0.5),
    "paciorek_low": (0.625, 0.75, 0.875, 1.0),
}

TS_BETA = 0.25
TS_NOISE_SD = 0.05
TS_LENGTH = 200
TS_FINE_GRID = 10_001
TS_SUMMARIES = ("total_distance", "average_slope", "argmax_location")


def _branin_poly(x1, x2):
    return BRANIN_A * (x2 - BRANIN_B * x1**2 + BRANIN_C * x1 - BRANIN_R) ** 2


def branin(x1, x2):
    """High-fidelity Branin function."""
    x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
    return _branin_poly(x1, x2) + BRANIN_S * (1 - BRANIN_T) * np.cos(x1) + BRANIN_S


def branin_low(x1, x2, A1):
    """Low-fidelity Branin with the polynomial part reweighted by ``-(A1 + 0.5)``."""
    x1, x2 = np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)
    return branin(x1, x2) - (A1 + 0.5) * _branin_poly(x1, x2)


def _paciorek_arg(x):
    x = np.asarray(x, dtype=float)
    if np.any(x == 0):
        raise DomainError("paciorek is undefined when a coordinate is zero")
    return 1.0 / np.prod(x, axis=-1)


def paciorek(x):
    """``sin(prod(1 / x_i))`` over the last axis of ``x``."""
    return np.sin(_paciorek_arg(x))


def paciorek_low(x, A2):
    u = _paciorek_arg(x)
    return np.sin(u) - 9 * A2**2 * np.cos(u)


# -- time series --------------------------------------------------------------------

def ts_function(t, alpha, gamma, delta, beta=TS_BETA):
    """``t**alpha + beta * cos(2 pi t / gamma + delta)``."""
    t = np.asarray(t, dtype=float)
    return t**alpha + beta * np.cos(2 * np.pi * t / gamma + delta)


def _check_ts_params(alpha, gamma, delta):
    if not (alpha > 0 and gamma > 0 and -np.pi < delta < np.pi):
        raise SupportError(f"need alpha > 0, gamma > 0 and -pi < delta < pi; "
                           f"got ({alpha}, {gamma}, {delta})")


def ts_params(u):
    """Map grid coordinates ``(log alpha, log gamma, atanh delta)`` to ``(alpha, gamma, delta)``."""
    u = np.asarray(u, dtype=float)
    return np.exp(u[..., 0]), np.exp(u[..., 1]), np.tanh(u[..., 2])


def ts_summaries(alpha, gamma, delta, beta=TS_BETA, n_grid=TS_FINE_GRID):
    """Summaries of the noiseless curve on a uniform grid of ``n_grid`` points.

    Total distance is the variation ``sum |f(t_{i+1}) - f(t_i)|``, which equals the
    integral of ``|df/dt|`` for the piecewise-linear interpolant.
    """
    _check_ts_params(alpha, gamma, delta)
    t = np.linspace(0.0, 1.0, n_grid)
    f = ts_function(t, alpha, gamma, delta, beta)
    return {
        "total_distance": float(np.abs(np.diff(f)).sum()),
        "average_slope": float(f[-1] - f[0]),
        "argmax_location": float(t[np.argmax(f)]),
    }


def timeseries_sample(alpha, gamma, delta, N=TS_LENGTH, rng=None):
    """Noisy series ``y_i = f((i-1)/(N-1)) + eps_i`` and the noiseless summaries."""
    _check_ts_params(alpha, gamma, delta)
    if N < 2:
        raise SupportError("series length must be at least 2")
    rng = np.random.default_rng(rng)
    t = np.linspace(0.0, 1.0, N)
    series = ts_function(t, alpha, gamma, delta) + TS_NOISE_SD * rng.standard_normal(N)
    return series, ts_summaries(alpha, gamma, delta)


def timeseries_table(U, N=TS_LENGTH, rng=None):
    """Series (rows) and summary matrix for grid coordinates ``U`` (n x 3)."""
    rng = np.random.default_rng(rng)
    series, summaries = [], []
    for a, g, d in zip(*ts_params(np.atleast_2d(U))):
        s, summ = timeseries_sample(a, g, d, N, rng)
        series.append(s)
        summaries.append([summ[name] for name in TS_SUMMARIES])
    return np.array(series).reshape(-1, N), np.array(summaries).reshape(-1, len(TS_SUMMARIES))
