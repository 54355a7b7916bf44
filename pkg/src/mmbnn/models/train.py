"""Stochastic variational training with a slope-test stopping rule."""

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .. import ndiff as nd
from ..exceptions import DivergenceError, NumericalFailureError
from .elbo import elbo


@dataclass
class FitConfig:
    learning_rate: float = 1e-2
    max_epochs: int = 5000
    n_mc: int = 1
    window: int = 50
    alpha: float = 0.05
    seed: int = 0
    steps_per_epoch: int = 1

    def __post_init__(self):
        for name in ("learning_rate", "max_epochs", "n_mc", "window", "steps_per_epoch"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.window < 3:
            raise ValueError("window must be at least 3 epochs for the slope test")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def to_dict(self):
        return asdict(self)


class Adam:
    """Adaptive moment estimation, minimizing; updates tensor values in place."""

    def __init__(self, params, lr=1e-2, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1.0 - b1 ** self.t, 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = grads.get(p)
            if g is None:
                continue
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.value = p.value - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def stop_rule(losses, window=50, alpha=0.05):
    """True when the last ``window`` losses show no significant downward trend.

    Fits ``loss ~ a + slope * epoch`` by least squares and tests ``slope >= 0``
    against ``slope < 0`` with a one-sided t-test at level ``alpha``.
    """
    y = np.asarray(losses[-window:], dtype=float)
    if len(y) < window:
        return False
    t = np.arange(window, dtype=float)
    t -= t.mean()
    slope = float(t @ (y - y.mean()) / (t @ t))
    resid = y - y.mean() - slope * t
    dof = window - 2
    s2 = float(resid @ resid) / dof
    if s2 <= 0.0:
        return not slope < 0.0
    t_stat = slope / np.sqrt(s2 / (t @ t))
    return bool(t_stat >= stats.t.ppf(alpha, dof))


def fit(state, config=None, objective=None, callback=None):
    """Maximize the ELBO of ``state`` in place; returns ``(state, losses)``.

    ``losses`` holds the mean negative ELBO of every epoch. ``objective`` may
    replace the default estimator (``objective(state, rng, n_mc)``).
    """
    config = config or FitConfig()
    objective = objective or elbo
    rng = np.random.default_rng(config.seed)
    params = state.parameters()
    opt = Adam(params, lr=config.learning_rate)
    losses = []
    for epoch in range(config.max_epochs):
        total = 0.0
        for _ in range(config.steps_per_epoch):
            try:
                value = objective(state, rng, config.n_mc)
            except NumericalFailureError as err:
                raise NumericalFailureError(f"epoch {epoch}: {err}") from err
            loss = -float(value.value)
            if not np.isfinite(loss):
                losses.append(float("nan"))
                raise DivergenceError(f"non-finite loss at epoch {epoch}", trace=losses)
            grads = nd.backward(-value)
            if not all(np.all(np.isfinite(grads[p])) for p in params if p in grads):
                losses.append(loss)
                raise DivergenceError(f"non-finite gradient at epoch {epoch}", trace=losses)
            opt.step(grads)
            total += loss
        losses.append(total / config.steps_per_epoch)
        if callback is not None:
            callback(epoch, losses[-1])
        if (epoch + 1) % config.window == 0 and stop_rule(losses, config.window, config.alpha):
            break
    return state, losses
