"""Scikit-learn style wrappers around the functional model API.

Inputs are standardized with the main modality's training statistics (the
modalities share one input space) and every response with its own training
statistics; predictions come back in original units.
"""

import json

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..data.preprocess import Standardizer
from .predict import DEFAULT_SAMPLES, predict
from .state import (JointModelState, LayeredModelState, Modality, UnimodalState,
                    state_from_dict, state_to_dict)
from .train import FitConfig, fit


def _seeds(random_state):
    seq = np.random.SeedSequence(random_state)
    init, train, pred = (int(s.generate_state(1)[0]) for s in seq.spawn(3))
    return init, train, pred


class _BaseBNN(RegressorMixin, BaseEstimator):
    _state_type = None

    def __init__(self, hidden=(64, 64), activation="tanh", learning_rate=1e-2, max_epochs=5000,
                 n_mc=1, window=50, alpha=0.05, steps_per_epoch=1, n_samples=DEFAULT_SAMPLES,
                 standardize=True, random_state=None):
        self.hidden = hidden
        self.activation = activation
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.n_mc = n_mc
        self.window = window
        self.alpha = alpha
        self.steps_per_epoch = steps_per_epoch
        self.n_samples = n_samples
        self.standardize = standardize
        self.random_state = random_state

    def _scaler(self, A):
        if self.standardize:
            return Standardizer().fit(A)
        return Standardizer.from_dict({"mean": np.zeros(A.shape[1]).tolist(),
                                       "scale": np.ones(A.shape[1]).tolist()})

    def _prepare(self, X, y, auxiliary):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._y_1d = np.ndim(y) == 1
        Y = y[:, None] if self._y_1d else y
        self.n_features_in_ = X.shape[1]
        self.x_scaler_ = self._scaler(X)
        self.y_scaler_ = self._scaler(Y)
        main = Modality(self.x_scaler_.transform(X), self.y_scaler_.transform(Y), "main")
        aux, self.aux_scalers_, self.aux_names_ = [], [], []
        for i, item in enumerate(auxiliary or []):
            Xa, ya = item[0], item[1]
            name = item[2] if len(item) > 2 else f"aux{i + 1}"
            Xa, ya = check_X_y(Xa, ya, multi_output=True, y_numeric=True)
            if Xa.shape[1] != X.shape[1]:
                raise ValueError(f"auxiliary modality {name!r} has {Xa.shape[1]} input columns, "
                                 f"expected {X.shape[1]}")
            Ya = ya[:, None] if ya.ndim == 1 else ya
            sc = self._scaler(Ya)
            self.aux_scalers_.append(sc)
            self.aux_names_.append(name)
            aux.append(Modality(self.x_scaler_.transform(Xa), sc.transform(Ya), name))
        return main, aux

    def _config(self, seed):
        return FitConfig(self.learning_rate, self.max_epochs, self.n_mc, self.window, self.alpha,
                         seed, self.steps_per_epoch)

    def fit(self, X, y, auxiliary=None):
        """Fit on main data ``(X, y)`` plus optional ``[(X_m, y_m[, name]), ...]``."""
        main, aux = self._prepare(X, y, auxiliary)
        init_seed, train_seed, self._predict_seed = _seeds(self.random_state)
        state = self._build(main, aux, np.random.default_rng(init_seed))
        self.state_, self.loss_curve_ = fit(state, self._config(train_seed))
        self.n_epochs_ = len(self.loss_curve_)
        return self

    def sample_predictive(self, X, n_samples=None, rng=None):
        """Posterior draws of the main-modality mean, shape (n, n_samples, k), original units."""
        check_is_fitted(self, "state_")
        X = check_array(X)
        rng = self._predict_seed if rng is None else rng
        pred = predict(self.state_, self.x_scaler_.transform(X), n_samples or self.n_samples, rng)
        return pred.samples * self.y_scaler_.scale_ + self.y_scaler_.mean_

    def predict(self, X):
        mean = self.sample_predictive(X).mean(axis=1)
        return mean[:, 0] if self._y_1d else mean

    # checkpoints ------------------------------------------------------------

    def save(self, path):
        check_is_fitted(self, "state_")
        extra = {"estimator": type(self).__name__, "params": _jsonable(self.get_params()),
                 "x_scaler": self.x_scaler_.to_dict(), "y_scaler": self.y_scaler_.to_dict(),
                 "aux_scalers": [s.to_dict() for s in self.aux_scalers_], "aux_names": self.aux_names_,
                 "y_1d": self._y_1d, "predict_seed": self._predict_seed, "loss_curve": self.loss_curve_}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(state_to_dict(self.state_, extra), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        extra = d["extra"]
        if extra.get("estimator") != cls.__name__:
            raise ValueError(f"checkpoint holds a {extra.get('estimator')}, not a {cls.__name__}")
        params = dict(extra["params"])
        params["hidden"] = tuple(params["hidden"])
        est = cls(**params)
        est.state_ = state_from_dict(d)
        est.x_scaler_ = Standardizer.from_dict(extra["x_scaler"])
        est.y_scaler_ = Standardizer.from_dict(extra["y_scaler"])
        est.aux_scalers_ = [Standardizer.from_dict(s) for s in extra["aux_scalers"]]
        est.aux_names_ = list(extra["aux_names"])
        est._y_1d = extra["y_1d"]
        est._predict_seed = extra["predict_seed"]
        est.loss_curve_ = list(extra["loss_curve"])
        est.n_epochs_ = len(est.loss_curve_)
        est.n_features_in_ = est.x_scaler_.n_features_in_
        return est


def _jsonable(params):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in params.items()}


class UnimodalBNN(_BaseBNN):
    """Single network on the main modality with a conjugate last layer."""

    def _build(self, main, aux, rng):
        if aux:
            raise ValueError("UnimodalBNN does not use auxiliary modalities")
        return UnimodalState.build(main, self.hidden, self.activation, rng)


class JointBNN(_BaseBNN):
    """One network emitting every modality; unobserved outputs are imputed."""

    def _build(self, main, aux, rng):
        return JointModelState.build(main, aux, self.hidden, self.activation, rng)

    def sample_modalities(self, X, n_samples=None, rng=None):
        """Draws of every modality block in original units, keyed by name."""
        check_is_fitted(self, "state_")
        rng = self._predict_seed if rng is None else rng
        pred = predict(self.state_, self.x_scaler_.transform(check_array(X)), n_samples or self.n_samples, rng)
        scalers = [self.y_scaler_] + self.aux_scalers_
        return {name: pred.block(name) * sc.scale_ + sc.mean_ for name, sc in zip(pred.slices, scalers)}


class LayeredBNN(_BaseBNN):
    """Auxiliary surrogates feed their sampled means into the main network."""

    def _build(self, main, aux, rng):
        return LayeredModelState.build(main, aux, self.hidden, self.activation, rng)


ESTIMATORS = {"unimodal": UnimodalBNN, "joint": JointBNN, "layered": LayeredBNN}
