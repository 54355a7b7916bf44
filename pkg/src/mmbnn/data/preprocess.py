"""Standardization and PCA reduction fit on training rows only."""

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.decomposition import PCA
from sklearn.utils.validation import check_array, check_is_fitted

from ..exceptions import ContractError, DimensionError


class Standardizer(TransformerMixin, BaseEstimator):
    """Per-column ``(x - mean) / sd`` with statistics from the fitted rows.

    Parameters
    ----------
    names : sequence of str, optional
        Column names used in error messages.

    Attributes
    ----------
    mean_, scale_ : ndarray
        Training mean and (population) standard deviation per column.
    """

    def __init__(self, names=None):
        self.names = names

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=1)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        bad = np.flatnonzero(~(self.scale_ > 0))
        if bad.size:
            label = [self.names[i] for i in bad] if self.names is not None else bad.tolist()
            raise ContractError(f"zero standard deviation in column(s) {label}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self)
        return np.asarray(X, dtype=float) * self.scale_ + self.mean_

    def to_dict(self):
        return {"mean": self.mean_.tolist(), "scale": self.scale_.tolist()}

    @classmethod
    def from_dict(cls, d, names=None):
        out = cls(names)
        out.mean_ = np.array(d["mean"], dtype=float)
        out.scale_ = np.array(d["scale"], dtype=float)
        out.n_features_in_ = len(out.mean_)
        return out


@dataclass
class PCARecord:
    mean: np.ndarray
    components: np.ndarray
    n_components: int
    explained_variance_ratio: np.ndarray

    def to_dict(self):
        return {"mean": self.mean.tolist(), "components": self.components.tolist(),
                "n_components": self.n_components,
                "explained_variance_ratio": self.explained_variance_ratio.tolist()}

    @classmethod
    def from_dict(cls, d):
        k = len(d["mean"])
        comps = np.array(d["components"], dtype=float).reshape(k, d["n_components"])
        return cls(np.array(d["mean"], dtype=float), comps, int(d["n_components"]),
                   np.array(d["explained_variance_ratio"], dtype=float))


def pca_fit(Y, threshold=0.95):
    """Smallest set of leading components explaining ``threshold`` of the variance.

    ``components`` is (k x c) with orthonormal columns; the full ratio vector is
    kept for reporting.
    """
    Y = check_array(Y, ensure_min_samples=2)
    mean = Y.mean(axis=0)
    if not np.any(np.abs(Y - mean) > 0):
        warnings.warn("training data has zero variance; no components retained", RuntimeWarning)
        return PCARecord(mean, np.zeros((Y.shape[1], 0)), 0, np.zeros(0))
    pca = PCA(svd_solver="full").fit(Y)
    ratio = pca.explained_variance_ratio_
    c = int(np.searchsorted(np.cumsum(ratio), threshold - 1e-12) + 1)
    c = min(c, len(ratio))
    return PCARecord(mean, pca.components_[:c].T.copy(), c, ratio.copy())


def pca_project(record, Y):
    return (np.asarray(Y, dtype=float) - record.mean) @ record.components


def pca_reconstruct(record, coeffs):
    return np.asarray(coeffs, dtype=float) @ record.components.T + record.mean


class PCAReducer(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`pca_fit`."""

    def __init__(self, threshold=0.95):
        self.threshold = threshold

    def fit(self, Y, y=None):
        self.record_ = pca_fit(Y, self.threshold)
        self.n_components_ = self.record_.n_components
        self.n_features_in_ = self.record_.mean.shape[0]
        return self

    def transform(self, Y):
        check_is_fitted(self)
        return pca_project(self.record_, Y)

    def inverse_transform(self, C):
        check_is_fitted(self)
        return pca_reconstruct(self.record_, C)
