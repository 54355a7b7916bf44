"""Point metrics, split aggregation and canonical correlation."""

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg

from .exceptions import NumericalFailureError

COV_RIDGE = 1e-8
CCA_RIDGE = 1e-10


def _as_samples(y_true, mu_samples):
    y = np.atleast_1d(np.asarray(y_true, dtype=float))
    S = np.asarray(mu_samples, dtype=float).reshape(-1, y.size)
    if S.shape[0] < 1:
        raise ValueError("need at least one sample")
    return y, S


def bias(y_true, mu_samples):
    """Euclidean distance between ``y_true`` and the mean of the ``mu`` draws."""
    y, S = _as_samples(y_true, mu_samples)
    return float(np.linalg.norm(y - S.mean(axis=0)))


def standardized_error(y_true, mu_samples, ridge=COV_RIDGE):
    """Root of the dimension-averaged Mahalanobis distance of ``y_true`` from the draws.

    ``sqrt(r' V^{-1} r / k)`` with ``r = y - mean`` and ``V`` the sample
    covariance of the draws, regularized by ``ridge * trace(V) / k`` on the
    diagonal.
    """
    y, S = _as_samples(y_true, mu_samples)
    k = y.size
    if S.shape[0] < 2:
        raise ValueError("standardized error needs at least two samples")
    r = y - S.mean(axis=0)
    V = np.atleast_2d(np.cov(S, rowvar=False))
    V = V + ridge * np.trace(V) / k * np.eye(k)
    try:
        c = linalg.cho_factor(V, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalFailureError("sample covariance is singular after regularization",
                                    np.linalg.cond(V)) from exc
    return float(np.sqrt(r @ linalg.cho_solve(c, r) / k))


def _whiten(A, ridge):
    A = np.asarray(A, dtype=float)
    A = A.reshape(len(A), -1)
    sd = A.std(axis=0)
    if np.any(sd == 0):
        raise NumericalFailureError("canonical correlation input has a constant column")
    A = (A - A.mean(axis=0)) / sd
    C = A.T @ A / len(A) + ridge * np.eye(A.shape[1])
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError("covariance is rank deficient beyond the ridge",
                                    np.linalg.cond(C)) from exc
    return linalg.solve_triangular(L, A.T, lower=True).T


def canonical_correlation(X, Y, ridge=CCA_RIDGE):
    """Largest canonical correlation between the columns of ``X`` and ``Y``.

    Columns are standardized, each covariance gets ``ridge`` on its diagonal,
    and the answer is the top singular value of the whitened cross-covariance.
    """
    if len(X) != len(Y):
        raise ValueError("X and Y need the same number of rows")
    Xw, Yw = _whiten(X, ridge), _whiten(Y, ridge)
    s = np.linalg.svd(Xw.T @ Yw / len(Xw), compute_uv=False)
    return float(min(s[0], 1.0))


@dataclass
class MetricsRecord:
    point: int
    label: str
    bias: float
    standardized_error: float

    def to_dict(self):
        return asdict(self)


def point_metrics(Y_true, samples, labels):
    """One record per evaluation point; ``samples`` is (n_points, n_samples, k)."""
    Y_true = np.asarray(Y_true, dtype=float).reshape(len(samples), -1)
    return [MetricsRecord(i, getattr(l, "value", l), bias(y, s), standardized_error(y, s))
            for i, (y, s, l) in enumerate(zip(Y_true, samples, labels))]


def aggregate(records, splits=("Sample", "InHull", "OutOfHull")):
    """Mean and median of each metric per split label.

    Splits without records are left out and listed under ``"empty"``.
    """
    out, empty = {}, []
    for split in splits:
        rows = [r for r in records if _get(r, "label") == split]
        if not rows:
            empty.append(split)
            continue
        b = np.array([_get(r, "bias") for r in rows])
        e = np.array([_get(r, "standardized_error") for r in rows])
        # fsum is correctly rounded, so the result does not depend on record order
        out[split] = {"n": len(rows), "bias_mean": math.fsum(b) / len(b), "bias_median": float(np.median(b)),
                      "se_mean": math.fsum(e) / len(e), "se_median": float(np.median(e))}
    if empty:
        out["empty"] = empty
    return out


def _get(record, key):
    return record[key] if isinstance(record, dict) else getattr(record, key)
