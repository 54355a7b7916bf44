"""Sample / in-hull / out-of-hull labels for evaluation points."""

import enum

import numpy as np
from scipy.optimize import linprog

HULL_TOL = 1e-9


class SplitLabel(str, enum.Enum):
    SAMPLE = "Sample"
    IN_HULL = "InHull"
    OUT_OF_HULL = "OutOfHull"


def in_hull(points, x, tol=HULL_TOL):
    """Whether ``x`` is a convex combination of the rows of ``points`` (LP feasibility)."""
    P = np.asarray(points, dtype=float)
    n = len(P)
    A_eq = np.vstack([P.T, np.ones((1, n))])
    b_eq = np.append(np.asarray(x, dtype=float), 1.0)
    res = linprog(np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": tol})
    return res.status == 0


def hull_split(main_train_X, eval_X, tol=HULL_TOL):
    """Label each evaluation row relative to the main-modality training inputs.

    Rows equal to a training input are ``SAMPLE``. If the training inputs do not
    span the input space every other row is ``OUT_OF_HULL``.
    """
    P = np.atleast_2d(np.asarray(main_train_X, dtype=float))
    E = np.atleast_2d(np.asarray(eval_X, dtype=float))
    train = {tuple(r) for r in P}
    lo, hi = P.min(axis=0) - tol, P.max(axis=0) + tol
    full_dim = np.linalg.matrix_rank(P - P.mean(axis=0)) == P.shape[1]
    labels = []
    for x in E:
        if tuple(x) in train:
            labels.append(SplitLabel.SAMPLE)
        elif full_dim and np.all(x >= lo) and np.all(x <= hi) and in_hull(P, x, tol):
            labels.append(SplitLabel.IN_HULL)
        else:
            labels.append(SplitLabel.OUT_OF_HULL)
    return np.array(labels, dtype=object)
