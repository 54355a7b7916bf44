"""Conjugate last layer: Matrix-Normal/Wishart regression on network features.

Given the design matrix ``Z`` (a leading column of ones, then the scaled last
hidden activations) and responses ``Y``, the last-layer parameters
``B = [b; W]`` ((h+1) x k) and noise covariance ``Sigma`` have priors

    Sigma^{-1} ~ Wishart(nu0, V0),    B | Sigma ~ MatrixNormal(0, Lambda0, Sigma)

and the conditional posterior is of the same form with

    Lambda_n = (Lambda0^{-1} + Z^T Z)^{-1}
    W_n      = Lambda_n Z^T Y
    V_n      = (V0^{-1} + (Y - Z W_n)^T (Y - Z W_n) + W_n^T Lambda0^{-1} W_n)^{-1}
    nu_n     = nu0 + n

All functions accept tensors so the collapsed evidence and posterior draws can
be differentiated with respect to ``Z`` (and through it the network weights).

Missing responses are handled column by column: each column is treated as its
own normal-inverse-gamma regression on the shared ``Z``, its missing block is
drawn from the resulting Student-t predictive, and the completed ``Y`` goes
through the ordinary update.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular as _trsolve

from . import dist
from . import ndiff as nd
from .exceptions import ContractError, DimensionError, NotPositiveDefiniteError, NumericalFailureError


@dataclass
class ConjugatePrior:
    dof: float
    scale: np.ndarray
    row_cov: np.ndarray

    def __post_init__(self):
        self.scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        self.row_cov = np.atleast_2d(np.asarray(self.row_cov, dtype=float))
        k = self.scale.shape[0]
        if self.dof <= k - 1:
            raise ValueError(f"prior dof must exceed {k - 1}")
        self.scale_inv = _spd_inverse(self.scale, "V0")
        self.row_prec = _spd_inverse(self.row_cov, "Lambda0")

    @property
    def k(self):
        return self.scale.shape[0]

    @property
    def p(self):
        """Number of design columns (h + 1)."""
        return self.row_cov.shape[0]

    @classmethod
    def default(cls, k, h):
        return cls(k + 2.0, np.eye(k) / (k + 2.0), np.eye(h + 1))

    def to_dict(self):
        return {"dof": self.dof, "scale": self.scale.tolist(), "row_cov": self.row_cov.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["dof"], np.array(d["scale"]), np.array(d["row_cov"]))


def _spd_inverse(M, name):
    try:
        L = nd.cholesky_factor(0.5 * (M + M.T))
    except NotPositiveDefiniteError as err:
        raise ValueError(f"{name} must be symmetric positive definite") from err
    Linv = _trsolve(L, np.eye(len(M)), lower=True)
    return Linv.T @ Linv


@dataclass
class ConjugatePosterior:
    """Posterior hyperparameters; precisions and factors are kept for reuse.

    ``row_prec = Lambda_n^{-1}`` with lower Cholesky factor ``row_prec_chol``;
    ``scale_inv = V_n^{-1}``.
    """

    dof: float
    mean: nd.Tensor
    row_prec: nd.Tensor
    row_prec_chol: nd.Tensor
    scale_inv: nd.Tensor
    n: int

    @property
    def row_cov(self):
        Linv = nd.solve_triangular(self.row_prec_chol, np.eye(self.row_prec.shape[0]))
        return nd.transpose(Linv) @ Linv

    @property
    def scale(self):
        return nd.inv(self.scale_inv)


def design_matrix(Z_features):
    """``[1, z / sqrt(h)]`` rows from last-layer activations (n x h)."""
    Z = nd.as_tensor(Z_features)
    n, h = Z.shape
    return nd.concat([np.ones((n, 1)), Z * (1.0 / np.sqrt(h))], axis=1)


def _failure(what, M):
    cond = float(np.linalg.cond(M.value)) if np.all(np.isfinite(M.value)) else float("inf")
    return NumericalFailureError(f"{what} is not positive definite", condition=cond)


def posterior_update(prior, Z, Y):
    """Conjugate posterior of ``(B, Sigma)`` given complete ``Y``."""
    Z, Y = nd.as_tensor(Z), nd.as_tensor(Y)
    if Y.ndim != 2 or Z.ndim != 2 or Z.shape[0] != Y.shape[0]:
        raise DimensionError(f"Z {Z.shape} and Y {Y.shape} do not conform")
    if Z.shape[1] != prior.p or Y.shape[1] != prior.k:
        raise DimensionError(f"Z {Z.shape} / Y {Y.shape} do not match prior (p={prior.p}, k={prior.k})")
    n = Z.shape[0]
    if n == 0:
        L = nd.Tensor(nd.cholesky_factor(prior.row_prec))
        return ConjugatePosterior(prior.dof, nd.Tensor(np.zeros((prior.p, prior.k))),
                                  nd.Tensor(prior.row_prec), L, nd.Tensor(prior.scale_inv), 0)
    Zt = nd.transpose(Z)
    A = prior.row_prec + Zt @ Z
    try:
        LA = nd.cholesky(A)
    except NotPositiveDefiniteError as err:
        raise _failure("Lambda_n^{-1}", A) from err
    W_hat = nd.solve_triangular(nd.transpose(LA), nd.solve_triangular(LA, Zt @ Y), lower=False)
    R = Y - Z @ W_hat
    Vinv = prior.scale_inv + nd.transpose(R) @ R + nd.transpose(W_hat) @ (prior.row_prec @ W_hat)
    Vinv = (Vinv + nd.transpose(Vinv)) * 0.5
    return ConjugatePosterior(prior.dof + n, W_hat, A, LA, Vinv, n)


def log_marginal(prior, Z, Y, post=None):
    """Collapsed evidence ``log p(Y | Z)`` with ``B`` and ``Sigma`` integrated out."""
    if post is None:
        post = posterior_update(prior, Z, Y)
    n, k = post.n, prior.k
    logdet_prior_rowcov = -np.linalg.slogdet(prior.row_prec)[1]
    logdet_post_rowcov = -2.0 * nd.sum(nd.log(nd.diag(post.row_prec_chol)))
    try:
        logdet_post_scale_inv = nd.logdet(post.scale_inv)
    except NotPositiveDefiniteError as err:
        raise _failure("V_n^{-1}", post.scale_inv) from err
    logdet_prior_scale_inv = np.linalg.slogdet(prior.scale_inv)[1]
    return (
        -0.5 * n * k * np.log(np.pi)
        + 0.5 * k * (logdet_post_rowcov - logdet_prior_rowcov)
        + 0.5 * prior.dof * logdet_prior_scale_inv
        - 0.5 * post.dof * logdet_post_scale_inv
        + (dist.mlgamma(k, post.dof / 2.0) - dist.mlgamma(k, prior.dof / 2.0))
    )


def sample_posterior(post, rng):
    """Draw ``(W, b, Sigma)``; pathwise in the posterior hyperparameters.

    ``Sigma^{-1} = U^{-T} B B^T U^{-1}`` with ``U U^T = V_n^{-1}`` and ``B`` a
    Bartlett factor, so ``Sigma = D D^T`` for ``D = U B^{-T}``; then
    ``[b; W] = W_n + L_A^{-T} E D^T`` where ``L_A L_A^T = Lambda_n^{-1}``.
    Returns ``W`` as (h x k), ``b`` as (k,).
    """
    k = post.scale_inv.shape[0]
    try:
        U = nd.cholesky(post.scale_inv)
    except NotPositiveDefiniteError as err:
        raise _failure("V_n^{-1}", post.scale_inv) from err
    B = dist.bartlett_factor(post.dof, k, rng).value
    D = U @ _trsolve(B, np.eye(k), lower=True).T
    Sigma = D @ nd.transpose(D)
    E = rng.standard_normal(post.mean.shape)
    coef = post.mean + nd.solve_triangular(nd.transpose(post.row_prec_chol), E, lower=False) @ nd.transpose(D)
    return coef[1:], coef[0], Sigma


def posterior_logpdf(post, W, b, Sigma):
    """Log-density of ``(W, b, Sigma)`` under the conditional posterior (Sigma-space)."""
    k = post.scale_inv.shape[0]
    Sigma = nd.as_tensor(Sigma)
    coef = nd.concat([nd.reshape(nd.as_tensor(b), (1, k)), nd.as_tensor(W)], axis=0)
    prec = nd.inv(Sigma)
    return (
        dist.wishart_logpdf(prec, post.dof, post.scale)
        - (k + 1.0) * nd.logdet(Sigma)
        + dist.matrix_normal_logpdf(coef, post.mean, post.row_cov, Sigma)
    )


def joint_logpdf(prior, Z, Y, W, b, Sigma):
    """Unnormalized ``log p(Y, B, Sigma | Z)``: likelihood times prior, Sigma-space."""
    k = prior.k
    Sigma = nd.as_tensor(Sigma)
    coef = nd.concat([nd.reshape(nd.as_tensor(b), (1, k)), nd.as_tensor(W)], axis=0)
    mean = nd.as_tensor(Z) @ coef
    lik = dist.mvn_logpdf(nd.as_tensor(Y), mean, nd.cholesky(Sigma))
    prec = nd.inv(Sigma)
    return (
        lik
        + dist.wishart_logpdf(prec, prior.dof, prior.scale)
        - (k + 1.0) * nd.logdet(Sigma)
        + dist.matrix_normal_logpdf(coef, np.zeros(coef.shape), prior.row_cov, Sigma)
    )


# missing responses -----------------------------------------------------------

def nig_priors_from(prior):
    """Per-column normal-inverse-gamma priors matched to the joint prior.

    Column ``j`` of ``B`` has prior covariance ``Sigma_jj * Lambda0`` and
    ``Sigma_jj ~ InvGamma((nu0 - k + 1) / 2, (V0^{-1})_jj / 2)``, its exact
    marginal under the Wishart prior.
    """
    a0 = (prior.dof - prior.k + 1.0) / 2.0
    return [dist.NIGParams(prior.row_prec, a0, prior.scale_inv[j, j] / 2.0) for j in range(prior.k)]


@dataclass
class ColumnPredictive:
    """Student-t predictive ``t_{dof}(loc, s2 (I + Zm A^{-1} Zm^T))`` in factored form.

    ``A = LA LA^T`` is the column's posterior precision. Draws and densities
    only need (h+1)-sized solves.
    """

    dof: float
    loc: nd.Tensor
    s2: object
    Z_miss: nd.Tensor
    LA: nd.Tensor

    @property
    def dim(self):
        return self.loc.shape[0]

    def to_params(self):
        G = nd.transpose(nd.solve_triangular(self.LA, nd.transpose(self.Z_miss)))
        shape = (np.eye(self.dim) + G @ nd.transpose(G)) * self.s2
        return dist.MvStudentTParams(self.dof, self.loc, shape)

    def sample(self, rng):
        m = self.dim
        if m == 0:
            return self.loc
        p = self.LA.shape[0]
        e1 = rng.standard_normal(m)
        e2 = rng.standard_normal((p, 1))
        lowrank = nd.reshape(self.Z_miss @ nd.solve_triangular(nd.transpose(self.LA), e2, lower=False), (m,))
        g = dist.gamma_sample(self.dof / 2.0, 0.5, rng, size=(1,))
        w = nd.sqrt(nd.as_tensor(self.s2) * (self.dof / g))
        return self.loc + (lowrank + e1) * w

    def logpdf(self, x):
        m = self.dim
        if m == 0:
            return nd.Tensor(0.0)
        r = nd.reshape(nd.as_tensor(x) - self.loc, (m, 1))
        # Woodbury / determinant lemma with C = I + Zm A^{-1} Zm^T
        A2 = self.LA @ nd.transpose(self.LA) + nd.transpose(self.Z_miss) @ self.Z_miss
        L2 = nd.cholesky(A2)
        u = nd.solve_triangular(L2, nd.transpose(self.Z_miss) @ r)
        quad = (nd.sum(nd.square(r)) - nd.sum(nd.square(u))) / self.s2
        logdet_C = 2.0 * (nd.sum(nd.log(nd.diag(L2))) - nd.sum(nd.log(nd.diag(self.LA))))
        nu = self.dof
        return (
            nd.lgamma(nd.Tensor((nu + m) / 2.0)) - nd.lgamma(nd.Tensor(nu / 2.0))
            - m / 2.0 * np.log(nu * np.pi)
            - 0.5 * m * nd.log(nd.as_tensor(self.s2)) - 0.5 * logdet_C
            - (nu + m) / 2.0 * nd.log(1.0 + quad / nu)
        )


def _nig_predictive(nig, Z_obs, y_obs, Z_miss):
    Z_obs, Z_miss = nd.as_tensor(Z_obs), nd.as_tensor(Z_miss)
    n_obs = Z_obs.shape[0]
    if n_obs == 0:
        A = nd.Tensor(_v(nig.precision))
        LA = nd.Tensor(nd.cholesky_factor(A.value))
        loc = nd.Tensor(np.zeros(Z_miss.shape[0]))
        return ColumnPredictive(2.0 * nig.a0, loc, nig.b0 / nig.a0, Z_miss, LA)
    y = nd.reshape(nd.as_tensor(y_obs), (n_obs, 1))
    Zt = nd.transpose(Z_obs)
    A = _v(nig.precision) + Zt @ Z_obs
    LA = nd.cholesky(A)
    m = nd.solve_triangular(nd.transpose(LA), nd.solve_triangular(LA, Zt @ y), lower=False)
    resid = y - Z_obs @ m
    a_n = nig.a0 + n_obs / 2.0
    b_n = nig.b0 + 0.5 * (nd.sum(nd.square(resid)) + nd.sum(m * (_v(nig.precision) @ m)))
    loc = nd.reshape(Z_miss @ m, (Z_miss.shape[0],))
    return ColumnPredictive(2.0 * a_n, loc, b_n / a_n, Z_miss, LA)


def _v(x):
    return x.value if isinstance(x, nd.Tensor) else np.asarray(x, dtype=float)


def columnwise_predictive(nig, Z_obs, y_obs, Z_miss):
    """Posterior predictive of one column's missing rows (multivariate Student-t).

    With ``A_n = P0 + Zo^T Zo``, ``m_n = A_n^{-1} Zo^T yo``, ``a_n = a0 + n/2`` and
    ``b_n = b0 + (yo^T yo - m_n^T A_n m_n)/2`` the predictive is
    ``t_{2 a_n}(Zm m_n, (b_n/a_n)(I + Zm A_n^{-1} Zm^T))``.
    """
    if nd.as_tensor(Z_obs).shape[0] == 0:
        raise ContractError("column has no observed entries")
    return _nig_predictive(nig, Z_obs, y_obs, Z_miss).to_params()


def prior_predictive(nig, Z_miss):
    """Student-t prior predictive of a column at the rows of ``Z_miss``."""
    return _nig_predictive(nig, np.zeros((0, nd.as_tensor(Z_miss).shape[1])), np.zeros(0), Z_miss).to_params()


def _scatter(values, rows, col, shape):
    out = np.zeros(shape)
    out[rows, col] = values.value
    return nd.node(out, [(values, lambda g: g[rows, col])])


def check_mask(mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise DimensionError("mask must be 2-D")
    empty = np.flatnonzero(~mask.any(axis=0))
    if empty.size:
        raise ContractError(f"output columns {empty.tolist()} are never observed")
    return mask


def impute_and_update(prior, nig_priors, Z, Y_partial, mask, rng, min_observed=2):
    """Fill missing responses from per-column predictives, then update.

    Returns ``(Y_filled, log_q_miss, posterior)`` where ``log_q_miss`` is the sum of
    the predictive log-densities of the drawn values. Columns with fewer than
    ``min_observed`` observations draw from their prior predictive.
    """
    mask = check_mask(mask)
    Z = nd.as_tensor(Z)
    Y0 = np.where(mask, np.nan_to_num(np.asarray(Y_partial, dtype=float)), 0.0)
    if mask.shape != Y0.shape or Z.shape[0] != Y0.shape[0]:
        raise DimensionError("Z, Y and mask do not conform")
    Y_filled = nd.Tensor(Y0)
    log_q = nd.Tensor(0.0)
    for j in range(Y0.shape[1]):
        miss = np.flatnonzero(~mask[:, j])
        if miss.size == 0:
            continue
        obs = np.flatnonzero(mask[:, j])
        if obs.size < min_observed:
            obs = obs[:0]
        pred = _nig_predictive(nig_priors[j], Z[obs], Y0[obs, j], Z[miss])
        draw = pred.sample(rng)
        log_q = log_q + pred.logpdf(draw)
        Y_filled = Y_filled + _scatter(draw, miss, j, Y0.shape)
    return Y_filled, log_q, posterior_update(prior, Z, Y_filled)
