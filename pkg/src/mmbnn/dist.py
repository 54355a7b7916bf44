"""Log-densities and samplers for the distributions used by the models.

Every function accepts plain arrays or :class:`~mmbnn.ndiff.Tensor` objects
and returns tensors, so densities and samples can sit inside a gradient graph.
Samplers take an explicit ``numpy.random.Generator``; nothing here touches
global random state.

Sampling is pathwise wherever a location-scale form exists. Gamma draws use
implicit reparameterization (the derivative of the sample with respect to
its shape is obtained by differentiating the CDF), and the Wishart and
Student-t samplers are built on top of it.
"""

from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import special

from . import ndiff as nd
from .exceptions import DomainError, NotPositiveDefiniteError, SupportError

LOG_2PI = np.log(2.0 * np.pi)


def _v(x):
    return x.value if isinstance(x, nd.Tensor) else np.asarray(x, dtype=np.float64)


def mlgamma(k, x):
    """Log of the multivariate gamma function Gamma_k(x).

    ``log Gamma_k(x) = k(k-1)/4 log(pi) + sum_{j=1..k} log Gamma(x + (1-j)/2)``.
    Accepts a tensor ``x`` (differentiable) or a float.
    """
    k = int(k)
    if np.any(_v(x) <= (k - 1) / 2.0):
        raise DomainError(f"mlgamma needs x > {(k - 1) / 2}, got {_v(x)}")
    const = k * (k - 1) / 4.0 * np.log(np.pi)
    if isinstance(x, nd.Tensor):
        terms = [nd.lgamma(x + (1.0 - j) / 2.0) for j in range(1, k + 1)]
        out = terms[0]
        for t in terms[1:]:
            out = out + t
        return out + const
    x = float(x)
    return const + float(np.sum(special.gammaln(x + (1.0 - np.arange(1, k + 1)) / 2.0)))


# log-densities ---------------------------------------------------------------

def normal_logpdf(x, mean=0.0, scale=1.0):
    """Sum of independent univariate normal log-densities."""
    x = nd.as_tensor(x)
    z = (x - mean) / scale
    n = x.size
    out = -0.5 * nd.sum(nd.square(z)) - 0.5 * n * LOG_2PI
    if isinstance(scale, nd.Tensor) or np.ndim(scale) > 0:
        return out - nd.sum(nd.log(nd.as_tensor(scale) * np.ones(x.shape)))
    return out - n * np.log(scale)


def mvn_logpdf(x, mean, scale_tril):
    """Sum over rows of ``x`` (n x k) of N(row | mean, L L^T) log-densities."""
    x, L = nd.as_tensor(x), nd.as_tensor(scale_tril)
    if x.ndim == 1:
        x = nd.reshape(x, (1, x.shape[0]))
    n, k = x.shape
    r = x - mean
    z = nd.solve_triangular(L, nd.transpose(r))
    half_logdet = nd.sum(nd.log(nd.diag(L)))
    return -0.5 * nd.sum(nd.square(z)) - n * half_logdet - 0.5 * n * k * LOG_2PI


def gamma_logpdf(x, shape, rate):
    """Sum of Gamma(shape, rate) log-densities (rate parameterization)."""
    if np.any(_v(x) <= 0):
        raise SupportError("gamma density needs positive values")
    x = nd.as_tensor(x)
    shape = nd.as_tensor(shape) * np.ones(x.shape)
    rate = nd.as_tensor(rate) * np.ones(x.shape)
    terms = (shape - 1.0) * nd.log(x) - rate * x + shape * nd.log(rate) - nd.lgamma(shape)
    return nd.sum(terms)


def wishart_logpdf(X, dof, scale):
    """Wishart(dof, scale) log-density at the SPD matrix ``X``."""
    X, V = nd.as_tensor(X), nd.as_tensor(scale)
    k = X.shape[0]
    try:
        logdet_x = nd.logdet(X)
    except NotPositiveDefiniteError as err:
        raise SupportError("Wishart argument must be positive definite") from err
    trace = nd.sum(nd.diag(nd.solve(V, X)))
    return (
        (dof - k - 1.0) / 2.0 * logdet_x
        - 0.5 * trace
        - dof * k / 2.0 * np.log(2.0)
        - dof / 2.0 * nd.logdet(V)
        - mlgamma(k, dof / 2.0 if not isinstance(dof, nd.Tensor) else dof * 0.5)
    )


def matrix_normal_logpdf(X, mean, row_cov, col_cov):
    """MatrixNormal(mean, row_cov, col_cov) log-density of an n x k matrix."""
    X = nd.as_tensor(X)
    n, k = X.shape
    R = X - mean
    Ur = nd.solve(row_cov, R)
    quad = nd.sum(nd.diag(nd.solve(col_cov, nd.transpose(R) @ Ur)))
    return (
        -0.5 * quad
        - 0.5 * n * k * LOG_2PI
        - 0.5 * k * nd.logdet(row_cov)
        - 0.5 * n * nd.logdet(col_cov)
    )


def mvt_logpdf(x, dof, loc, shape):
    """Multivariate Student-t log-density of a vector ``x``."""
    x = nd.as_tensor(x)
    p = x.shape[0]
    if p == 0:
        return nd.Tensor(0.0)
    L = nd.cholesky(shape)
    r = nd.reshape(x - loc, (p, 1))
    delta = nd.sum(nd.square(nd.solve_triangular(L, r)))
    half_dof = dof * 0.5
    return (
        nd.lgamma(nd.as_tensor(half_dof) + p / 2.0)
        - nd.lgamma(nd.as_tensor(half_dof))
        - p / 2.0 * nd.log(nd.as_tensor(dof) * np.pi)
        - nd.sum(nd.log(nd.diag(L)))
        - (nd.as_tensor(dof) + p) * 0.5 * nd.log(1.0 + delta / dof)
    )


# samplers ------------------------------------------------------------------

def normal_sample(mean, scale, rng):
    """Location-scale draw ``mean + scale * eps``."""
    eps = rng.standard_normal(np.broadcast(_v(mean), _v(scale)).shape)
    return mean + nd.as_tensor(scale) * eps


def _dcdf_dshape(x, a):
    # d/da of the regularized lower incomplete gamma P(a, x), by Richardson-
    # extrapolated central differences; the upper function is used in the right
    # tail where P is close to 1.
    upper = x > a
    h = 1e-4 * np.maximum(a, 1.0)

    def central(step):
        lo_p = special.gammainc(a - step, x)
        hi_p = special.gammainc(a + step, x)
        lo_q = special.gammaincc(a - step, x)
        hi_q = special.gammaincc(a + step, x)
        return np.where(upper, -(hi_q - lo_q), hi_p - lo_p) / (2.0 * step)

    return (4.0 * central(h / 2.0) - central(h)) / 3.0


def _gamma_pdf(x, a):
    return np.exp((a - 1.0) * np.log(x) - x - special.gammaln(a))


def gamma_sample(shape, rate, rng, size=None):
    """Gamma(shape, rate) draws with implicit reparameterization gradients.

    ``d sample / d shape = -(dF/dshape) / f`` for the standard gamma CDF ``F``
    and density ``f``; ``d sample / d rate = -sample / rate``.
    """
    a = _v(shape)
    if np.any(a <= 0) or np.any(_v(rate) <= 0):
        raise SupportError("gamma shape and rate must be positive")
    if size is None:
        size = np.broadcast(a, _v(rate)).shape
    a_full = np.broadcast_to(a, size)
    std = rng.standard_gamma(a_full)
    std = np.maximum(std, np.finfo(float).tiny)
    shape_t = nd.as_tensor(shape)
    if shape_t.requires_grad:
        dx_da = -_dcdf_dshape(std, a_full) / _gamma_pdf(std, a_full)

        def vjp(g):
            return _unbroadcast_to(g * dx_da, shape_t.shape)

        std_t = nd.node(std, [(shape_t, vjp)])
    else:
        std_t = nd.Tensor(std)
    return std_t / rate


def _unbroadcast_to(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def bartlett_factor(dof, k, rng):
    """Lower-triangular ``B`` with ``B B^T ~ Wishart(dof, I_k)``.

    Diagonal entries are square roots of chi-square(dof - i) draws (i = 0..k-1),
    drawn through :func:`gamma_sample` so ``dof`` may carry a gradient.
    """
    dof_t = nd.as_tensor(dof)
    shapes = (dof_t - np.arange(k, dtype=float)) * 0.5
    chi2 = gamma_sample(shapes, 0.5, rng)
    below = np.tril(rng.standard_normal((k, k)), -1)
    return nd.add(below, _diag_embed(nd.sqrt(chi2), k))


def _diag_embed(v, k):
    v = nd.as_tensor(v)
    return nd.node(np.diag(v.value), [(v, lambda g: np.diagonal(g).copy())])


def wishart_sample(dof, scale_factor, rng):
    """Wishart draw ``R B B^T R^T`` given any ``R`` with ``R R^T = scale``."""
    R = nd.as_tensor(scale_factor)
    k = R.shape[0]
    if _v(dof) <= k - 1:
        raise SupportError(f"Wishart dof must exceed {k - 1}")
    RB = R @ bartlett_factor(dof, k, rng)
    return RB @ nd.transpose(RB)


def matrix_normal_sample(mean, row_factor, col_factor, rng):
    """``mean + A E B^T`` with ``A A^T = row_cov`` and ``B B^T = col_cov``."""
    M = nd.as_tensor(mean)
    E = rng.standard_normal(M.shape)
    return M + nd.as_tensor(row_factor) @ E @ nd.transpose(nd.as_tensor(col_factor))


def mvt_sample(dof, loc, shape_tril, rng):
    """Student-t draw ``loc + L z sqrt(dof / g)`` with ``g ~ chi-square(dof)``."""
    loc = nd.as_tensor(loc)
    p = loc.shape[0]
    if p == 0:
        return loc
    z = rng.standard_normal((p, 1))
    g = gamma_sample(nd.as_tensor(dof) * 0.5, 0.5, rng, size=(1,))
    w = nd.sqrt(nd.as_tensor(dof) / g)
    step = nd.reshape(nd.as_tensor(shape_tril) @ z, (p,))
    return loc + step * w


# parameter containers --------------------------------------------------------

def _check_spd(M, what):
    try:
        nd.cholesky_factor(0.5 * (_v(M) + _v(M).T))
    except NotPositiveDefiniteError as err:
        raise SupportError(f"{what} must be symmetric positive definite") from err


@dataclass
class GaussianParams:
    """Independent normals (``scale``) or a multivariate normal (``scale_tril``)."""

    mean: Any
    scale: Any = None
    scale_tril: Any = None

    def __post_init__(self):
        if (self.scale is None) == (self.scale_tril is None):
            raise SupportError("give exactly one of scale or scale_tril")
        if self.scale is not None and np.any(_v(self.scale) < 0):
            raise SupportError("scale must be non-negative")
        if self.scale_tril is not None and np.any(np.diagonal(_v(self.scale_tril)) <= 0):
            raise SupportError("scale_tril needs a positive diagonal")

    def logpdf(self, x):
        if self.scale is not None:
            return normal_logpdf(x, self.mean, self.scale)
        return mvn_logpdf(x, self.mean, self.scale_tril)

    def sample(self, rng):
        if self.scale is not None:
            return normal_sample(self.mean, self.scale, rng)
        mean = nd.as_tensor(self.mean)
        eps = rng.standard_normal((mean.shape[-1], 1))
        return mean + nd.reshape(nd.as_tensor(self.scale_tril) @ eps, mean.shape)


@dataclass
class GammaParams:
    shape: Any
    rate: Any = 1.0

    def __post_init__(self):
        if np.any(_v(self.shape) <= 0) or np.any(_v(self.rate) <= 0):
            raise SupportError("gamma shape and rate must be positive")

    def logpdf(self, x):
        return gamma_logpdf(x, self.shape, self.rate)

    def sample(self, rng, size=None):
        return gamma_sample(self.shape, self.rate, rng, size=size)


@dataclass
class WishartParams:
    dof: Any
    scale: Any

    def __post_init__(self):
        k = _v(self.scale).shape[0]
        if _v(self.dof) <= k - 1:
            raise SupportError(f"Wishart dof must exceed {k - 1}")
        _check_spd(self.scale, "Wishart scale")

    def logpdf(self, X):
        return wishart_logpdf(X, self.dof, self.scale)

    def sample(self, rng):
        return wishart_sample(self.dof, nd.cholesky(self.scale), rng)


@dataclass
class MatrixNormalParams:
    mean: Any
    row_cov: Any
    col_cov: Any

    def __post_init__(self):
        _check_spd(self.row_cov, "row covariance")
        _check_spd(self.col_cov, "column covariance")

    def logpdf(self, X):
        return matrix_normal_logpdf(X, self.mean, self.row_cov, self.col_cov)

    def sample(self, rng):
        return matrix_normal_sample(
            self.mean, nd.cholesky(self.row_cov), nd.cholesky(self.col_cov), rng)


@dataclass
class MvStudentTParams:
    dof: Any
    loc: Any
    shape: Any

    def __post_init__(self):
        if _v(self.dof) <= 0:
            raise SupportError("Student-t dof must be positive")
        if _v(self.loc).shape[0] > 0:
            _check_spd(self.shape, "Student-t shape matrix")

    @property
    def dim(self):
        return _v(self.loc).shape[0]

    def logpdf(self, x):
        return mvt_logpdf(x, self.dof, self.loc, self.shape)

    def sample(self, rng):
        if self.dim == 0:
            return nd.as_tensor(self.loc)
        return mvt_sample(self.dof, self.loc, nd.cholesky(self.shape), rng)


@dataclass
class NIGParams:
    """Normal-inverse-gamma prior for one regression column.

    ``w | s2 ~ N(0, s2 * cov)`` and ``s2 ~ InvGamma(a0, b0)``; ``precision`` is
    ``cov^{-1}``.
    """

    precision: Any
    a0: float
    b0: float

    def __post_init__(self):
        if self.a0 <= 0 or self.b0 <= 0:
            raise SupportError("NIG a0 and b0 must be positive")
        _check_spd(self.precision, "NIG precision")


def logpdf(params, value):
    return params.logpdf(value)


def sample(params, rng):
    return params.sample(rng)
