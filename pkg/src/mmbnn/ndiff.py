"""Reverse-mode differentiation over dense float64 arrays.

A :class:`Tensor` wraps a numpy array and, when it depends on a leaf created
with ``requires_grad=True``, records its parents together with a
vector-Jacobian product for each. :func:`backward` walks that graph once in
reverse topological order.

Only the operations the surrogate models need are provided. Elementwise
binary operations follow numpy broadcasting; matrix operations expect 2-D
operands.

Examples
--------
>>> x = Tensor([[1.0, 2.0]], requires_grad=True)
>>> y = sum(tanh(x @ Tensor([[1.0], [1.0]])))
>>> grads = backward(y)
>>> grads[x].shape
(1, 2)
"""

import numpy as np
from scipy import special
from scipy.linalg import lapack
from scipy.linalg import solve_triangular as _trsolve

from .exceptions import ContractError, DimensionError, NotPositiveDefiniteError

__all__ = [
    "Tensor", "as_tensor", "backward", "node",
    "add", "sub", "mul", "div", "neg", "power", "matmul", "transpose", "reshape",
    "sum", "mean", "exp", "log", "sqrt", "square", "tanh", "relu", "lgamma",
    "diag", "concat", "cholesky", "logdet", "solve", "solve_triangular", "inv",
]

SYMMETRY_RTOL = 1e-10


class Tensor:
    """Dense float64 array that optionally participates in a gradient graph."""

    __slots__ = ("value", "requires_grad", "grad", "_parents")
    __array_ufunc__ = None  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, value, requires_grad=False):
        self.value = np.array(value, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def size(self):
        return self.value.size

    @property
    def T(self):
        return transpose(self)

    @property
    def is_leaf(self):
        return not self._parents

    def numpy(self):
        return self.value

    def item(self):
        return self.value.item()

    def detach(self):
        return Tensor(self.value)

    def __float__(self):
        return float(self.value)

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.value!r}{flag})"

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __rtruediv__ = lambda self, other: div(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __rmatmul__ = lambda self, other: matmul(other, self)
    __neg__ = lambda self: neg(self)
    __pow__ = lambda self, p: power(self, p)
    __getitem__ = lambda self, idx: _getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None):
        return mean(self, axis=axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _value(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def node(value, parents):
    """Create a non-leaf tensor.

    ``parents`` is an iterable of ``(tensor, vjp)`` pairs where ``vjp`` maps
    the upstream gradient (shaped like ``value``) to the gradient contribution
    for that parent. Parents that do not require gradients are dropped.
    """
    out = Tensor.__new__(Tensor)
    out.value = np.asarray(value, dtype=np.float64)
    out.grad = None
    live = tuple((p, f) for p, f in parents if isinstance(p, Tensor) and p.requires_grad)
    out._parents = live
    out.requires_grad = bool(live)
    return out


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for p, _ in t._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Gradients of a scalar ``loss`` with respect to every reachable leaf.

    Returns a dict keyed by leaf tensor; each leaf's ``grad`` attribute is also
    set.
    """
    loss = as_tensor(loss)
    if loss.value.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    leaves = {}
    if not loss.requires_grad:
        return leaves
    grads = {id(loss): np.ones_like(loss.value)}
    for t in reversed(_toposort(loss)):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if not t._parents:
            t.grad = g
            leaves[t] = g
            continue
        for p, vjp in t._parents:
            pg = vjp(g)
            key = id(p)
            grads[key] = grads[key] + pg if key in grads else pg
    return leaves


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# elementwise ---------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return node(a.value + b.value, [
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: _unbroadcast(g, b.shape)),
    ])


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return node(a.value - b.value, [
        (a, lambda g: _unbroadcast(g, a.shape)),
        (b, lambda g: -_unbroadcast(g, b.shape)),
    ])


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return node(a.value * b.value, [
        (a, lambda g: _unbroadcast(g * b.value, a.shape)),
        (b, lambda g: _unbroadcast(g * a.value, b.shape)),
    ])


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.value / b.value
    return node(out, [
        (a, lambda g: _unbroadcast(g / b.value, a.shape)),
        (b, lambda g: _unbroadcast(-g * out / b.value, b.shape)),
    ])


def neg(a):
    a = as_tensor(a)
    return node(-a.value, [(a, lambda g: -g)])


def power(a, p):
    """``a ** p`` for a constant real exponent."""
    a = as_tensor(a)
    p = float(p)
    return node(a.value ** p, [(a, lambda g: g * p * a.value ** (p - 1.0))])


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.value)
    return node(out, [(a, lambda g: g * out)])


def log(a):
    a = as_tensor(a)
    return node(np.log(a.value), [(a, lambda g: g / a.value)])


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.value)
    return node(out, [(a, lambda g: 0.5 * g / out)])


def square(a):
    a = as_tensor(a)
    return node(a.value ** 2, [(a, lambda g: 2.0 * g * a.value)])


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.value)
    return node(out, [(a, lambda g: g * (1.0 - out * out))])


def relu(a):
    # subgradient at 0 is 0
    a = as_tensor(a)
    mask = a.value > 0
    return node(np.where(mask, a.value, 0.0), [(a, lambda g: g * mask)])


def lgamma(a):
    a = as_tensor(a)
    return node(special.gammaln(a.value), [(a, lambda g: g * special.digamma(a.value))])


# shape ---------------------------------------------------------------------

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy name
    a = as_tensor(a)
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.shape).copy()

    return node(out, [(a, vjp)])


def mean(a, axis=None):
    a = as_tensor(a)
    n = a.value.size if axis is None else a.shape[axis]
    return sum(a, axis=axis) * (1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    return node(a.value.reshape(shape), [(a, lambda g: g.reshape(a.shape))])


def transpose(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise DimensionError(f"transpose expects a 2-D array, got shape {a.shape}")
    return node(a.value.T, [(a, lambda g: g.T)])


def _getitem(a, idx):
    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, idx, g)
        return out

    return node(a.value[idx], [(a, vjp)])


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    parents = []
    for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
        sl = [slice(None)] * tensors[0].ndim
        sl[axis] = slice(lo, hi)
        parents.append((t, lambda g, sl=tuple(sl): g[sl]))
    return node(np.concatenate([t.value for t in tensors], axis=axis), parents)


def diag(a):
    """Diagonal of a square 2-D tensor as a 1-D tensor."""
    a = as_tensor(a)
    return node(np.diagonal(a.value).copy(), [(a, lambda g: np.diag(g))])


# linear algebra ------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    return node(a.value @ b.value, [
        (a, lambda g: g @ b.value.T),
        (b, lambda g: a.value.T @ g),
    ])


def _symmetrized(a):
    A = a.value
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise ContractError("matrix is not symmetric within tolerance")
    return 0.5 * (A + A.T)


def _sym(G):
    return 0.5 * (G + G.T)


def cholesky_factor(A):
    """Lower Cholesky factor of a symmetric numpy array (no graph)."""
    L, info = lapack.dpotrf(A, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return L


def cholesky(a):
    """Lower-triangular ``L`` with ``L @ L.T == (a + a.T) / 2``."""
    a = as_tensor(a)
    L = cholesky_factor(_symmetrized(a))

    def vjp(gL):
        P = np.tril(L.T @ gL)
        P[np.diag_indices_from(P)] *= 0.5
        X = _trsolve(L, P, lower=True, trans="T")
        S = _trsolve(L, X.T, lower=True, trans="T").T
        return _sym(S)

    return node(L, [(a, vjp)])


def logdet(a):
    """Log-determinant of a symmetric positive-definite matrix."""
    a = as_tensor(a)
    L = cholesky_factor(_symmetrized(a))
    val = 2.0 * np.log(np.diagonal(L)).sum()

    def vjp(g):
        Linv = _trsolve(L, np.eye(L.shape[0]), lower=True)
        return g * (Linv.T @ Linv)

    return node(val, [(a, vjp)])


def solve(a, b):
    """``a^{-1} b`` for symmetric positive-definite ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    L = cholesky_factor(_symmetrized(a))
    if b.shape[0] != L.shape[0]:
        raise DimensionError(f"solve: {a.shape} incompatible with {b.shape}")

    def _cho(B):
        return _trsolve(L, _trsolve(L, B, lower=True), lower=True, trans="T")

    X = _cho(b.value)
    cache = {}

    def gb(g):
        cache["g"], cache["G"] = g, _cho(g)
        return cache["G"]

    def ga(g):
        G = cache["G"] if cache.get("g") is g else _cho(g)
        G2, X2 = (G[:, None], X[:, None]) if X.ndim == 1 else (G, X)
        return -_sym(G2 @ X2.T)

    # b's vjp runs first (parents are visited in order) so its solve is reused
    return node(X, [(b, gb), (a, ga)])


def solve_triangular(L, b, lower=True):
    """``L^{-1} b`` using only the indicated triangle of ``L``."""
    L, b = as_tensor(L), as_tensor(b)
    Lv = L.value
    X = _trsolve(Lv, b.value, lower=lower)
    mask = np.tril if lower else np.triu

    def gb(g):
        return _trsolve(Lv, g, lower=lower, trans="T")

    def gL(g):
        G = gb(g)
        G2, X2 = (G[:, None], X[:, None]) if X.ndim == 1 else (G, X)
        return -mask(G2 @ X2.T)

    return node(X, [(b, gb), (L, gL)])


def inv(a):
    """Inverse of a symmetric positive-definite matrix."""
    a = as_tensor(a)
    return solve(a, np.eye(a.shape[0]))


# checking ------------------------------------------------------------------

def numerical_grad(fn, arrays, eps=1e-5):
    """Central finite differences of scalar ``fn(*arrays)`` w.r.t. each array.

    ``fn`` receives plain numpy arrays and must return something float-able.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(fn(*arrays))
            flat[i] = orig - eps
            lo = float(fn(*arrays))
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def gradcheck(fn, arrays, eps=1e-5):
    """Largest relative error between reverse-mode and finite-difference gradients.

    The error for each input is ``|analytic - fd| / (|fd| + 1e-8)`` in the
    Frobenius norm.
    """
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    grads = backward(fn(*leaves))
    fd = numerical_grad(lambda *xs: fn(*[Tensor(x) for x in xs]).value, arrays, eps)
    worst = 0.0
    for leaf, num in zip(leaves, fd):
        ana = grads.get(leaf, np.zeros_like(num))
        err = np.linalg.norm(ana - num) / (np.linalg.norm(num) + 1e-8)
        worst = max(worst, err)
    return worst
