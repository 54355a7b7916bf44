import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmbnn import ndiff as nd
from mmbnn.exceptions import ContractError, DimensionError, NotPositiveDefiniteError


def random_spd(rng, k):
    A = rng.normal(size=(k, k))
    return A @ A.T + k * np.eye(k)


# -- matmul -------------------------------------------------------------------

def test_matmul_identity():
    out = nd.matmul(np.eye(2), [[1.0], [2.0]])
    np.testing.assert_array_equal(out.value, [[1.0], [2.0]])


def test_matmul_hand_arithmetic():
    out = nd.Tensor([[1.0, 2.0], [3.0, 4.0]]) @ nd.Tensor([[1.0], [1.0]])
    np.testing.assert_array_equal(out.value, [[3.0], [7.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        nd.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_matmul_grad_of_sum_is_broadcast_transpose():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    a = nd.Tensor(A, requires_grad=True)
    grads = nd.backward(nd.sum(a @ B))
    np.testing.assert_allclose(grads[a], np.ones((3, 2)) @ B.T)
    assert nd.gradcheck(lambda x, y: nd.sum(x @ y), [A, B]) < 1e-5


# -- activations --------------------------------------------------------------

def test_tanh_at_zero():
    x = nd.Tensor([0.0], requires_grad=True)
    y = nd.tanh(x)
    assert y.value[0] == 0.0
    assert nd.backward(nd.sum(y))[x][0] == 1.0


def test_relu_negative_and_subgradient_at_zero():
    x = nd.Tensor([-3.0, 0.0, 2.0], requires_grad=True)
    y = nd.relu(x)
    np.testing.assert_array_equal(y.value, [0.0, 0.0, 2.0])
    np.testing.assert_array_equal(nd.backward(nd.sum(y))[x], [0.0, 0.0, 1.0])


def test_tanh_derivative_matches_fd():
    x = nd.Tensor([1.0], requires_grad=True)
    ana = nd.backward(nd.sum(nd.tanh(x)))[x][0]
    fd = (np.tanh(1 + 1e-6) - np.tanh(1 - 1e-6)) / 2e-6
    assert abs(ana - fd) < 1e-6


# -- cholesky / logdet / solve ------------------------------------------------

def test_cholesky_identity():
    np.testing.assert_array_equal(nd.cholesky(np.eye(3)).value, np.eye(3))


def test_cholesky_hand():
    L = nd.cholesky([[4.0, 2.0], [2.0, 3.0]]).value
    np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, np.sqrt(2.0)]], rtol=1e-15)


def test_cholesky_reconstruction_random_spd():
    A = random_spd(np.random.default_rng(1), 5)
    L = nd.cholesky(A).value
    assert np.linalg.norm(L @ L.T - A) / np.linalg.norm(A) < 1e-12


def test_cholesky_not_pd_reports_pivot():
    A = np.diag([1.0, 2.0, -1.0])
    with pytest.raises(NotPositiveDefiniteError) as err:
        nd.cholesky(A)
    assert err.value.pivot == 2


def test_cholesky_rejects_asymmetric():
    with pytest.raises(ContractError):
        nd.cholesky([[2.0, 1.0], [0.0, 2.0]])


def test_logdet_values():
    assert nd.logdet(np.eye(4)).value == 0.0
    assert np.isclose(nd.logdet(np.diag([2.0, 3.0])).value, np.log(6.0), rtol=1e-14)


def test_solve_residual():
    rng = np.random.default_rng(2)
    A, B = random_spd(rng, 6), rng.normal(size=(6, 3))
    X = nd.solve(A, B).value
    assert np.linalg.norm(A @ X - B) / np.linalg.norm(B) < 1e-10


def test_backward_rejects_non_scalar():
    x = nd.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        nd.backward(x * 2.0)


# -- finite-difference suite over every primitive ------------------------------

def _sym_input(S):
    # FD perturbations must keep matrix inputs symmetric: parameterize by a free
    # matrix M and feed (M + M^T)/2 + shift.
    return lambda M: nd.add(nd.mul(nd.add(M, nd.transpose(M)), 0.5), S)


def primitive_cases():
    rng = np.random.default_rng(3)
    A, B = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    v = rng.uniform(0.5, 2.0, size=(3, 4))
    S = random_spd(rng, 4)
    sym = _sym_input(S)
    R = rng.normal(size=(4, 3))
    Ltri = np.tril(rng.normal(size=(4, 4))) + 4 * np.eye(4)
    W = rng.normal(size=(4, 4)) * 0.1
    return {
        "add": (lambda a, b: nd.sum(nd.tanh(a + b)), [A, rng.normal(size=(1, 4))]),
        "sub": (lambda a, b: nd.sum(nd.tanh(a - b)), [A, rng.normal(size=(3, 1))]),
        "mul": (lambda a, b: nd.sum(a * b), [A, v]),
        "div": (lambda a, b: nd.sum(a / b), [A, v]),
        "neg": (lambda a: nd.sum(nd.tanh(-a)), [A]),
        "power": (lambda a: nd.sum(a ** 3.0), [v]),
        "matmul": (lambda a, b: nd.sum(nd.tanh(a @ b)), [A, B]),
        "transpose": (lambda a: nd.sum(nd.tanh(nd.transpose(a)) * R), [A]),
        "reshape": (lambda a: nd.sum(nd.tanh(nd.reshape(a, (4, 3))) * R), [A]),
        "sum_axis": (lambda a: nd.sum(nd.square(nd.sum(a, axis=0))), [A]),
        "mean": (lambda a: nd.square(nd.mean(a)), [A]),
        "exp": (lambda a: nd.sum(nd.exp(a)), [A]),
        "log": (lambda a: nd.sum(nd.log(a)), [v]),
        "sqrt": (lambda a: nd.sum(nd.sqrt(a)), [v]),
        "square": (lambda a: nd.sum(nd.square(a)), [A]),
        "tanh": (lambda a: nd.sum(nd.tanh(a)), [A]),
        "relu": (lambda a: nd.sum(nd.relu(a) * v), [A + 0.3 * np.sign(A)]),
        "lgamma": (lambda a: nd.sum(nd.lgamma(a)), [v]),
        "getitem": (lambda a: nd.sum(nd.square(a[1:, ::2])), [A]),
        "concat": (lambda a, b: nd.sum(nd.tanh(nd.concat([a, b], axis=1))), [A, A[:, :2]]),
        "diag": (lambda a: nd.sum(nd.exp(nd.diag(a))), [S]),
        "cholesky": (lambda m: nd.sum(nd.cholesky(sym(m)) * R[:, :1]), [W]),
        "logdet": (lambda m: nd.logdet(sym(m)), [W]),
        "solve": (lambda m, b: nd.sum(nd.solve(sym(m), b) * R), [W, R]),
        "solve_triangular": (lambda L, b: nd.sum(nd.solve_triangular(L, b) * R), [Ltri, R]),
        "solve_triangular_upper": (
            lambda L, b: nd.sum(nd.solve_triangular(L, b, lower=False) * R), [Ltri.T.copy(), R]),
        "inv": (lambda m: nd.sum(nd.inv(sym(m)) * S), [W]),
    }


@pytest.mark.parametrize("name", sorted(primitive_cases()))
def test_primitive_gradient_matches_finite_differences(name):
    fn, args = primitive_cases()[name]
    assert nd.gradcheck(fn, args, eps=1e-5) < 1e-4


def test_cholesky_roundtrip_on_lower_triangular():
    rng = np.random.default_rng(4)
    L = np.tril(rng.normal(size=(5, 5)))
    L[np.diag_indices(5)] = rng.uniform(0.5, 2.0, 5)
    np.testing.assert_allclose(nd.cholesky(L @ L.T).value, L, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_backward_is_linear(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    x = nd.Tensor(A, requires_grad=True)
    f1 = nd.sum(nd.tanh(x @ x))
    f2 = nd.sum(nd.exp(x * 0.3))
    g_sum = nd.backward(f1 + f2)[x]
    x2 = nd.Tensor(A, requires_grad=True)
    g1 = nd.backward(nd.sum(nd.tanh(x2 @ x2)))[x2]
    g2 = nd.backward(nd.sum(nd.exp(x2 * 0.3)))[x2]
    np.testing.assert_allclose(g_sum, g1 + g2, rtol=1e-12, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_random_smooth_points_pass_gradcheck(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3)) * 0.5
    S = random_spd(rng, 3)
    sym = _sym_input(S)
    fn = lambda a: nd.logdet(sym(a @ nd.transpose(a))) + nd.sum(nd.tanh(a))
    assert nd.gradcheck(fn, [A]) < 1e-4


def test_deterministic_graph():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(4, 4))
    S = A @ A.T + np.eye(4)

    def run():
        x = nd.Tensor(S, requires_grad=True)
        y = nd.logdet(x) + nd.sum(nd.cholesky(x))
        return y.value.copy(), nd.backward(y)[x].copy()

    (v1, g1), (v2, g2) = run(), run()
    assert v1.tobytes() == v2.tobytes() and g1.tobytes() == g2.tobytes()


def test_shared_subexpression_accumulates():
    x = nd.Tensor(2.0, requires_grad=True)
    y = x * x + x
    assert nd.backward(y)[x] == 5.0


def test_ndarray_left_operand_defers_to_tensor():
    x = nd.Tensor(np.ones(2), requires_grad=True)
    y = np.array([2.0, 3.0]) * x
    assert isinstance(y, nd.Tensor)
    np.testing.assert_array_equal(nd.backward(nd.sum(y))[x], [2.0, 3.0])
