import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resflow.diffeng import Tape, ShapeError, as_tensor

from conftest import central_diff


def test_matmul_shape():
    t = Tape()
    n = t.matmul(t.leaf(np.ones((2, 10))), t.leaf(np.ones((10, 1))))
    assert t.shape(n) == (2, 1)


def test_tanh_zero_and_sum():
    t = Tape()
    assert np.all(t.value(t.tanh(t.leaf(np.zeros((3, 1))))) == 0.0)
    assert t.value(t.sum(t.leaf([1.0, 2.0, 3.0])))[0, 0] == 6.0


def test_shape_mismatch_names_primitive():
    t = Tape()
    with pytest.raises(ShapeError, match="matmul.*\\(2, 3\\).*\\(2, 3\\)"):
        t.matmul(t.leaf(np.ones((2, 3))), t.leaf(np.ones((2, 3))))
    with pytest.raises(ShapeError, match="add"):
        t.add(t.leaf(np.ones((2, 3))), t.leaf(np.ones((3, 2))))


def test_rejects_non_finite_input():
    with pytest.raises(ValueError):
        as_tensor([1.0, np.nan])
    with pytest.raises(ValueError):
        Tape().leaf([[np.inf]])


def test_unknown_node_rejected():
    with pytest.raises(KeyError):
        Tape().record("tanh", 0)


def test_sum_of_squares_gradient():
    t = Tape()
    x = t.leaf([1.0, 2.0])
    g = t.backward(t.sum(t.square(x)))
    assert np.array_equal(g[x].ravel(), [2.0, 4.0])


def test_tanh_gradient_at_zero_weight():
    t = Tape()
    x = np.array([[0.3, -1.2, 2.0]])
    w = t.leaf(np.zeros((3, 1)))
    g = t.backward(t.sum(t.tanh(t.matmul(t.constant(x), w))))
    np.testing.assert_allclose(g[w].ravel(), x.ravel())


def test_non_scalar_loss_rejected():
    t = Tape()
    with pytest.raises(ShapeError):
        t.backward(t.leaf([1.0, 2.0]))


def test_unreachable_leaf_gets_zero():
    t = Tape()
    x, y = t.leaf([1.0, 2.0]), t.leaf(np.ones((2, 2)))
    g = t.backward(t.sum(x))
    assert np.array_equal(g[y], np.zeros((2, 2)))


def test_constants_have_no_adjoint():
    t = Tape()
    c = t.constant([[2.0]])
    x = t.leaf([[3.0]])
    g = t.backward(t.matmul(c, x))
    assert c not in g and g[x][0, 0] == 2.0


def test_log_floor_clamps_value_and_gradient():
    t = Tape()
    x = t.leaf([[1e-20], [0.5]])
    out = t.log(x, floor=1e-12)
    np.testing.assert_allclose(t.value(out).ravel(), np.log([1e-12, 0.5]))
    g = t.backward(t.sum(out))
    np.testing.assert_allclose(g[x].ravel(), [0.0, 2.0])


def _unary(op):
    def build(t, a):
        return t.sum(getattr(t, op)(a))
    return build


PRIMITIVE_LOSSES = {
    "tanh": _unary("tanh"),
    "sigmoid": _unary("sigmoid"),
    "square": _unary("square"),
    "sum": lambda t, a: t.sum(t.square(t.sum(a))),
    "scale": lambda t, a: t.sum(t.square(t.scale(a, -1.7))),
    "log": lambda t, a: t.sum(t.log(t.add(t.square(a), t.constant([[0.5]])))),
    "matmul": lambda t, a: t.sum(t.tanh(t.matmul(a, t.constant(np.arange(12.0).reshape(4, 3) / 10)))),
    "add": lambda t, a: t.sum(t.square(t.add(a, t.constant(np.linspace(-1, 1, 4).reshape(1, 4))))),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVE_LOSSES))
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_primitive_adjoints_match_finite_differences(name, seed):
    x0 = np.random.default_rng(seed).uniform(-2, 2, (3, 4))
    build = PRIMITIVE_LOSSES[name]

    def f(x):
        t = Tape()
        return t.value(build(t, t.leaf(x)))[0, 0]

    t = Tape()
    leaf = t.leaf(x0)
    g = t.backward(build(t, leaf))[leaf]
    fd = central_diff(f, x0, 1e-6)
    rel = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-3)
    assert rel.max() <= 1e-6


def test_broadcast_add_adjoint_sums_over_columns():
    t = Tape()
    a = t.leaf(np.ones((2, 5)))
    b = t.leaf(np.zeros((2, 1)))
    g = t.backward(t.sum(t.add(a, b)))
    assert np.array_equal(g[b], [[5.0], [5.0]])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_backward_is_linear(seed, a, b):
    rng = np.random.default_rng(seed)
    w0, x = rng.uniform(-2, 2, (2, 3)), rng.uniform(-2, 2, (3, 4))

    def grads(ca, cb):
        t = Tape()
        w = t.leaf(w0)
        z = t.matmul(w, t.constant(x))
        l1, l2 = t.sum(t.tanh(z)), t.sum(t.square(z))
        loss = t.add(t.scale(l1, ca), t.scale(l2, cb))
        return t.backward(loss)[w]

    np.testing.assert_allclose(grads(a, b), a * grads(1, 0) + b * grads(0, 1), rtol=1e-12, atol=1e-12)


def test_backward_replay_is_bit_identical():
    rng = np.random.default_rng(0)
    t = Tape()
    w = t.leaf(rng.normal(size=(3, 2)))
    loss = t.sum(t.sigmoid(t.matmul(w, t.constant(rng.normal(size=(2, 7))))))
    assert np.array_equal(t.backward(loss)[w], t.backward(loss)[w])
