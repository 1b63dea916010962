import zlib

import numpy as np
import pytest

from stta import tape as tp
from stta.errors import UsageError


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def tape_grad(f, x):
    t = tp.GradientTape()
    v = t.watch(x)
    t.backward(f(v))
    return v.grad


OPS = {
    "add_broadcast": lambda x: tp.sum((x + np.arange(3.0)) * x),
    "sub_div": lambda x: tp.sum((2.0 - x) / (x * x + 1.0)),
    "matmul": lambda x: tp.sum(tp.tanh(x @ np.array([[1.0, -2.0], [0.5, 0.3], [0.1, 0.7]]))),
    "rmatmul": lambda x: tp.sum(np.array([[1.0, 2.0], [3.0, -1.0]]) @ x),
    "exp_softplus": lambda x: tp.sum(tp.exp(0.3 * x) + tp.softplus(x)),
    "sqrt_abs": lambda x: tp.sum(tp.sqrt(x * x + 1.0) + tp.abs(x)),
    "mean_keepdims": lambda x: tp.sum(tp.mean(x, axis=0, keepdims=True) * x),
    "reshape_swap": lambda x: tp.sum(tp.swapaxes(tp.reshape(x, (3, 2)), 0, 1) * np.arange(6.0).reshape(2, 3)),
    "getitem": lambda x: tp.sum(x[1:, ::2] * x[:1, :2]),
    "fancy_index_repeat": lambda x: tp.sum(x[:, [0, 0, 2]] * x[:, [1, 2, 2]]),
    "concat_stack": lambda x: tp.sum(tp.stack([x[0], x[1]], axis=0) * tp.concat([x[1:], x[:1]], axis=0)),
    "cross": lambda x: tp.sum(tp.cross(x[0], x[1]) * np.array([1.0, 2.0, 3.0])),
    "clip_interior": lambda x: tp.sum(tp.clip(x, -5.0, 5.0) * x),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradient_matches_finite_differences(name):
    x = np.random.default_rng(zlib.crc32(name.encode())).normal(size=(2, 3))
    x[np.abs(x) < 0.05] += 0.2  # keep away from the |x| kink
    f = OPS[name]
    np.testing.assert_allclose(tape_grad(f, x), numeric_grad(lambda a: float(f(a)), x), rtol=1e-6, atol=1e-8)


def test_unused_leaf_has_no_grad_and_constants_pass_through():
    t = tp.GradientTape()
    a, b = t.watch(np.ones(3)), t.watch(np.ones(3))
    assert isinstance(tp.add(np.ones(2), np.ones(2)), np.ndarray)
    t.backward(tp.sum(a * 2.0))
    np.testing.assert_array_equal(a.grad, [2.0, 2.0, 2.0])
    assert b.grad is None


def test_shared_subexpression_accumulates():
    t = tp.GradientTape()
    x = t.watch(np.array(3.0))
    y = x * x
    t.backward(y + y)
    assert x.grad == pytest.approx(12.0)


def test_backward_repeatable_on_same_tape():
    t = tp.GradientTape()
    x = t.watch(np.array([1.0, 2.0]))
    loss = tp.sum(x * x)
    t.backward(loss)
    first = x.grad.copy()
    t.backward(loss)
    np.testing.assert_array_equal(x.grad, first)


def test_backward_needs_scalar_root_of_this_tape():
    t, other = tp.GradientTape(), tp.GradientTape()
    x = t.watch(np.ones(3))
    with pytest.raises(UsageError):
        t.backward(x * 2.0)
    with pytest.raises(UsageError):
        other.backward(tp.sum(x))


def test_ndarray_left_operand_defers_to_var():
    t = tp.GradientTape()
    x = t.watch(np.ones(2))
    out = np.array([2.0, 3.0]) * x
    assert isinstance(out, tp.Var)
