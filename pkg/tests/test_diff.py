import threading
import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from molgen import diff as D
from molgen.diff import (
    Adam,
    ExponentialDecay,
    NonScalarLossError,
    SecondOrderUnsupportedOpError,
    ShapeMismatchError,
    Tensor,
)
from molgen.diff.nn import MLP, Linear
from gradcheck import OP_CASES, SECOND_ORDER_SKIP, check_second_order, worst_case
from oracles import central_difference


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_first_order_gradcheck(name):
    assert worst_case(name, instances=100, seed=zlib.crc32(name.encode())) < 1e-5


@pytest.mark.parametrize("name", sorted(set(OP_CASES) - SECOND_ORDER_SKIP))
def test_second_order_gradcheck(name):
    rng = np.random.default_rng(11)
    assert max(check_second_order(name, rng) for _ in range(10)) < 1e-5


finite = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite))
def test_softmax_rows_sum_to_one(x):
    s = D.softmax(Tensor(x), axis=-1).data
    assert np.allclose(s.sum(-1), 1.0) and (s >= 0).all()
    assert np.allclose(np.exp(D.log_softmax(Tensor(x)).data), s)


def test_softmax_is_stable_for_large_logits():
    s = D.softmax(Tensor(np.array([[1000.0, 0.0, -1000.0]]))).data
    assert np.isfinite(s).all() and s[0, 0] == pytest.approx(1.0)


def test_l2_norm_zero_gradient_at_origin():
    x = Tensor(np.zeros((2, 3)), requires_grad=True)
    (g,) = D.grad(D.l2_norm(x, axis=1).sum(), [x])
    assert np.array_equal(g.data, np.zeros((2, 3)))


def test_broadcast_gradient_accumulates():
    b = Tensor(np.ones(3), requires_grad=True)
    x = Tensor(np.ones((4, 3)))
    D.backward((x * b).sum())
    assert np.allclose(b.grad, 4.0)


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x * x + x * 3.0
    D.backward(y.sum())
    assert x.grad == pytest.approx([7.0])


def test_backward_accumulates_across_calls():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    D.backward((x * 2.0).sum())
    D.backward((x * 2.0).sum())
    assert np.allclose(x.grad, 4.0)


def test_grad_returns_zero_without_path():
    x = Tensor(np.ones(2), requires_grad=True)
    y = Tensor(np.ones(2), requires_grad=True)
    gx, gy = D.grad((x * 2.0).sum(), [x, y])
    assert np.allclose(gx.data, 2.0) and np.allclose(gy.data, 0.0)


def test_deep_chain_does_not_recurse():
    x = Tensor(np.array([0.5]), requires_grad=True)
    y = x
    for _ in range(5000):
        y = y * 1.0
    (g,) = D.grad(y.sum(), [x])
    assert g.data == pytest.approx([1.0])


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(NonScalarLossError):
        D.backward(x * 2.0)
    with pytest.raises(NonScalarLossError):
        D.grad(x * 2.0, [x])


@pytest.mark.parametrize(
    "fn",
    [
        lambda: D.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,)))),
        lambda: D.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3)))),
        lambda: D.matmul(Tensor(np.ones(3)), Tensor(np.ones((3, 2)))),
        lambda: D.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2)))], axis=0),
        lambda: D.solve(Tensor(np.ones((2, 3))), Tensor(np.ones(2))),
    ],
)
def test_shape_errors(fn):
    with pytest.raises(ShapeMismatchError):
        fn()


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(2), requires_grad=True)
    with D.no_grad():
        y = x * 3.0
        assert not D.is_grad_enabled()
    assert not y.requires_grad and y._parents == ()
    assert D.is_grad_enabled()
    with D.no_grad():
        with D.enable_grad():
            assert (x * 2.0).requires_grad


def test_grad_mode_is_thread_local():
    seen = []
    with D.no_grad():
        t = threading.Thread(target=lambda: seen.append(D.is_grad_enabled()))
        t.start()
        t.join()
    assert seen == [True]


def test_dropout_refuses_second_order():
    x = Tensor(np.ones((3, 3)), requires_grad=True)
    y = D.dropout(x, 0.5, True, np.random.default_rng(0))
    with pytest.raises(SecondOrderUnsupportedOpError):
        D.grad((y * y).sum(), [x], create_graph=True)


def test_dropout_eval_mode_is_identity():
    x = Tensor(np.ones(4))
    assert D.dropout(x, 0.5, False) is x
    with pytest.raises(ValueError):
        D.dropout(x, 0.5, True, None)


def test_dropout_preserves_expectation():
    y = D.dropout(Tensor(np.ones(200_000)), 0.3, True, np.random.default_rng(1)).data
    assert y.mean() == pytest.approx(1.0, abs=0.01)


def test_logabsdet_matches_numpy():
    a = np.random.default_rng(2).normal(size=(4, 4))
    assert D.logabsdet(Tensor(a)).data == pytest.approx(np.linalg.slogdet(a)[1])


# ---------------------------------------------------------------- nn


def test_linear_handles_higher_rank_input():
    lin = Linear(np.random.default_rng(0), 3, 2)
    x = np.random.default_rng(1).normal(size=(4, 5, 3))
    out = lin(Tensor(x)).data
    assert out.shape == (4, 5, 2)
    assert np.allclose(out, x @ lin.weight.data + lin.bias.data)


def test_mlp_parameters_and_state_dict():
    mlp = MLP(np.random.default_rng(0), [3, 8, 1], zero_last=True)
    names = [k for k, _ in mlp.named_parameters()]
    assert names == ["layers.0.weight", "layers.0.bias", "layers.1.weight", "layers.1.bias"]
    assert not mlp.layers[1].weight.data.any()
    other = MLP(np.random.default_rng(5), [3, 8, 1])
    other.load_state_dict(mlp.state_dict())
    x = Tensor(np.ones((2, 3)))
    assert np.array_equal(other(x).data, mlp(x).data)
    with pytest.raises(KeyError):
        other.load_state_dict({})


def test_mlp_gradient_against_finite_differences():
    rng = np.random.default_rng(3)
    mlp = MLP(rng, [4, 6, 2])
    x = rng.normal(size=(5, 4))
    w = mlp.layers[0].weight

    def loss_at(wdata):
        old = w.data
        w.data = wdata
        val = float((mlp(Tensor(x)).data ** 2).sum())
        w.data = old
        return val

    (g,) = D.grad((mlp(Tensor(x)) ** 2).sum(), [w])
    assert np.allclose(g.data, central_difference(loss_at, w.data.copy()), rtol=1e-6, atol=1e-8)


# ---------------------------------------------------------------- optim


def reference_adam(p, grads, lr, b1, b2, eps, wd):
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    for t, g in enumerate(grads, 1):
        p = p * (1 - lr * wd)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g**2
        p = p - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return p


@pytest.mark.parametrize("wd", [0.0, 1e-2])
def test_adam_matches_reference(wd):
    rng = np.random.default_rng(4)
    p0 = rng.normal(size=(3, 2))
    grads = [rng.normal(size=(3, 2)) for _ in range(7)]
    param = Tensor(p0.copy(), requires_grad=True)
    opt = Adam([param], lr=1e-2, weight_decay=wd)
    for g in grads:
        opt.step([g])
    assert np.allclose(param.data, reference_adam(p0, grads, 1e-2, 0.9, 0.999, 1e-8, wd))


def test_adam_first_step_moves_by_lr():
    p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    p.grad = np.array([3.0, -0.2])
    Adam([p], lr=0.1).step()
    assert np.allclose(p.data, [0.9, -0.9])


def test_adam_state_round_trip():
    rng = np.random.default_rng(5)
    a = Tensor(rng.normal(size=3), requires_grad=True)
    b = Tensor(a.data.copy(), requires_grad=True)
    oa, ob = Adam([a], lr=1e-2), Adam([b], lr=1e-2)
    g1, g2 = rng.normal(size=3), rng.normal(size=3)
    oa.step([g1])
    ob.step([g1])
    ob2 = Adam([b], lr=1e-2)
    ob2.load_state_dict(ob.state_dict())
    oa.step([g2])
    ob2.step([g2])
    assert np.array_equal(a.data, b.data)


def test_adam_rejects_bad_gradients():
    p = Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(ShapeMismatchError):
        Adam([p]).step([np.zeros(2)])
    with pytest.raises(ShapeMismatchError):
        Adam([p]).step([])


def test_exponential_decay_schedule():
    sched = ExponentialDecay(1e-3, 0.5, 100)
    assert sched(0) == pytest.approx(1e-3)
    assert sched(100) == pytest.approx(5e-4)
    assert sched(50) == pytest.approx(1e-3 * 0.5**0.5)
    p = Tensor(np.zeros(1), requires_grad=True)
    opt = Adam([p], lr=sched)
    for _ in range(100):
        opt.step([np.ones(1)])
    assert opt.current_lr() == pytest.approx(5e-4)
    with pytest.raises(ValueError):
        ExponentialDecay(1e-3, 1.5, 10)
