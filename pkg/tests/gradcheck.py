"""Finite-difference gradient checks for the autodiff ops.

Every case is ``name -> (make_inputs(rng), fn(*tensors))``. A random projection
``w`` turns each output into a scalar, and the analytic gradient of
``sum(w * fn(x))`` is compared with central differences.
"""
from __future__ import annotations

import numpy as np

from molgen import diff as D
from molgen.diff import Tensor
from oracles import central_difference

H = 1e-6


def _pos(rng, shape):
    return rng.uniform(0.5, 2.0, shape)


def _away_from_zero(rng, shape):
    x = rng.uniform(0.2, 2.0, shape)
    return x * rng.choice([-1.0, 1.0], shape)


def _well_conditioned(rng, n):
    return rng.normal(size=(n, n)) + 3.0 * np.eye(n)


def _dropout(x):
    return D.dropout(x, 0.3, True, np.random.default_rng(7))


OP_CASES = {
    "add": (lambda r: [r.normal(size=(3, 4)), r.normal(size=(4,))], D.add),
    "sub": (lambda r: [r.normal(size=(2, 1, 3)), r.normal(size=(4, 3))], D.sub),
    "neg": (lambda r: [r.normal(size=(5,))], D.neg),
    "mul": (lambda r: [r.normal(size=(3, 4)), r.normal(size=(3, 1))], D.mul),
    "div": (lambda r: [r.normal(size=(3, 4)), _away_from_zero(r, (4,))], D.div),
    "power": (lambda r: [_pos(r, (6,))], lambda a: D.power(a, 2.5)),
    "matmul": (lambda r: [r.normal(size=(3, 4)), r.normal(size=(4, 2))], D.matmul),
    "matmul_batched": (lambda r: [r.normal(size=(2, 3, 4)), r.normal(size=(4, 5))], D.matmul),
    "tanh": (lambda r: [r.normal(size=(4, 3))], D.tanh),
    "sigmoid": (lambda r: [r.normal(size=(4, 3)) * 2], D.sigmoid),
    "exp": (lambda r: [r.normal(size=(5,))], D.exp),
    "log": (lambda r: [_pos(r, (5,))], D.log),
    "sqrt": (lambda r: [_pos(r, (5,))], D.sqrt),
    "relu": (lambda r: [_away_from_zero(r, (6,))], D.relu),
    "sum_axis": (lambda r: [r.normal(size=(3, 4, 2))], lambda a: D.sum_(a, axis=1)),
    "sum_keepdims": (lambda r: [r.normal(size=(3, 4))], lambda a: D.sum_(a, axis=0, keepdims=True)),
    "mean": (lambda r: [r.normal(size=(3, 4))], lambda a: D.mean(a, axis=(0, 1))),
    "softmax": (lambda r: [r.normal(size=(3, 5))], lambda a: D.softmax(a, axis=-1)),
    "log_softmax": (lambda r: [r.normal(size=(3, 5))], lambda a: D.log_softmax(a, axis=0)),
    "l2_norm": (lambda r: [r.normal(size=(3, 4))], lambda a: D.l2_norm(a, axis=1)),
    "reshape": (lambda r: [r.normal(size=(3, 4))], lambda a: D.reshape(a, (2, 6))),
    "transpose": (lambda r: [r.normal(size=(2, 3, 4))], lambda a: D.transpose(a, (2, 0, 1))),
    "getitem": (lambda r: [r.normal(size=(4, 5))], lambda a: D.getitem(a, (slice(1, 3), [0, 2, 2]))),
    "concat": (lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 2))], lambda a, b: D.concat([a, b], axis=1)),
    "stack": (lambda r: [r.normal(size=(3,)), r.normal(size=(3,))], lambda a, b: D.stack([a, b], axis=1)),
    "broadcast_to": (lambda r: [r.normal(size=(1, 3))], lambda a: D.broadcast_to(a, (4, 3))),
    "sum_to": (lambda r: [r.normal(size=(4, 3))], lambda a: D.sum_to(a, (1, 3))),
    "dropout": (lambda r: [r.normal(size=(5, 4))], _dropout),
    "solve": (lambda r: [_well_conditioned(r, 3), r.normal(size=(3, 2))], D.solve),
    "solve_vector": (lambda r: [_well_conditioned(r, 4), r.normal(size=(4,))], D.solve),
    "logabsdet": (lambda r: [_well_conditioned(r, 3)], D.logabsdet),
}


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-wise relative error; the floor only matters for identically-zero gradients."""
    num = np.linalg.norm(np.ravel(a) - np.ravel(b))
    den = max(np.linalg.norm(np.ravel(a)), np.linalg.norm(np.ravel(b)), 1e-12)
    return float(num / den)


def check_case(name: str, rng: np.random.Generator) -> float:
    """Largest relative error over the inputs of one random instance."""
    make, fn = OP_CASES[name]
    arrays = make(rng)
    out_shape = np.shape(fn(*[Tensor(a) for a in arrays]).data)
    w = rng.normal(size=out_shape)

    def scalar(*xs):
        return float((w * fn(*[Tensor(x) for x in xs]).data).sum())

    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    loss = D.sum_(D.mul(fn(*leaves), w))
    analytic = D.grad(loss, leaves)
    worst = 0.0
    for k, a in enumerate(arrays):
        def f(x, k=k):
            xs = [arr for arr in arrays]
            xs[k] = x
            return scalar(*xs)

        numeric = central_difference(f, a, H)
        worst = max(worst, relative_error(analytic[k].data, numeric))
    return worst


def worst_case(name: str, instances: int = 100, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    return max(check_case(name, rng) for _ in range(instances))


SECOND_ORDER_SKIP = {"dropout"}  # outside the second-order subset by design


def check_second_order(name: str, rng: np.random.Generator) -> float:
    """Hessian-vector product d/dx <v, grad_x sum(w * fn(x))> against differences of the first-order path."""
    make, fn = OP_CASES[name]
    arrays = make(rng)
    w = rng.normal(size=np.shape(fn(*[Tensor(a) for a in arrays]).data))
    vs = [rng.normal(size=np.shape(a)) for a in arrays]

    def projected_grad(xs, create_graph):
        leaves = [Tensor(x.copy(), requires_grad=True) for x in xs]
        loss = D.sum_(D.mul(fn(*leaves), w))
        gs = D.grad(loss, leaves, create_graph=create_graph)
        total = None
        for g, v in zip(gs, vs):
            term = D.sum_(D.mul(g, v))
            total = term if total is None else D.add(total, term)
        return leaves, total

    leaves, total = projected_grad(arrays, True)
    analytic = D.grad(total, leaves)
    worst = 0.0
    for k, a in enumerate(arrays):
        def f(x, k=k):
            xs = list(arrays)
            xs[k] = x
            return float(projected_grad(xs, False)[1].data)

        numeric = central_difference(f, a, 1e-5)
        worst = max(worst, relative_error(analytic[k].data, numeric))
    return worst
