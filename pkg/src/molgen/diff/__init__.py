from molgen.diff.tensor import (
    NonScalarLossError,
    SecondOrderUnsupportedOpError,
    ShapeMismatchError,
    Tensor,
    add,
    as_tensor,
    backward,
    broadcast_to,
    concat,
    div,
    dropout,
    enable_grad,
    exp,
    getitem,
    grad,
    is_grad_enabled,
    l2_norm,
    log,
    log_softmax,
    logabsdet,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    power,
    relu,
    reshape,
    sigmoid,
    softmax,
    solve,
    sqrt,
    stack,
    sub,
    sum_,
    sum_to,
    tanh,
    transpose,
)
from molgen.diff.optim import Adam, ExponentialDecay
