from .functional import LAYER_NORM_EPS, dropout, layer_norm, linear_recurrence, softmax
from .gradcheck import finite_difference_check
from .tensor import (
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    exp,
    getitem,
    is_grad_enabled,
    log,
    matmul,
    mean,
    minimum,
    mul,
    no_grad,
    relu,
    reshape,
    sigmoid,
    sqrt,
    stack,
    sub,
    tabs,
    tanh,
    transpose,
    tsum,
)

__all__ = [
    "LAYER_NORM_EPS",
    "Tape",
    "Tensor",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "dropout",
    "exp",
    "finite_difference_check",
    "getitem",
    "is_grad_enabled",
    "layer_norm",
    "linear_recurrence",
    "log",
    "matmul",
    "mean",
    "minimum",
    "mul",
    "no_grad",
    "relu",
    "reshape",
    "sigmoid",
    "softmax",
    "sqrt",
    "stack",
    "sub",
    "tabs",
    "tanh",
    "transpose",
    "tsum",
]
