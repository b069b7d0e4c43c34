"""Minimal dense-tensor engine with reverse-mode automatic differentiation."""

from .gradcheck import GradCheckReport, finite_diff_check, relative_error
from .nn import embedding, gelu, layernorm, linear, mse, softmax
from .optim import Adam, ParamSet
from .tensor import (
    DTYPES,
    NumericError,
    ShapeError,
    Tape,
    Tensor,
    add,
    backward,
    broadcast_to,
    concat,
    div,
    exp,
    getitem,
    matmul,
    mean,
    mul,
    neg,
    no_trace,
    permute,
    primitive,
    reshape,
    slice_axis,
    split,
    square,
    sub,
    sum_,
    tanh,
    trace,
    unbroadcast,
)
