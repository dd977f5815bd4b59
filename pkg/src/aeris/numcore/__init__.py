"""Tensor arithmetic, reverse-mode autodiff, optimizers and seeded randomness."""
from aeris.numcore.gradcheck import gradcheck, numeric_gradient, relative_error
from aeris.numcore.optim import Adam, EarlyStopping
from aeris.numcore.rng import SeededRng
from aeris.numcore.tensor import (
    GradTape,
    ShapeError,
    Tensor,
    add,
    as_tensor,
    concat,
    conv1d,
    div,
    dropout,
    exp,
    finite_checks,
    getitem,
    layer_norm,
    matmul,
    maxpool1d,
    mse,
    mul,
    neg,
    reduce_max,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    sigmoid,
    silu,
    softmax,
    sqrt,
    square,
    stack,
    sub,
    swapaxes,
    tanh,
    transpose,
    unstack,
)

__all__ = [
    "Adam", "EarlyStopping", "GradTape", "SeededRng", "ShapeError", "Tensor",
    "add", "as_tensor", "concat", "conv1d", "div", "dropout", "exp", "finite_checks", "getitem",
    "gradcheck", "layer_norm", "matmul", "maxpool1d", "mse", "mul", "neg",
    "numeric_gradient", "reduce_max", "reduce_mean", "reduce_sum", "relative_error",
    "relu", "reshape", "sigmoid", "silu", "softmax", "sqrt", "square", "stack", "sub",
    "swapaxes", "tanh", "transpose", "unstack",
]
