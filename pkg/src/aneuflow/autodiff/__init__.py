"""Small define-by-run reverse-mode autodiff engine (float64, numpy)."""

from .nn import ACTIVATIONS, MLP, Linear, Module
from .optim import Adam, AdamState, adam_step, load_params, save_params
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    exp,
    finite_checks,
    gelu,
    grad_check,
    matmul,
    mean,
    mul,
    reduce_sum,
    relu,
    reshape,
    scale,
    slice_,
    softmax,
    sub,
    take,
    tanh,
    transpose,
)

__all__ = [
    "ACTIVATIONS", "MLP", "Linear", "Module", "Adam", "AdamState", "adam_step", "load_params", "save_params",
    "NonFiniteError", "ShapeError", "Tape", "Tensor", "add", "as_tensor", "backward", "concat", "exp",
    "finite_checks", "gelu", "grad_check", "matmul", "mean", "mul", "reduce_sum", "relu", "reshape", "scale",
    "slice_", "softmax", "sub", "take", "tanh", "transpose",
]
