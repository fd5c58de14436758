"""Tensor arithmetic, reverse-mode autodiff and seeded random streams."""

from .gradcheck import grad_check
from .rng import ALGORITHM as RNG_ALGORITHM
from .rng import Rng, gaussian_sample
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    div,
    elementwise,
    exp,
    get_dtype,
    getitem,
    log,
    logsumexp,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    power,
    precision,
    reduce,
    relu,
    reshape,
    set_dtype,
    sqrt,
    square,
    stack,
    sub,
    sum_,
    transpose,
    zero_grad,
)

__all__ = [
    "RNG_ALGORITHM",
    "Rng",
    "Tensor",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "div",
    "elementwise",
    "exp",
    "gaussian_sample",
    "get_dtype",
    "getitem",
    "grad_check",
    "log",
    "logsumexp",
    "matmul",
    "mean",
    "mul",
    "neg",
    "no_grad",
    "power",
    "precision",
    "reduce",
    "relu",
    "reshape",
    "set_dtype",
    "sqrt",
    "square",
    "stack",
    "sub",
    "sum_",
    "transpose",
    "zero_grad",
]
