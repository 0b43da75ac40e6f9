"""Small tensor kernel: reverse-mode gradients, CSR products, optimizers."""

from .gradcheck import grad_check, grad_check_params, relative_error
from .io import load_tensor, save_tensor
from .ops import (
    ConfigError,
    add,
    concat_cols,
    dropout,
    log_softmax_rows,
    matmul,
    mean_of,
    mul,
    nll_loss,
    relu,
    scale,
    softmax_rows,
    spmm,
    sum_all,
    transpose,
)
from .optim import SGD, Adagrad, Adam, Optimizer, OptimizerError, make_optimizer
from .sparse import SparseMatrix
from .tensor import NonFiniteError, ShapeError, Tensor

__all__ = [
    "Adagrad",
    "Adam",
    "ConfigError",
    "NonFiniteError",
    "Optimizer",
    "OptimizerError",
    "SGD",
    "ShapeError",
    "SparseMatrix",
    "Tensor",
    "add",
    "concat_cols",
    "dropout",
    "grad_check",
    "grad_check_params",
    "load_tensor",
    "log_softmax_rows",
    "make_optimizer",
    "matmul",
    "mean_of",
    "mul",
    "nll_loss",
    "relative_error",
    "relu",
    "save_tensor",
    "scale",
    "softmax_rows",
    "spmm",
    "sum_all",
    "transpose",
]
