"""Small float64 tensor engine with reverse-mode differentiation."""

from lsdgnn.numerics import ops
from lsdgnn.numerics.gradcheck import GradCheckReport, finite_difference_check
from lsdgnn.numerics.ops import (
    concat,
    cross_entropy_loss,
    dropout,
    frobenius_distance,
    gru_cell,
    linear,
    matmul,
    relu,
    sigmoid,
    softmax,
    stack,
    tanh,
)
from lsdgnn.numerics.optim import Optimizer, OptimizerConfig, optimizer_step
from lsdgnn.numerics.tensor import ParameterStore, Tensor, as_tensor, backward

__all__ = [
    "GradCheckReport",
    "Optimizer",
    "OptimizerConfig",
    "ParameterStore",
    "Tensor",
    "as_tensor",
    "backward",
    "concat",
    "cross_entropy_loss",
    "dropout",
    "finite_difference_check",
    "frobenius_distance",
    "gru_cell",
    "linear",
    "matmul",
    "ops",
    "optimizer_step",
    "relu",
    "sigmoid",
    "softmax",
    "stack",
    "tanh",
]
