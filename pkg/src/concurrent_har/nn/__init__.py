from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckResult, check_gradients
from .lstm import LstmCellState, LstmWeights, lstm_step
from .ops import (
    activation,
    add,
    concat,
    conv2d,
    dense,
    dropout,
    global_maxpool,
    leaky_relu,
    maxpool2d,
    mse_loss,
    mul,
    reshape,
    scale,
    sigmoid,
    stack,
    take,
    tanh,
)
from .optim import Adam, AdamState, adam_update
from .tensor import Tensor, as_tensor, parameter

__all__ = [
    "Adam",
    "AdamState",
    "GradCheckResult",
    "LstmCellState",
    "LstmWeights",
    "Tensor",
    "activation",
    "adam_update",
    "add",
    "as_tensor",
    "check_gradients",
    "concat",
    "conv2d",
    "dense",
    "dropout",
    "global_maxpool",
    "leaky_relu",
    "load_checkpoint",
    "lstm_step",
    "maxpool2d",
    "mse_loss",
    "mul",
    "parameter",
    "reshape",
    "save_checkpoint",
    "scale",
    "sigmoid",
    "stack",
    "take",
    "tanh",
]
