"""Small reverse-mode differentiation toolkit: tape, layers, Adam, gradient checks."""

from . import tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, relative_error
from .layers import LSTM, Conv1d, Dense, LSTMCell, LstmCellState, Module, dense, lstm_step
from .optim import Adam, OptimizerState, adam_step
from .tensor import Tensor, conv1d, dropout, maxpool1d, no_grad, parameter

__all__ = [
    "Adam",
    "Conv1d",
    "Dense",
    "LSTM",
    "LSTMCell",
    "LstmCellState",
    "Module",
    "OptimizerState",
    "Tensor",
    "adam_step",
    "conv1d",
    "dense",
    "dropout",
    "grad_check",
    "load_checkpoint",
    "lstm_step",
    "maxpool1d",
    "no_grad",
    "parameter",
    "relative_error",
    "save_checkpoint",
    "tensor",
]
