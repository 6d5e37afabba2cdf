"""Trainable layers built on :mod:`vedsa.tensorkit.tensor`."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from ..errors import StructuralError
from . import tensor as T
from .tensor import Tensor, parameter


class Module:
    """Holds named parameters and child modules in insertion order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = dict(self.named_parameters())
        if set(params) != set(state):
            missing = sorted(set(params) ^ set(state))
            raise StructuralError(f"state dict keys do not match model: {missing}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.data.shape:
                raise StructuralError(f"{name}: shape {value.shape} != {p.data.shape}")
            p.data = value.copy()

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, activation: str = "identity", rng=None):
        if activation not in T.ACTIVATIONS:
            raise StructuralError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        self.weight = parameter(uniform_fan_in(rng, (n_in, n_out), n_in))
        self.bias = parameter(np.zeros(n_out))

    def __call__(self, x) -> Tensor:
        return dense(x, self.weight, self.bias, self.activation)


def dense(x, weight, bias, activation: str = "identity") -> Tensor:
    """Affine map over the last axis followed by a pointwise activation."""
    x, weight = T.as_tensor(x), T.as_tensor(weight)
    if x.shape[-1] != weight.shape[0]:
        raise StructuralError(f"dense input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    try:
        act = T.ACTIVATIONS[activation]
    except KeyError:
        raise StructuralError(f"unknown activation {activation!r}") from None
    lead = x.shape[:-1]
    flat = x if x.ndim == 2 else T.reshape(x, (-1, x.shape[-1]))
    out = T.matmul(flat, weight)
    if bias is not None:
        out = out + bias
    if x.ndim != 2:
        out = T.reshape(out, (*lead, weight.shape[1]))
    return act(out)


@dataclass
class LstmCellState:
    hidden: Tensor
    cell: Tensor


class LSTMCell(Module):
    """Gate order in the packed weights: input, forget, candidate, output."""

    def __init__(self, n_in: int, hidden: int, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.hidden = n_in, hidden
        self.w_input = parameter(uniform_fan_in(rng, (n_in, 4 * hidden), hidden))
        self.w_recurrent = parameter(uniform_fan_in(rng, (hidden, 4 * hidden), hidden))
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        self.bias = parameter(b)

    def initial_state(self, batch: int) -> LstmCellState:
        z = T.Tensor(np.zeros((batch, self.hidden)))
        return LstmCellState(z, z)

    def __call__(self, state: LstmCellState, x) -> tuple[LstmCellState, Tensor]:
        return lstm_step(self, state, x)


def lstm_step(cell: LSTMCell, state: LstmCellState, x) -> tuple[LstmCellState, Tensor]:
    """One LSTM time step; the output is the new hidden state."""
    x = T.as_tensor(x)
    if x.ndim != 2 or x.shape[1] != cell.n_in:
        raise StructuralError(f"LSTM step expects (batch, {cell.n_in}), got {x.shape}")
    if state.hidden.shape != (x.shape[0], cell.hidden):
        raise StructuralError(f"LSTM state {state.hidden.shape} does not match batch {x.shape[0]}")
    H = cell.hidden
    z = T.matmul(x, cell.w_input) + T.matmul(state.hidden, cell.w_recurrent) + cell.bias
    i = T.sigmoid(z[:, 0:H])
    f = T.sigmoid(z[:, H : 2 * H])
    g = T.tanh(z[:, 2 * H : 3 * H])
    o = T.sigmoid(z[:, 3 * H : 4 * H])
    c = f * state.cell + i * g
    h = o * T.tanh(c)
    return LstmCellState(h, c), h


class LSTM(Module):
    """Stacked LSTM over a (batch, time, features) input."""

    def __init__(self, n_in: int, hidden: int, layers: int = 1, rng=None):
        if hidden < 1 or layers < 1:
            raise StructuralError("LSTM needs hidden >= 1 and layers >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cells = [LSTMCell(n_in if k == 0 else hidden, hidden, rng) for k in range(layers)]

    def __call__(self, x) -> list[Tensor]:
        x = T.as_tensor(x)
        if x.ndim != 3:
            raise StructuralError(f"LSTM input must be (batch, time, features), got {x.shape}")
        batch, steps = x.shape[0], x.shape[1]
        states = [c.initial_state(batch) for c in self.cells]
        outputs = []
        for t in range(steps):
            inp = x[:, t, :]
            for k, cell in enumerate(self.cells):
                states[k], inp = lstm_step(cell, states[k], inp)
            outputs.append(inp)
        return outputs


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int = 1, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kernel, self.stride = kernel, stride
        self.weight = parameter(uniform_fan_in(rng, (c_out, c_in, kernel), c_in * kernel))
        self.bias = parameter(np.zeros(c_out))

    def __call__(self, x) -> Tensor:
        return T.conv1d(x, self.weight, self.bias, self.stride)
