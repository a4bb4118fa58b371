"""Forward-only LSTM cell."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError
from . import ops
from .init import glorot_uniform
from .tensor import Tensor, as_tensor, parameter

GATES = ("forget", "input", "candidate", "output")


@dataclass
class LstmCellState:
    hidden: Tensor
    memory: Tensor

    @classmethod
    def zeros(cls, size, batch=None, dtype=np.float32):
        shape = (size,) if batch is None else (batch, size)
        return cls(Tensor(np.zeros(shape, dtype=dtype)), Tensor(np.zeros(shape, dtype=dtype)))

    def detach(self):
        """Keep the values, drop the gradient path (truncated BPTT boundary)."""
        return LstmCellState(self.hidden.detach(), self.memory.detach())

    @property
    def size(self):
        return self.hidden.shape[-1]


@dataclass
class LstmWeights:
    """One ``H x (D + H)`` matrix and length-``H`` bias per gate.

    Each matrix multiplies the concatenation ``[x_t, h_{t-1}]``.
    """

    W_f: Tensor
    b_f: Tensor
    W_i: Tensor
    b_i: Tensor
    W_c: Tensor
    b_c: Tensor
    W_o: Tensor
    b_o: Tensor

    def __post_init__(self):
        shapes = {self.W_f.shape, self.W_i.shape, self.W_c.shape, self.W_o.shape}
        if len(shapes) != 1:
            raise DimensionError("LstmWeights", "identical gate matrix shapes", sorted(shapes))
        h, dh = self.W_f.shape
        if dh <= h:
            raise DimensionError("LstmWeights", "H x (D + H) with D >= 1", self.W_f.shape)
        for b in (self.b_f, self.b_i, self.b_c, self.b_o):
            if b.shape != (h,):
                raise DimensionError("LstmWeights", f"bias shape ({h},)", b.shape)

    @property
    def hidden_size(self):
        return self.W_f.shape[0]

    @property
    def input_size(self):
        return self.W_f.shape[1] - self.W_f.shape[0]

    @classmethod
    def initialize(cls, input_size, hidden_size, rng, dtype=np.float32, prefix="lstm"):
        kw = {}
        for gate in GATES:
            g = gate[0] if gate != "candidate" else "c"
            w = glorot_uniform((hidden_size, input_size + hidden_size), input_size + hidden_size,
                               hidden_size, rng, dtype)
            kw[f"W_{g}"] = parameter(w, name=f"{prefix}.W_{g}")
            kw[f"b_{g}"] = parameter(np.zeros(hidden_size, dtype=dtype), name=f"{prefix}.b_{g}")
        return cls(**kw)

    def parameters(self):
        return {
            "W_f": self.W_f, "b_f": self.b_f, "W_i": self.W_i, "b_i": self.b_i,
            "W_c": self.W_c, "b_c": self.b_c, "W_o": self.W_o, "b_o": self.b_o,
        }


def lstm_step(x_t, prev, weights):
    """Advance one time instance.

    f = sig(W_f z + b_f), i = sig(W_i z + b_i), c~ = tanh(W_c z + b_c),
    C = i * c~ + f * C_prev, o = sig(W_o z + b_o), h = o * tanh(C),
    with ``z = [x_t, h_prev]``.  Works on a vector or a batch of rows.
    """
    x_t = as_tensor(x_t)
    if x_t.shape[-1] != weights.input_size:
        raise DimensionError("lstm_step", f"input length {weights.input_size}", x_t.shape[-1])
    if prev.hidden.shape[-1] != weights.hidden_size or prev.memory.shape != prev.hidden.shape:
        raise DimensionError("lstm_step", f"state length {weights.hidden_size}",
                             (prev.hidden.shape, prev.memory.shape))
    if prev.hidden.shape[:-1] != x_t.shape[:-1]:
        raise DimensionError("lstm_step", f"state batch {x_t.shape[:-1]}", prev.hidden.shape[:-1])

    z = ops.concat([x_t, prev.hidden], axis=-1)
    f = ops.sigmoid(ops.dense(z, weights.W_f, weights.b_f))
    i = ops.sigmoid(ops.dense(z, weights.W_i, weights.b_i))
    c_tilde = ops.tanh(ops.dense(z, weights.W_c, weights.b_c))
    memory = ops.add(ops.mul(i, c_tilde), ops.mul(f, prev.memory))
    o = ops.sigmoid(ops.dense(z, weights.W_o, weights.b_o))
    hidden = ops.mul(o, ops.tanh(memory))
    return LstmCellState(hidden, memory)
