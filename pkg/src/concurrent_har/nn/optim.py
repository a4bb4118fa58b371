"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, NonFiniteError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.step < 0:
            raise ValueError("step must be nonnegative")


def adam_update(params, grads, state):
    """One Adam step over named arrays, updated in place.

    ``params`` and ``grads`` map a name to an array.  A name missing from
    ``grads`` (or mapped to ``None``) is treated as a zero gradient.
    Returns ``(params, state)``.
    """
    # validate everything before mutating anything
    checked = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        g = np.asarray(g)
        if g.shape != p.shape:
            raise DimensionError(f"adam_update[{name}]", p.shape, g.shape)
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NonFiniteError(
                f"non-finite gradient for parameter {name!r} ({bad} of {g.size} entries)",
                name=name,
            )
        checked[name] = g

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in params.items():
        g = checked[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        p -= (state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)).astype(p.dtype)
    return params, state


class Adam:
    """Adam over a dict of parameter tensors, reading their ``.grad``."""

    def __init__(self, parameters, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.parameters = dict(parameters)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)

    def zero_grad(self):
        for p in self.parameters.values():
            p.grad = None

    def step(self):
        arrays = {name: p.data for name, p in self.parameters.items()}
        grads = {name: p.grad for name, p in self.parameters.items()}
        adam_update(arrays, grads, self.state)
