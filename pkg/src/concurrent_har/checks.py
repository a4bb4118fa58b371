"""Gradient-check suites for every nn operation and for a whole model."""

from __future__ import annotations

import numpy as np

from . import nn
from .model.config import preset
from .model.network import build_network

# (finite-difference step, relative tolerance); float32 cannot resolve
# central differences finely enough for a meaningful gate
TOLERANCE = {64: (1e-5, 1e-4)}

OP_CASES = {
    "conv2d_same": lambda p: nn.conv2d(p["x"], p["w"], p["b"], "same"),
    "conv2d_valid": lambda p: nn.conv2d(p["x"], p["w"], p["b"], "valid"),
    "conv2d_1x1": lambda p: nn.conv2d(p["x"], p["w1"], p["b"], "same"),
    "maxpool": lambda p: nn.maxpool2d(p["x"], 2, 3),
    "global_maxpool": lambda p: nn.global_maxpool(p["x"]),
    "dense": lambda p: nn.dense(nn.reshape(p["x"], (24,)), p["W"], p["c"]),
    "sigmoid": lambda p: nn.sigmoid(p["x"]),
    "tanh": lambda p: nn.tanh(p["x"]),
    "leaky_relu": lambda p: nn.leaky_relu(p["x"], 0.1),
    "mul_add_concat": lambda p: nn.concat([nn.add(nn.mul(p["x"], p["x"]), p["x"]), p["x"]], axis=-1),
    "scale_stack_take": lambda p: nn.take(nn.stack([nn.scale(p["x"], 3.0), p["x"]]), 1, axis=0),
    "dropout": lambda p: nn.dropout(p["x"], 0.3, True, rng=7),
}


def _dtype(bits):
    if bits not in TOLERANCE:
        raise ValueError(f"gradient checks run at 64 bits only, got {bits}")
    return np.float64


def op_params(rng, dtype=np.float64):
    def rand(*shape):
        return nn.parameter(rng.standard_normal(shape).astype(dtype))

    return {"x": rand(4, 6, 1), "w": rand(3, 3, 1, 2), "w1": rand(1, 1, 1, 2), "b": rand(2),
            "W": rand(5, 24), "c": rand(5)}


def check_op(name, seed=0, bits=64):
    dtype = _dtype(bits)
    eps, rtol = TOLERANCE[bits]
    rng = np.random.default_rng(seed)
    params = op_params(rng, dtype)
    fn = OP_CASES[name]
    target = rng.uniform(0, 1, size=fn(params).shape).astype(dtype)

    def loss():
        return nn.mse_loss(fn(params), target)

    # only the inputs the op actually reads are perturbed
    loss().backward()
    used = {k: v for k, v in params.items() if v.grad is not None}
    return nn.check_gradients(loss, used, eps=eps, rtol=rtol, rng=seed, name=name)


def check_lstm(seed=0, bits=64, steps=3):
    dtype = _dtype(bits)
    eps, rtol = TOLERANCE[bits]
    rng = np.random.default_rng(seed)
    w = nn.LstmWeights.initialize(3, 4, rng, dtype=dtype)
    xs = [nn.parameter(rng.standard_normal(3).astype(dtype)) for _ in range(steps)]
    target = rng.uniform(0, 1, 4).astype(dtype)

    def loss():
        s = nn.LstmCellState.zeros(4, dtype=dtype)
        for x in xs:
            s = nn.lstm_step(x, s, w)
        return nn.mse_loss(s.hidden, target)

    params = dict(w.parameters(), **{f"x{t}": x for t, x in enumerate(xs)})
    return nn.check_gradients(loss, params, eps=eps, rtol=rtol, name="lstm_step")


def check_model(seed=0, bits=64, seconds=2, config="gradcheck_tiny", n_samples=None):
    """Full three-branch network over ``seconds`` consecutive inputs;
    every parameter entry is perturbed unless ``n_samples`` is given."""
    dtype = _dtype(bits)
    eps, rtol = TOLERANCE[bits]
    cfg = preset(config) if isinstance(config, str) else config
    model = build_network(cfg, seed=seed, dtype=dtype)
    rng = np.random.default_rng(seed + 1)
    x = {m: rng.uniform(0, 1, (1, seconds) + tuple(s.input_shape)).astype(dtype)
         for m, s in cfg.branches.items()}
    target = rng.integers(0, 2, size=(1, seconds, cfg.n_activities))

    def loss():
        return nn.mse_loss(model.forward_window(x)[0], target)

    return nn.check_gradients(loss, model.params, n_samples=n_samples, eps=eps, rtol=rtol, rng=seed,
                              name=f"model[{cfg.name}]")


def run_all(seed=0, bits=64, seeds_per_op=3):
    """Every op case, the LSTM step and the full model; list of results."""
    results = [check_op(name, seed + k, bits) for name in OP_CASES for k in range(seeds_per_op)]
    results.append(check_lstm(seed, bits))
    results.append(check_model(seed, bits))
    return results
