"""The assembled recognizer: modality ConvNets, two LSTM levels, coding layer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError, MissingInputError
from ..nn import ops
from ..nn.init import glorot_uniform
from ..nn.lstm import LstmCellState, LstmWeights, lstm_step
from ..nn.tensor import Tensor, as_tensor, parameter
from .config import NetworkConfig


@dataclass(frozen=True)
class BinaryActivityCode:
    """Per-activity status bits together with the scores they came from."""

    bits: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        if self.bits.shape != self.scores.shape:
            raise DimensionError("BinaryActivityCode", self.scores.shape, self.bits.shape)

    def consistent(self, delta=0.5):
        return bool(np.array_equal(self.bits, threshold(self.scores, delta)))


def threshold(scores, delta=0.5):
    """Bit i is 1 exactly when score i is strictly above ``delta``."""
    s = scores.data if isinstance(scores, Tensor) else np.asarray(scores)
    return (s > delta).astype(np.uint8)


def coding_forward(features, dense_w, dense_b, scaler_w, scaler_b, alpha=0.01):
    """Dense layer (leaky ReLU) then one sigmoid scaler neuron per output.

    Scaler i sees only dense output i: ``score_i = sigmoid(w_i * u_i + c_i)``.
    """
    u = ops.leaky_relu(ops.dense(features, dense_w, dense_b), alpha)
    return ops.sigmoid(ops.add(ops.mul(u, scaler_w), scaler_b))


class Recognizer:
    """A built network with its parameters and per-LSTM running states."""

    def __init__(self, config: NetworkConfig, seed=0, dtype=np.float32):
        self.config = config.validate()
        self.dtype = np.dtype(dtype)
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.params = {}
        self._traces = {m: spec.trace(m) for m, spec in config.branches.items()}

        for m, trace in self._traces.items():
            for entry in trace:
                layer = entry.layer
                if layer.kind != "conv":
                    continue
                k, cin, f = layer.kernel, entry.in_shape[2], layer.filters
                w = glorot_uniform((k, k, cin, f), k * k * cin, k * k * f, rng, self.dtype)
                self._add(f"{entry.name}.kernels", w)
                self._add(f"{entry.name}.bias", np.zeros(f, self.dtype))

        self.lstm1 = {}
        for m, spec in config.branches.items():
            lw = LstmWeights.initialize(spec.output_length, config.lstm1_sizes[m], rng, self.dtype,
                                        prefix=f"lstm1.{m}")
            self.lstm1[m] = lw
            for k, p in lw.parameters().items():
                self.params[f"lstm1.{m}.{k}"] = p

        level1 = sum(config.lstm1_sizes.values())
        if config.fusion_width is not None:
            self._add("fusion.weights",
                      glorot_uniform((config.fusion_width, level1), level1, config.fusion_width, rng,
                                     self.dtype))
            self._add("fusion.bias", np.zeros(config.fusion_width, self.dtype))
            l2_in = config.fusion_width
        else:
            l2_in = level1
        self.lstm2 = LstmWeights.initialize(l2_in, config.lstm2_width, rng, self.dtype, prefix="lstm2")
        for k, p in self.lstm2.parameters().items():
            self.params[f"lstm2.{k}"] = p

        n, h2 = config.n_activities, config.lstm2_width
        self._add("coding.dense.weights", glorot_uniform((n, h2), h2, n, rng, self.dtype))
        self._add("coding.dense.bias", np.zeros(n, self.dtype))
        self._add("coding.scaler.weight", np.ones(n, self.dtype))
        self._add("coding.scaler.bias", np.zeros(n, self.dtype))

        self.states = None
        self.reset_states()

    def _add(self, name, array):
        self.params[name] = parameter(array, name=name)

    # -- bookkeeping --------------------------------------------------------------

    @property
    def n_parameters(self):
        return int(sum(p.size for p in self.params.values()))

    def parameters(self):
        return dict(self.params)

    def gradients(self):
        """Parameter gradients, with zeros for anything the loss never reached."""
        return {k: (np.zeros_like(p.data) if p.grad is None else p.grad) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self):
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, arrays):
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ConfigError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in self.params.items():
            a = np.asarray(arrays[k])
            if a.shape != p.shape:
                raise DimensionError(f"load {k}", p.shape, a.shape)
            p.data[...] = a
        return self

    def state_names(self):
        return [f"lstm1.{m}" for m in self.config.branches] + ["lstm2"]

    def zero_states(self, batch=None):
        c = self.config
        states = {f"lstm1.{m}": LstmCellState.zeros(c.lstm1_sizes[m], batch, self.dtype)
                  for m in c.branches}
        states["lstm2"] = LstmCellState.zeros(c.lstm2_width, batch, self.dtype)
        return states

    def reset_states(self, batch=None):
        self.states = self.zero_states(batch)
        return self

    # -- forward ------------------------------------------------------------------

    def branch_forward(self, modality, x):
        """ConvNet for one modality on ``(B, H, W, C)``; returns ``(B, F)``."""
        x = as_tensor(x, self.dtype)
        for entry in self._traces[modality]:
            layer = entry.layer
            if layer.kind == "conv":
                x = ops.conv2d(x, self.params[f"{entry.name}.kernels"], self.params[f"{entry.name}.bias"])
                x = ops.activation(x, layer.activation, self.config.leaky_alpha)
            elif layer.global_pool:
                x = ops.global_maxpool(x, layer=entry.name)
            else:
                x = ops.maxpool2d(x, layer.h, layer.w, layer=entry.name)
        return ops.reshape(x, (x.shape[0], x.shape[-1]))

    def _check_inputs(self, inputs):
        out = {}
        for m, spec in self.config.branches.items():
            if m not in inputs or inputs[m] is None:
                raise MissingInputError(f"no input for enabled modality {m!r}")
            a = inputs[m].data if isinstance(inputs[m], Tensor) else np.asarray(inputs[m])
            if a.ndim != 5 or tuple(a.shape[2:]) != tuple(spec.input_shape):
                raise DimensionError(f"{m} input", f"(B, T) + {tuple(spec.input_shape)}", a.shape)
            out[m] = a.astype(self.dtype, copy=False)
        shapes = {a.shape[:2] for a in out.values()}
        if len(shapes) != 1:
            raise DimensionError("inputs", "one (batch, seconds) shape for every modality", sorted(shapes))
        return out, shapes.pop()

    def forward_window(self, inputs, states=None, training=False, rng=None, dropout_rate=None):
        """Run ``T`` consecutive seconds for a batch of ``B`` cases.

        ``inputs`` maps modality to ``(B, T, H, W, C)``.  Returns the
        ``(B, T, N)`` score tensor and the states after the last second.
        The convolutions see all ``B * T`` frames at once; the LSTMs then
        walk the seconds in order.
        """
        arrays, (b, t) = self._check_inputs(inputs)
        c = self.config
        if states is None:
            states = self.zero_states(b)
        feats = {}
        for m, a in arrays.items():
            f = self.branch_forward(m, Tensor(a.reshape((b * t,) + a.shape[2:])))
            feats[m] = ops.reshape(f, (b, t, f.shape[-1]))
        rate = c.dropout_rate if dropout_rate is None else dropout_rate
        if training and rate > 0 and rng is None:
            rng = np.random.default_rng(self.seed)

        states = dict(states)
        scores = []
        for step in range(t):
            level1 = []
            for m in c.branches:
                s = lstm_step(ops.take(feats[m], step, axis=1), states[f"lstm1.{m}"], self.lstm1[m])
                states[f"lstm1.{m}"] = s
                level1.append(s.hidden)
            z = level1[0] if len(level1) == 1 else ops.concat(level1, axis=-1)
            if c.fusion_width is not None:
                z = ops.leaky_relu(ops.dense(z, self.params["fusion.weights"], self.params["fusion.bias"]),
                                   c.leaky_alpha)
            z = ops.dropout(z, rate, training, rng)
            s2 = lstm_step(z, states["lstm2"], self.lstm2)
            states["lstm2"] = s2
            scores.append(coding_forward(
                s2.hidden,
                self.params["coding.dense.weights"], self.params["coding.dense.bias"],
                self.params["coding.scaler.weight"], self.params["coding.scaler.bias"],
                c.leaky_alpha,
            ))
        return ops.stack(scores, axis=1), states

    def forward_one_second(self, inputs, states=None):
        """One time instance for a single case, advancing the stored states.

        ``inputs`` maps modality to one ``(H, W, C)`` array.  When
        ``states`` is given it is used and the returned states are not stored.
        """
        batched = {m: (None if v is None else np.asarray(v)[None, None]) for m, v in inputs.items()}
        use = self.states if states is None else states
        if use[self.state_names()[-1]].hidden.ndim != 1:
            raise DimensionError("forward_one_second", "unbatched states", use["lstm2"].hidden.shape)
        lifted = {k: LstmCellState(ops.reshape(s.hidden, (1, -1)), ops.reshape(s.memory, (1, -1)))
                  for k, s in use.items()}
        scores, new = self.forward_window(batched, lifted)
        new = {k: LstmCellState(Tensor(s.hidden.data[0]), Tensor(s.memory.data[0])) for k, s in new.items()}
        if states is None:
            self.states = new
        sc = scores.data[0, 0].copy()
        return BinaryActivityCode(threshold(sc, self.config.threshold), sc), new

    def predict_window(self, inputs, states=None):
        """Inference-only window pass returning plain arrays."""
        scores, states = self.forward_window(inputs, states, training=False)
        detached = {k: s.detach() for k, s in states.items()}
        return scores.data, detached


def build_network(config, seed=0, dtype=np.float32):
    return Recognizer(config, seed=seed, dtype=dtype)


def reset_states(model, batch=None):
    return model.reset_states(batch)
