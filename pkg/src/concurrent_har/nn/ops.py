"""Differentiable operations used by the recognizer.

Image tensors are channels-last: ``(batch, height, width, channels)``.
Single images ``(height, width, channels)`` are accepted wherever a batch is
and come back without the batch axis.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DimensionError
from .tensor import Tensor, as_tensor, result

__all__ = [
    "add",
    "mul",
    "scale",
    "concat",
    "stack",
    "reshape",
    "take",
    "dense",
    "activation",
    "sigmoid",
    "tanh",
    "leaky_relu",
    "conv2d",
    "maxpool2d",
    "global_maxpool",
    "mse_loss",
    "dropout",
]


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic -----------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return result(a.data + b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return result(a.data * b.data, (a, b), backward)


def scale(a, c):
    """Multiply by a Python scalar."""
    a = as_tensor(a)
    c = float(c)

    def backward(g):
        a._accumulate(g * c)

    return result(a.data * a.dtype.type(c), (a,), backward)


Tensor.__add__ = add
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda self, other: mul(other, self)


# -- structural -------------------------------------------------------------------


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            t._accumulate(piece)

    return result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        for i, t in enumerate(tensors):
            t._accumulate(np.take(g, i, axis=axis))

    return result(np.stack([t.data for t in tensors], axis=axis), tensors, backward)


def reshape(a, shape):
    a = as_tensor(a)
    original = a.shape

    def backward(g):
        a._accumulate(g.reshape(original))

    return result(a.data.reshape(shape), (a,), backward)


def take(a, index, axis):
    """Select one position along ``axis`` (the axis is dropped)."""
    a = as_tensor(a)
    axis = axis % a.ndim

    def backward(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        sl = [slice(None)] * a.ndim
        sl[axis] = index
        full[tuple(sl)] = g
        a._accumulate(full)

    return result(np.take(a.data, index, axis=axis), (a,), backward)


# -- dense ------------------------------------------------------------------------


def dense(x, weights, bias):
    """``weights @ x + bias`` for a vector or a batch of row vectors.

    ``weights`` is ``(N, D)``; ``x`` is ``(D,)`` or ``(B, D)``.
    """
    x, weights, bias = as_tensor(x), as_tensor(weights), as_tensor(bias)
    if weights.ndim != 2:
        raise DimensionError("dense", "2-d weight matrix", weights.shape)
    n, d = weights.shape
    if x.shape[-1] != d:
        raise DimensionError("dense", f"input length {d}", x.shape[-1])
    if bias.shape != (n,):
        raise DimensionError("dense", f"bias shape ({n},)", bias.shape)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ weights.data)
        if weights.requires_grad:
            g2 = g.reshape(-1, n)
            weights._accumulate(g2.T @ x.data.reshape(-1, d))
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, n).sum(axis=0))

    return result(x.data @ weights.data.T + bias.data, (x, weights, bias), backward)


# -- activations -------------------------------------------------------------------


def sigmoid(a):
    a = as_tensor(a)
    # tanh form stays finite for any input
    s = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def backward(g):
        a._accumulate(g * s * (1.0 - s))

    return result(s, (a,), backward)


def tanh(a):
    a = as_tensor(a)
    t = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - t * t))

    return result(t, (a,), backward)


def leaky_relu(a, alpha=0.01):
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"leaky_relu alpha must lie in (0, 1), got {alpha}")
    a = as_tensor(a)
    slope = np.where(a.data >= 0, a.dtype.type(1.0), a.dtype.type(alpha))

    def backward(g):
        a._accumulate(g * slope)

    return result(a.data * slope, (a,), backward)


def activation(a, kind, alpha=0.01):
    """Apply ``kind`` in {"sigmoid", "tanh", "leaky_relu", "linear"}."""
    if kind == "sigmoid":
        return sigmoid(a)
    if kind == "tanh":
        return tanh(a)
    if kind == "leaky_relu":
        return leaky_relu(a, alpha)
    if kind == "linear":
        return as_tensor(a)
    raise ConfigError(f"unknown activation {kind!r}")


# -- convolution and pooling ------------------------------------------------------


def _batched(x):
    if x.ndim == 3:
        return reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise DimensionError("image op", "(B, H, W, C) or (H, W, C)", x.shape)
    return x, False


def conv2d(x, kernels, bias, padding="same"):
    """Cross-correlation with ``K x K x Cin x F`` kernels, stride 1."""
    x, kernels, bias = as_tensor(x), as_tensor(kernels), as_tensor(bias)
    x, squeeze = _batched(x)
    if kernels.ndim != 4 or kernels.shape[0] != kernels.shape[1]:
        raise DimensionError("conv2d", "square K x K x Cin x F kernels", kernels.shape)
    k, _, cin, f = kernels.shape
    if k % 2 == 0:
        raise ConfigError(f"conv2d kernel size must be odd, got {k}")
    if x.shape[3] != cin:
        raise DimensionError("conv2d", f"{cin} input channels", x.shape[3])
    if bias.shape != (f,):
        raise DimensionError("conv2d", f"bias shape ({f},)", bias.shape)
    if padding not in ("same", "valid"):
        raise ConfigError(f"unknown padding {padding!r}")

    b, h, w, _ = x.shape
    p = k // 2 if padding == "same" else 0
    ho, wo = h + 2 * p - k + 1, w + 2 * p - k + 1
    if ho <= 0 or wo <= 0:
        raise DimensionError("conv2d", f"spatial extent >= {k}", (h, w))
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p), (0, 0))) if p else x.data
    if k == 1:
        cols = xp.reshape(-1, cin)
    else:
        cols = np.concatenate(
            [xp[:, i : i + ho, j : j + wo, :] for i in range(k) for j in range(k)], axis=-1
        ).reshape(-1, k * k * cin)
    wmat = kernels.data.reshape(k * k * cin, f)
    out = (cols @ wmat).reshape(b, ho, wo, f) + bias.data

    def backward(g):
        g2 = g.reshape(-1, f)
        if kernels.requires_grad:
            kernels._accumulate((cols.T @ g2).reshape(kernels.shape))
        if bias.requires_grad:
            bias._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            dcols = (g2 @ wmat.T).reshape(b, ho, wo, k * k, cin)
            dxp = np.zeros_like(xp)
            for i in range(k):
                for j in range(k):
                    dxp[:, i : i + ho, j : j + wo, :] += dcols[:, :, :, i * k + j, :]
            x._accumulate(dxp[:, p : p + h, p : p + w, :] if p else dxp)

    y = result(out, (x, kernels, bias), backward)
    return reshape(y, y.shape[1:]) if squeeze else y


def maxpool2d(x, pool_h, pool_w=None, layer=None):
    """Non-overlapping max pooling; gradient goes to the first maximum."""
    x = as_tensor(x)
    pool_w = pool_h if pool_w is None else pool_w
    x, squeeze = _batched(x)
    b, h, w, c = x.shape
    if h % pool_h or w % pool_w:
        raise ConfigError(
            f"pool {pool_h}x{pool_w} does not divide input extent {h}x{w}", layer=layer
        )
    ho, wo = h // pool_h, w // pool_w
    win = (
        x.data.reshape(b, ho, pool_h, wo, pool_w, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(b, ho, wo, c, pool_h * pool_w)
    )
    # argmax returns the first maximum in row-major window order
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        dwin = np.zeros(win.shape, dtype=g.dtype)
        np.put_along_axis(dwin, idx[..., None], g[..., None], axis=-1)
        dx = (
            dwin.reshape(b, ho, wo, c, pool_h, pool_w)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(b, h, w, c)
        )
        x._accumulate(dx)

    y = result(out, (x,), backward)
    return reshape(y, y.shape[1:]) if squeeze else y


def global_maxpool(x, layer=None):
    """Collapse the full spatial extent to 1 x 1."""
    x = as_tensor(x)
    h, w = x.shape[-3], x.shape[-2]
    return maxpool2d(x, h, w, layer=layer)


# -- loss and regularization ------------------------------------------------------


def mse_loss(output, target, weight=None):
    """Mean of squared errors over every element.

    For a single length-N code this is ``(1/N) sum (o_i - g_i)^2`` and the
    gradient reaching ``o_i`` is ``(2/N)(o_i - g_i)``.  An optional
    ``weight`` array (broadcast against the target) scales each term.
    """
    output = as_tensor(output)
    target = np.asarray(target.data if isinstance(target, Tensor) else target)
    if target.shape != output.shape:
        raise DimensionError("mse_loss", output.shape, target.shape)
    target = target.astype(output.dtype)
    diff = output.data - target
    n = diff.size
    w = None if weight is None else np.broadcast_to(np.asarray(weight, output.dtype), diff.shape)
    wdiff = diff if w is None else w * diff

    def backward(g):
        output._accumulate(g * (2.0 / n) * wdiff)

    return result(np.asarray(np.mean(wdiff * diff), dtype=output.dtype), (output,), backward)


def dropout(x, rate, training, rng=None):
    """Inverted dropout; the identity at inference or when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)

    def backward(g):
        x._accumulate(g * keep)

    return result(x.data * keep, (x,), backward)
