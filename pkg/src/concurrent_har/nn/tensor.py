"""Array container with a reverse-mode gradient tape."""

from __future__ import annotations

import numpy as np

from ..errors import GraphStateError, NonFiniteError

DEFAULT_DTYPE = np.float32


class Tensor:
    """An n-dimensional array plus an optional gradient slot.

    Tensors produced by an operation remember their parents and a closure
    that pushes the output gradient back to them.  Leaves created with
    ``requires_grad=True`` are trainable parameters.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None

    # -- structure ---------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def detach(self):
        """Same values, cut from the tape."""
        return Tensor(self.data, name=self.name)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def __len__(self):
        return len(self.data)

    # -- tape ----------------------------------------------------------------
    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if g.shape != self.data.shape:
            raise GraphStateError(
                f"gradient shape {g.shape} does not match value shape {self.data.shape}"
            )
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Propagate ``d self`` to every reachable tensor that requires grad."""
        if self._backward is None:
            raise GraphStateError(
                "backward() called on a tensor with no recorded forward operation"
            )
        if grad is None:
            if self.data.size != 1:
                raise GraphStateError("backward() without a seed needs a scalar root")
            grad = np.ones_like(self.data)
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteError("non-finite value at backward root", name=self.name)

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        self.grad = np.asarray(grad, dtype=self.data.dtype).reshape(self.data.shape).copy()
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node is not self:
                    # interior gradients are not needed after propagation
                    node.grad = None


def result(data, parents, backward):
    """Wrap ``data`` as an op output, recording the tape only when needed."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)
