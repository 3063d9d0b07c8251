"""A deliberately small reverse-mode differentiation engine over numpy arrays.

Only the operations the weighting networks need are provided: matrix
products, broadcasting add/multiply, sigmoid, softmax, sum/mean and
transpose. Nodes that do not require gradients are never differentiated,
which keeps products with the (constant) projection matrix cheap.
"""

import numpy as np


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = parents
        self._backward = backward

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self):
        return transpose(self)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -_wrap(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(_wrap(other), self)

    def _accumulate(self, g):
        # gradients are never updated in place, so sharing g is safe
        if self.grad is None:
            self.grad = np.asarray(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    def backward(self, grad=None):
        """Back-propagate from this node; leaf gradients land in ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
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
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # interior node: free the buffer once it has been consumed
                    node.grad = None


def _wrap(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req, parents=parents if req else (),
                  backward=backward if req else None)


def add(a, b):
    a, b = _wrap(a), _wrap(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _node(a.data + b.data, (a, b), backward)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), backward)


def matmul(a, b):
    a, b = _wrap(a), _wrap(b)

    def backward(g):
        if a.requires_grad:
            if b.data.ndim == 1:
                a._accumulate(np.multiply.outer(g, b.data))
            else:
                a._accumulate(g @ b.data.T if a.data.ndim == 2 else b.data @ g)
        if b.requires_grad:
            if a.data.ndim == 1:
                b._accumulate(np.multiply.outer(a.data, g))
            else:
                b._accumulate(a.data.T @ g)

    return _node(a.data @ b.data, (a, b), backward)


def transpose(a):
    a = _wrap(a)

    def backward(g):
        a._accumulate(g.T)

    return _node(a.data.T, (a,), backward)


def sigmoid(a):
    a = _wrap(a)
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    out[~pos] = ez / (1.0 + ez)

    def backward(g):
        a._accumulate(g * out * (1.0 - out))

    return _node(out, (a,), backward)


def softmax(a, axis=-1):
    a = _wrap(a)
    out = a.data - np.max(a.data, axis=axis, keepdims=True)
    np.exp(out, out=out)
    out /= np.sum(out, axis=axis, keepdims=True)

    def backward(g):
        r = g - np.sum(g * out, axis=axis, keepdims=True)
        r *= out
        a._accumulate(r)

    return _node(out, (a,), backward)


def tsum(a, axis=None):
    a = _wrap(a)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape))
        else:
            a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _node(np.sum(a.data, axis=axis), (a,), backward)


def mean(a, axis=None):
    a = _wrap(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / count)
