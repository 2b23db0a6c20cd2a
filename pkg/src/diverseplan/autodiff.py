"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A tape of Tensor nodes built by operator overloading; ``backward()`` on a
scalar loss walks the topologically sorted tape. Broadcasting follows
numpy; gradients are summed back down to each operand's shape. Every op
here is validated against central finite differences in the test suite.
"""
from __future__ import annotations

import numpy as np


def _unbroadcast(grad, shape):
    """Sum a gradient down to the shape it was broadcast from."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing ----------------------------------------------------

    @classmethod
    def _make(cls, data, parents, backward):
        out = cls(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def detach(self):
        """Cut the graph: same values, no gradient path (stop-gradient)."""
        return Tensor(self.data)

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo, seen = [], set()

        def visit(node):
            if id(node) in seen or not node.requires_grad:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            topo.append(node)

        visit(self)
        for node in topo:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- arithmetic ----------------------------------------------------------

    @staticmethod
    def _coerce(x):
        return x if isinstance(x, Tensor) else Tensor(x)

    def __add__(self, other):
        other = self._coerce(other)
        out = Tensor._make(self.data + other.data, (self, other), None)

        def backward(g):
            if self.requires_grad:
                self.grad += _unbroadcast(g, self.data.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(g, other.data.shape)

        out._backward = backward
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor._make(-self.data, (self,), None)

        def backward(g):
            if self.requires_grad:
                self.grad += -g

        out._backward = backward
        return out

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        out = Tensor._make(self.data * other.data, (self, other), None)

        def backward(g):
            if self.requires_grad:
                self.grad += _unbroadcast(g * other.data, self.data.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(g * self.data, other.data.shape)

        out._backward = backward
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        out = Tensor._make(self.data / other.data, (self, other), None)

        def backward(g):
            if self.requires_grad:
                self.grad += _unbroadcast(g / other.data, self.data.shape)
            if other.requires_grad:
                other.grad += _unbroadcast(
                    -g * self.data / (other.data**2), other.data.shape
                )

        out._backward = backward
        return out

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __pow__(self, exponent):
        if not np.isscalar(exponent):
            raise TypeError("only scalar exponents are supported")
        out = Tensor._make(self.data**exponent, (self,), None)

        def backward(g):
            if self.requires_grad:
                self.grad += g * exponent * self.data ** (exponent - 1)

        out._backward = backward
        return out

    def __matmul__(self, other):
        other = self._coerce(other)
        out = Tensor._make(self.data @ other.data, (self, other), None)

        def backward(g):
            if self.requires_grad:
                self.grad += g @ other.data.swapaxes(-1, -2)
            if other.requires_grad:
                grad = self.data.swapaxes(-1, -2) @ g
                other.grad += _unbroadcast(grad, other.data.shape)

        out._backward = backward
        return out

    def __getitem__(self, key):
        out = Tensor._make(self.data[key], (self,), None)

        def backward(g):
            if self.requires_grad:
                np.add.at(self.grad, key, g)

        out._backward = backward
        return out

    # -- elementwise functions ----------------------------------------------

    def exp(self):
        value = np.exp(self.data)
        out = Tensor._make(value, (self,), None)

        def backward(g):
            if self.requires_grad:
                self.grad += g * value

        out._backward = backward
        return out

    def log(self):
        out = Tensor._make(np.log(self.data), (self,), None)

        def backward(g):
            if self.requires_grad:
                self.grad += g / self.data

        out._backward = backward
        return out

    def sqrt(self):
        value = np.sqrt(self.data)
        out = Tensor._make(value, (self,), None)

        def backward(g):
            if self.requires_grad:
                self.grad += g * 0.5 / value

        out._backward = backward
        return out

    def tanh(self):
        value = np.tanh(self.data)
        out = Tensor._make(value, (self,), None)

        def backward(g):
            if self.requires_grad:
                self.grad += g * (1.0 - value**2)

        out._backward = backward
        return out

    def sigmoid(self):
        value = 1.0 / (1.0 + np.exp(-self.data))
        out = Tensor._make(value, (self,), None)

        def backward(g):
            if self.requires_grad:
                self.grad += g * value * (1.0 - value)

        out._backward = backward
        return out

    def relu(self):
        mask = self.data > 0
        out = Tensor._make(self.data * mask, (self,), None)

        def backward(g):
            if self.requires_grad:
                self.grad += g * mask

        out._backward = backward
        return out

    def abs(self):
        sign = np.sign(self.data)
        out = Tensor._make(np.abs(self.data), (self,), None)

        def backward(g):
            if self.requires_grad:
                self.grad += g * sign

        out._backward = backward
        return out

    def clamp(self, lo, hi):
        """Clip values; gradient passes only inside the open interval."""
        inside = (self.data > lo) & (self.data < hi)
        out = Tensor._make(np.clip(self.data, lo, hi), (self,), None)

        def backward(g):
            if self.requires_grad:
                self.grad += g * inside

        out._backward = backward
        return out

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out = Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), None)

        def backward(g):
            if not self.requires_grad:
                return
            if axis is None:
                self.grad += np.broadcast_to(g, self.data.shape)
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                self.grad += np.broadcast_to(gg, self.data.shape)

        out._backward = backward
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / n

    def _arg_reduce(self, axis, mode):
        argfun = np.argmax if mode == "max" else np.argmin
        if axis is None:
            flat_idx = argfun(self.data)
            value = self.data.reshape(-1)[flat_idx]
            out = Tensor._make(np.asarray(value), (self,), None)

            def backward(g):
                if self.requires_grad:
                    gflat = self.grad.reshape(-1)
                    gflat[flat_idx] += g

            out._backward = backward
            return out
        idx = argfun(self.data, axis=axis)
        value = np.take_along_axis(self.data, np.expand_dims(idx, axis), axis).squeeze(axis)
        out = Tensor._make(value, (self,), None)

        def backward(g):
            if self.requires_grad:
                np.put_along_axis(
                    self.grad,
                    np.expand_dims(idx, axis),
                    np.take_along_axis(self.grad, np.expand_dims(idx, axis), axis)
                    + np.expand_dims(g, axis),
                    axis,
                )

        out._backward = backward
        return out

    def max(self, axis=None):
        return self._arg_reduce(axis, "max")

    def min(self, axis=None):
        return self._arg_reduce(axis, "min")

    # -- shape ops -------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Tensor._make(self.data.reshape(shape), (self,), None)

        def backward(g):
            if self.requires_grad:
                self.grad += g.reshape(self.data.shape)

        out._backward = backward
        return out

    def transpose(self, axes):
        axes = tuple(axes)
        inverse = tuple(np.argsort(axes))
        out = Tensor._make(np.transpose(self.data, axes), (self,), None)

        def backward(g):
            if self.requires_grad:
                self.grad += np.transpose(g, inverse)

        out._backward = backward
        return out


def concat(tensors, axis=-1):
    tensors = [Tensor._coerce(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor._make(data, tuple(tensors), None)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t.grad += g[tuple(sl)]

    out._backward = backward
    return out


def gather_rows(t, idx):
    """Select rows t[idx] along axis 0; backward scatter-adds."""
    idx = np.asarray(idx)
    out = Tensor._make(t.data[idx], (t,), None)

    def backward(g):
        if t.requires_grad:
            np.add.at(t.grad, idx, g)

    out._backward = backward
    return out


def where(condition, a, b):
    """Elementwise select on a constant boolean condition."""
    condition = np.asarray(condition, dtype=bool)
    a = Tensor._coerce(a)
    b = Tensor._coerce(b)
    out = Tensor._make(np.where(condition, a.data, b.data), (a, b), None)

    def backward(g):
        if a.requires_grad:
            a.grad += _unbroadcast(g * condition, a.data.shape)
        if b.requires_grad:
            b.grad += _unbroadcast(g * ~condition, b.data.shape)

    out._backward = backward
    return out


def huber(residual, delta=1.0):
    """Huber penalty applied elementwise to a residual tensor."""
    a = residual.abs()
    quadratic = 0.5 * (residual * residual)
    linear = delta * a - 0.5 * delta**2
    return where(a.data <= delta, quadratic, linear)


# -- parameters and optimization ------------------------------------------


class Parameter(Tensor):
    """A named trainable tensor."""

    __slots__ = ("name",)

    def __init__(self, data, name=""):
        super().__init__(np.array(data, dtype=float), requires_grad=True)
        self.name = name


class Adam:
    """Adam with bias correction; state keyed by parameter identity order."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = np.zeros_like(p.data)

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def directional_gradient_check(loss_fn, params, rng, n_directions=10, h=1e-6):
    """Compare analytic directional derivatives with central differences.

    ``loss_fn`` must rebuild the graph from the current parameter data and
    return a scalar Tensor. Returns the worst relative error over random
    unit directions in the flattened parameter space.
    """
    loss = loss_fn()
    loss.backward()
    # Parameters unreachable from this loss get zero gradient.
    grads = [
        p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params
    ]
    worst = 0.0
    for _ in range(n_directions):
        direction = [rng.standard_normal(p.data.shape) for p in params]
        norm = np.sqrt(sum(np.sum(d * d) for d in direction))
        direction = [d / norm for d in direction]
        analytic = sum(np.sum(g * d) for g, d in zip(grads, direction))
        saved = [p.data.copy() for p in params]
        for p, d in zip(params, direction):
            p.data = p.data + h * d
        up = float(loss_fn().data)
        for p, s, d in zip(params, saved, direction):
            p.data = s - h * d
        down = float(loss_fn().data)
        for p, s in zip(params, saved):
            p.data = s
        numeric = (up - down) / (2 * h)
        scale = max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic - numeric) / scale)
    return worst
