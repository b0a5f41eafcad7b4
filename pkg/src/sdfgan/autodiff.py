"""Reverse-mode automatic differentiation over numpy arrays.

A forward pass builds a graph of ``Var`` nodes (a Wengert list); calling
``backward`` on a scalar root walks the recorded operations in reverse
topological order and accumulates gradients into every node's ``grad``.

Design points that matter elsewhere in the package:

* dtype follows the inputs (float32 for training, float64 in gradient
  verification tests); op internals avoid numpy scalar promotion.
* each recorded graph supports exactly one backward pass; a second call
  on the same root raises.
* ``custom`` lets other modules register linear ops (gather/scatter,
  im2col/col2im, Jacobian contractions) without touching this file.
* gradients of gradient-dependent losses are obtained by building the
  inner gradient explicitly out of these same primitives, so no
  second-order machinery lives here.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class Var:
    """One node of the tape: a value, its parents, and a pullback."""

    __slots__ = ("value", "parents", "_pullback", "grad", "_done")

    def __init__(self, value, parents: tuple = (), pullback=None):
        self.value = np.asarray(value)
        self.parents = parents
        self._pullback = pullback
        self.grad = None
        self._done = False

    # --- graph bookkeeping ---

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += g

    def backward(self):
        """Reverse sweep from this scalar root."""
        if self.value.size != 1:
            raise ValueError("backward requires a scalar (size-1) output")
        if self._done:
            raise RuntimeError("backward already ran for this recorded graph")
        self._done = True
        order = _toposort(self)
        self.grad = np.ones_like(self.value)
        for node in order:
            if node._pullback is not None and node.grad is not None:
                node._pullback(node.grad)

    # --- arithmetic ---

    def _coerce(self, other) -> "Var":
        if isinstance(other, Var):
            return other
        return Var(np.asarray(other, dtype=self.value.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        out = Var(self.value + other.value, (self, other))

        def pull(g):
            self._accumulate(_unbroadcast(g, self.value.shape))
            other._accumulate(_unbroadcast(g, other.value.shape))

        out._pullback = pull
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Var(-self.value, (self,))
        out._pullback = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        out = Var(self.value * other.value, (self, other))

        def pull(g):
            self._accumulate(_unbroadcast(g * other.value, self.value.shape))
            other._accumulate(_unbroadcast(g * self.value, other.value.shape))

        out._pullback = pull
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        inv = 1.0 / other.value
        out = Var(self.value * inv, (self, other))

        def pull(g):
            self._accumulate(_unbroadcast(g * inv, self.value.shape))
            other._accumulate(
                _unbroadcast(-g * self.value * inv * inv, other.value.shape)
            )

        out._pullback = pull
        return out

    def __rtruediv__(self, other):
        return self._coerce(other) / self

    def __matmul__(self, other):
        other = self._coerce(other)
        out = Var(self.value @ other.value, (self, other))

        def pull(g):
            self._accumulate(g @ other.value.T)
            other._accumulate(self.value.T @ g)

        out._pullback = pull
        return out

    def __getitem__(self, idx):
        out = Var(self.value[idx], (self,))

        def pull(g):
            full = np.zeros_like(self.value)
            np.add.at(full, idx, g)
            self._accumulate(full)

        out._pullback = pull
        return out

    # --- shape ops ---

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = Var(self.value.reshape(shape), (self,))
        out._pullback = lambda g: self._accumulate(g.reshape(self.value.shape))
        return out

    def sum(self, axis=None, keepdims=False):
        out = Var(self.value.sum(axis=axis, keepdims=keepdims), (self,))

        def pull(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, self.value.shape).copy())

        out._pullback = pull
        return out

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else np.prod(
            [self.value.shape[a] for a in np.atleast_1d(axis)]
        )
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))


def _toposort(root: Var) -> list:
    """Reverse topological order via an iterative postorder walk."""
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    return list(reversed(order))


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def custom(value, parents: Sequence[Var], pullback: Callable) -> Var:
    """Register an externally defined op.

    ``pullback(g)`` receives the output cotangent and must call
    ``parent._accumulate`` for each parent it touches.
    """
    return Var(value, tuple(parents), pullback)


# === elementwise functions ===

def exp(x: Var) -> Var:
    v = np.exp(x.value)
    out = Var(v, (x,))
    out._pullback = lambda g: x._accumulate(g * v)
    return out


def log(x: Var) -> Var:
    out = Var(np.log(x.value), (x,))
    out._pullback = lambda g: x._accumulate(g / x.value)
    return out


def sin(x: Var) -> Var:
    out = Var(np.sin(x.value), (x,))
    out._pullback = lambda g: x._accumulate(g * np.cos(x.value))
    return out


def cos(x: Var) -> Var:
    out = Var(np.cos(x.value), (x,))
    out._pullback = lambda g: x._accumulate(-g * np.sin(x.value))
    return out


def sqrt(x: Var) -> Var:
    v = np.sqrt(x.value)
    out = Var(v, (x,))

    def pull(g):
        # subgradient 0 at the origin keeps norms of zero vectors trainable
        safe = np.where(v > 0, v, 1.0)
        x._accumulate(np.where(v > 0, g * 0.5 / safe, 0.0).astype(x.value.dtype))

    out._pullback = pull
    return out


def absolute(x: Var) -> Var:
    out = Var(np.abs(x.value), (x,))
    out._pullback = lambda g: x._accumulate(g * np.sign(x.value))
    return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # branch on sign so neither exponential overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Var) -> Var:
    v = _sigmoid(np.asarray(x.value))
    out = Var(v, (x,))
    out._pullback = lambda g: x._accumulate(g * v * (1.0 - v))
    return out


def softplus(x: Var) -> Var:
    v = np.maximum(x.value, 0.0) + np.log1p(np.exp(-np.abs(x.value)))
    out = Var(v, (x,))
    out._pullback = lambda g: x._accumulate(g * _sigmoid(np.asarray(x.value)))
    return out


def relu(x: Var) -> Var:
    mask = x.value > 0
    out = Var(np.where(mask, x.value, 0.0).astype(x.value.dtype), (x,))
    out._pullback = lambda g: x._accumulate(g * mask)
    return out


def leaky_relu(x: Var, alpha: float = 0.2) -> Var:
    mask = x.value > 0
    slope = np.where(mask, 1.0, alpha).astype(x.value.dtype)
    out = Var(x.value * slope, (x,))
    out._pullback = lambda g: x._accumulate(g * slope)
    return out


def square(x: Var) -> Var:
    return x * x


def transpose(x: Var) -> Var:
    out = Var(x.value.T, (x,))
    out._pullback = lambda g: x._accumulate(g.T)
    return out


def concat(parts: Sequence[Var], axis: int = -1) -> Var:
    parts = [as_var(p) for p in parts]
    out = Var(np.concatenate([p.value for p in parts], axis=axis), tuple(parts))
    sizes = [p.value.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def pull(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            p._accumulate(piece)

    out._pullback = pull
    return out


def stack(parts: Sequence[Var], axis: int = 0) -> Var:
    parts = [as_var(p) for p in parts]
    out = Var(np.stack([p.value for p in parts], axis=axis), tuple(parts))

    def pull(g):
        for i, p in enumerate(parts):
            p._accumulate(np.take(g, i, axis=axis))

    out._pullback = pull
    return out


def zero_grads(params: Sequence[Var]):
    for p in params:
        p.grad = None


# === verification ===

def finite_diff_check(f: Callable[[], Var], params: Sequence[Var], h: float = 1e-5,
                      rng: np.random.Generator | None = None,
                      n_probes: int | None = None) -> float:
    """Compare reverse-mode gradients of ``f()`` against central differences.

    ``f`` must rebuild its graph from the current parameter values on
    every call. Returns the max relative error over all parameter
    elements, or over ``n_probes`` randomly chosen ones.
    """
    zero_grads(params)
    root = f()
    root.backward()
    grads = [np.zeros_like(p.value) if p.grad is None else p.grad.copy() for p in params]

    probes = []
    for pi, p in enumerate(params):
        for flat in range(p.value.size):
            probes.append((pi, flat))
    if n_probes is not None and n_probes < len(probes):
        if rng is None:
            rng = np.random.default_rng(0)
        idx = rng.choice(len(probes), size=n_probes, replace=False)
        probes = [probes[i] for i in idx]

    worst = 0.0
    for pi, flat in probes:
        p = params[pi]
        orig = p.value.flat[flat]
        p.value.flat[flat] = orig + h
        hi = float(f().value)
        p.value.flat[flat] = orig - h
        lo = float(f().value)
        p.value.flat[flat] = orig
        fd = (hi - lo) / (2.0 * h)
        ad = float(grads[pi].flat[flat])
        err = abs(ad - fd) / max(abs(ad), abs(fd), 1e-6)
        worst = max(worst, err)
    return worst


# === optimizer ===

class Adam:
    """Adam with bias correction; state is serializable for checkpoints."""

    def __init__(self, params: Sequence[Var], lr: float = 4e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * (g * g)
            m_hat = self.m[i] / (1.0 - b1 ** self.t)
            v_hat = self.v[i] / (1.0 - b2 ** self.t)
            p.value -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.value.dtype)

    def state_arrays(self):
        """Flat snapshot (m then v, in parameter order) plus step count."""
        return list(self.m) + list(self.v), self.t

    def load_state(self, arrays, t: int):
        n = len(self.params)
        if len(arrays) != 2 * n:
            raise ValueError("optimizer state does not match parameter count")
        for i in range(n):
            if arrays[i].shape != self.m[i].shape:
                raise ValueError("optimizer state shape mismatch")
            self.m[i] = arrays[i].astype(self.m[i].dtype)
            self.v[i] = arrays[n + i].astype(self.v[i].dtype)
        self.t = int(t)
