"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

The "tape" is the implicit operation graph: every op returns a
:class:`Tensor` holding its numpy value, its parents, and a backward rule.
``backward()`` on a scalar output traverses the graph once in reverse
topological order and accumulates gradients into the ``requires_grad``
leaves. A graph can be backpropagated through only once.

Quaternion operations (``qmul``, ``qrotate``, ``qnormalize``) are composite
primitives with hand-written backward rules, since forward kinematics
backpropagates through long chains of them.
"""

from __future__ import annotations

import numpy as np

EPS_NORM = 1e-12


class NumericalError(ArithmeticError):
    """Raised when non-finite values are detected at tape boundaries."""


class TapeConsumedError(RuntimeError):
    """Raised when backward() is invoked twice through the same graph."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce ``grad`` back to ``shape`` by summing broadcast axes."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A numpy array plus its position in the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_grad_fns", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._grad_fns = ()
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph traversal ---------------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        if self._consumed:
            raise TapeConsumedError("this graph has already been backpropagated")
        if not np.all(np.isfinite(self.data)):
            raise NumericalError("non-finite value at tape output")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node._consumed = True
            if node.requires_grad and not node._parents:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad = node.grad + g
            for parent, fn in zip(node._parents, node._grad_fns):
                contrib = fn(g)
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + contrib
                else:
                    grads[key] = contrib


    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, grad_fns) -> Tensor:
    """Build an op output; graph edges are kept only toward grad-requiring
    or non-leaf parents so constant subgraphs are pruned."""
    out = Tensor(data)
    kept = [(p, f) for p, f in zip(parents, grad_fns) if p.requires_grad or p._parents]
    if kept:
        out._parents = tuple(p for p, _ in kept)
        out._grad_fns = tuple(f for _, f in kept)
        out.requires_grad = True
    return out


# -- arithmetic --------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data
    return _make(
        data,
        (a, b),
        (lambda g: _unbroadcast(g, a.data.shape), lambda g: _unbroadcast(g, b.data.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data
    return _make(
        data,
        (a, b),
        (
            lambda g: _unbroadcast(g * b.data, a.data.shape),
            lambda g: _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data
    return _make(
        data,
        (a, b),
        (
            lambda g: _unbroadcast(g / b.data, a.data.shape),
            lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data @ b.data

    def ga(g):
        if b.data.ndim == 1:
            return _unbroadcast(np.multiply.outer(g, b.data), a.data.shape)
        return _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)

    def gb(g):
        if a.data.ndim == 1:
            return _unbroadcast(np.multiply.outer(a.data, g), b.data.shape)
        return _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)

    return _make(data, (a, b), (ga, gb))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), (lambda g: 2.0 * a.data * g,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)
    safe = np.maximum(data, EPS_NORM)
    return _make(data, (a,), (lambda g: 0.5 * g / safe,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    data = np.tanh(a.data)
    return _make(data, (a,), (lambda g: g * (1.0 - data * data),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    data = 1.0 / (1.0 + np.exp(-a.data))
    return _make(data, (a,), (lambda g: g * data * (1.0 - data),))


def leaky_relu(a, slope: float = 0.05) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0
    data = np.where(mask, a.data, slope * a.data)
    return _make(data, (a,), (lambda g: g * np.where(mask, 1.0, slope),))


def sin(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.sin(a.data), (a,), (lambda g: g * np.cos(a.data),))


def cos(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.cos(a.data), (a,), (lambda g: -g * np.sin(a.data),))


def asin(a) -> Tensor:
    a = as_tensor(a)
    clipped = np.clip(a.data, -1.0, 1.0)
    denom = np.sqrt(np.maximum(1.0 - clipped * clipped, EPS_NORM))
    return _make(np.arcsin(clipped), (a,), (lambda g: g / denom,))


def atan2(y, x) -> Tensor:
    y, x = as_tensor(y), as_tensor(x)
    denom = np.maximum(y.data * y.data + x.data * x.data, EPS_NORM)
    return _make(
        np.arctan2(y.data, x.data),
        (y, x),
        (
            lambda g: _unbroadcast(g * x.data / denom, y.data.shape),
            lambda g: _unbroadcast(-g * y.data / denom, x.data.shape),
        ),
    )


def absval(a) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.data)
    return _make(np.abs(a.data), (a,), (lambda g: g * sign,))


def wrap_angle(a) -> Tensor:
    """Wrap to (-pi, pi]; the 2*pi*k shift is locally constant so the
    gradient passes through unchanged."""
    a = as_tensor(a)
    data = np.pi - np.mod(np.pi - a.data, 2.0 * np.pi)
    return _make(data, (a,), (lambda g: g,))


# -- reductions and shaping ---------------------------------------------------


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def grad(g):
        if axis is None:
            return np.broadcast_to(g, a.data.shape).copy()
        if not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.data.shape).copy()

    return _make(data, (a,), (grad,))


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.data.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), (lambda g: g.reshape(a.data.shape),))


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_grad(i):
        def grad(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            return g[tuple(sl)]

        return grad

    return _make(data, tuple(tensors), tuple(make_grad(i) for i in range(len(tensors))))


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.stack([t.data for t in tensors], axis=axis)

    def make_grad(i):
        return lambda g: np.take(g, i, axis=axis)

    return _make(data, tuple(tensors), tuple(make_grad(i) for i in range(len(tensors))))


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    data = a.data[idx]

    def grad(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return out

    return _make(data, (a,), (grad,))


def l2norm(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm along ``axis`` with an epsilon guard in the derivative."""
    a = as_tensor(a)
    n = np.linalg.norm(a.data, axis=axis, keepdims=True)
    safe = np.maximum(n, EPS_NORM)
    data = n if keepdims else np.squeeze(n, axis=axis)

    def grad(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return g * a.data / safe

    return _make(data, (a,), (grad,))


# -- quaternion primitives ----------------------------------------------------


def _qmul_np(a, b):
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


_CONJ = np.array([1.0, -1.0, -1.0, -1.0])


def qconj(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * _CONJ, (a,), (lambda g: g * _CONJ,))


def qmul(a, b) -> Tensor:
    """Batched Hamilton product on ``(..., 4)`` arrays.

    Backward uses the adjoint identities grad_a = g x b*, grad_b = a* x g.
    """
    a, b = as_tensor(a), as_tensor(b)
    data = _qmul_np(a.data, b.data)
    return _make(
        data,
        (a, b),
        (
            lambda g: _unbroadcast(_qmul_np(g, b.data * _CONJ), a.data.shape),
            lambda g: _unbroadcast(_qmul_np(a.data * _CONJ, g), b.data.shape),
        ),
    )


def _qrotate_np(q, v):
    """Vector part of q (0,v) q*; scales by |q|^2 for non-unit q."""
    p = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)
    return _qmul_np(_qmul_np(q, p), q * _CONJ)[..., 1:]


def qrotate(q, v) -> Tensor:
    """Rotate 3-vectors by quaternions: vector part of q (0,v) q*."""
    q, v = as_tensor(q), as_tensor(v)
    data = _qrotate_np(q.data, v.data)

    def grad_q(g):
        zeros = np.zeros(np.broadcast_shapes(g.shape[:-1], v.data.shape[:-1]) + (1,))
        g4 = np.concatenate([np.broadcast_to(zeros, zeros.shape), g], axis=-1)
        p4 = np.concatenate([np.zeros(v.data.shape[:-1] + (1,)), v.data], axis=-1)
        term1 = _qmul_np(_qmul_np(g4, q.data), p4 * _CONJ)
        term2 = (_qmul_np(_qmul_np(p4 * _CONJ, q.data * _CONJ), g4)) * _CONJ
        return _unbroadcast(term1 + term2, q.data.shape)

    def grad_v(g):
        return _unbroadcast(_qrotate_np(q.data * _CONJ, g), v.data.shape)

    return _make(data, (q, v), (grad_q, grad_v))


def qnormalize(q) -> Tensor:
    """Normalize ``(..., 4)`` rows to unit length (explicit normalization
    layer). The backward projection is orthogonal to the output direction."""
    q = as_tensor(q)
    n = np.maximum(np.linalg.norm(q.data, axis=-1, keepdims=True), EPS_NORM)
    data = q.data / n

    def grad(g):
        return (g - data * np.sum(g * data, axis=-1, keepdims=True)) / n

    return _make(data, (q,), (grad,))


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape))


def parameter(data, rng: np.random.Generator | None = None, scale: float | None = None) -> Tensor:
    """Create a trainable leaf tensor; with ``rng`` draws uniform(-scale, scale)."""
    if rng is not None:
        data = rng.uniform(-scale, scale, size=data)
    return Tensor(np.asarray(data, dtype=float), requires_grad=True)
