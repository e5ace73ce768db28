"""Reverse-mode autodiff over float64 numpy buffers.

Each operation returns a new Tensor holding the forward value, the parent
tensors, and a closure that routes the output gradient to the parents.
``backward`` on a scalar runs the tape in reverse topological order, then
releases the graph; calling it again without a fresh forward pass raises.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "add",
    "mul",
    "matmul",
    "sigmoid",
    "tanh",
    "sqrt",
    "softmax",
    "tensor_sum",
    "mean",
    "reshape",
    "transpose",
    "concat",
    "stack",
    "conv3d_same",
    "dropout",
    "backward",
]


class Tensor:
    """A dense float64 array with an optional gradient buffer and tape record."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def backward(self) -> None:
        backward(self)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        bdata = np.asarray(b, dtype=np.float64)
        out = _result(a.data + bdata, (a,), None)
        if out.requires_grad:
            def back(g, a=a, shape=a.data.shape):
                _accumulate(a, _unbroadcast(g, shape))
            out._backward = back
        return out
    out = _result(a.data + b.data, (a, b), None)
    if out.requires_grad:
        def back(g, a=a, b=b):
            _accumulate(a, _unbroadcast(g, a.data.shape))
            _accumulate(b, _unbroadcast(g, b.data.shape))
        out._backward = back
    return out


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        bdata = np.asarray(b, dtype=np.float64)
        out = _result(a.data * bdata, (a,), None)
        if out.requires_grad:
            def back(g, a=a, bdata=bdata):
                _accumulate(a, _unbroadcast(g * bdata, a.data.shape))
            out._backward = back
        return out
    out = _result(a.data * b.data, (a, b), None)
    if out.requires_grad:
        adata, bdata = a.data, b.data
        def back(g, a=a, b=b, adata=adata, bdata=bdata):
            _accumulate(a, _unbroadcast(g * bdata, adata.shape))
            _accumulate(b, _unbroadcast(g * adata, bdata.shape))
        out._backward = back
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = _result(a.data @ b.data, (a, b), None)
    if out.requires_grad:
        def back(g, a=a, b=b):
            _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
            _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))
        out._backward = back
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    out = _result(s, (x,), None)
    if out.requires_grad:
        def back(g, x=x, s=s):
            _accumulate(x, g * s * (1.0 - s))
        out._backward = back
    return out


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    out = _result(t, (x,), None)
    if out.requires_grad:
        def back(g, x=x, t=t):
            _accumulate(x, g * (1.0 - t * t))
        out._backward = back
    return out


def sqrt(x: Tensor) -> Tensor:
    r = np.sqrt(x.data)
    out = _result(r, (x,), None)
    if out.requires_grad:
        def back(g, x=x, r=r):
            _accumulate(x, g * 0.5 / r)
        out._backward = back
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = _result(s, (x,), None)
    if out.requires_grad:
        def back(g, x=x, s=s, axis=axis):
            inner = (g * s).sum(axis=axis, keepdims=True)
            _accumulate(x, s * (g - inner))
        out._backward = back
    return out


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = _result(x.data.sum(axis=axis, keepdims=keepdims), (x,), None)
    if out.requires_grad:
        def back(g, x=x, axis=axis, keepdims=keepdims):
            if axis is None:
                _accumulate(x, np.broadcast_to(g, x.data.shape))
                return
            if not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                g = np.expand_dims(g, axes)
            _accumulate(x, np.broadcast_to(g, x.data.shape))
        out._backward = back
    return out


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.data.shape[a] for a in axes]))
    return mul(tensor_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    out = _result(x.data.reshape(shape), (x,), None)
    if out.requires_grad:
        def back(g, x=x):
            _accumulate(x, g.reshape(x.data.shape))
        out._backward = back
    return out


def transpose(x: Tensor, axes) -> Tensor:
    out = _result(np.transpose(x.data, axes), (x,), None)
    if out.requires_grad:
        inverse = tuple(np.argsort(axes))
        def back(g, x=x, inverse=inverse):
            _accumulate(x, np.transpose(g, inverse))
        out._backward = back
    return out


def getitem(x: Tensor, idx) -> Tensor:
    out = _result(x.data[idx], (x,), None)
    if out.requires_grad:
        def back(g, x=x, idx=idx):
            buf = np.zeros_like(x.data)
            np.add.at(buf, idx, g)
            _accumulate(x, buf)
        out._backward = back
    return out


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    out = _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, None)
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in tensors]
        def back(g, tensors=tensors, sizes=sizes, axis=axis):
            offsets = np.cumsum([0] + sizes)
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accumulate(t, g[tuple(sl)])
        out._backward = back
    return out


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    out = _result(np.stack([t.data for t in tensors], axis=axis), tensors, None)
    if out.requires_grad:
        def back(g, tensors=tensors, axis=axis):
            for k, t in enumerate(tensors):
                _accumulate(t, np.take(g, k, axis=axis))
        out._backward = back
    return out


def conv3d_same(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """Single-channel 3-d convolution with zero padding and stride one.

    ``x`` has shape (batch, depth, height, width); the kernel is cubic with
    an odd side so same-padding is symmetric and the output shape equals
    the input shape.
    """
    ks = weights.data.shape[0]
    if weights.data.shape != (ks, ks, ks):
        raise ValueError(f"kernel must be cubic, got shape {weights.data.shape}")
    if ks % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {ks}")
    if x.data.ndim != 4:
        raise ValueError(f"conv3d input must have rank 4, got {x.data.ndim}")
    r = ks // 2
    _, d, hgt, wid = x.data.shape
    padded = np.pad(x.data, ((0, 0), (r, r), (r, r), (r, r)))
    result = np.full(x.data.shape, float(bias.data))
    w = weights.data
    for u in range(ks):
        for v in range(ks):
            for k in range(ks):
                result += w[u, v, k] * padded[:, u : u + d, v : v + hgt, k : k + wid]
    out = _result(result, (x, weights, bias), None)
    if out.requires_grad:
        def back(g, x=x, weights=weights, bias=bias, padded=padded, ks=ks, r=r):
            _, d, hgt, wid = x.data.shape
            gw = np.empty((ks, ks, ks))
            gx_padded = np.zeros_like(padded)
            w = weights.data
            for u in range(ks):
                for v in range(ks):
                    for k in range(ks):
                        sl = padded[:, u : u + d, v : v + hgt, k : k + wid]
                        gw[u, v, k] = float(np.sum(g * sl))
                        gx_padded[:, u : u + d, v : v + hgt, k : k + wid] += w[u, v, k] * g
            _accumulate(weights, gw)
            _accumulate(bias, np.asarray(g.sum()).reshape(bias.data.shape))
            _accumulate(x, gx_padded[:, r : r + d, r : r + hgt, r : r + wid])
        out._backward = back
    return out


def dropout(x: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability ``rate`` and rescale survivors
    during training; an exact identity at inference time."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs a random generator")
    mask = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    out = _result(x.data * mask, (x,), None)
    if out.requires_grad:
        def back(g, x=x, mask=mask):
            _accumulate(x, g * mask)
        out._backward = back
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate gradients of everything on the tape reachable from ``loss``.

    The loss must be a scalar produced by tracked operations. The graph is
    released afterwards, so a second call without a new forward pass raises.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss._consumed:
        raise RuntimeError("backward graph already consumed; rerun the forward pass")
    if not loss.requires_grad or loss._backward is None:
        raise RuntimeError("loss is detached from the graph; no tracked operations reach it")
    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)
    for node in order:
        node._consumed = True
        node._backward = None
        node._parents = ()
