"""Minimal reverse-mode autodiff engine over float64 numpy arrays.

Tensors record a tape of primitive operations; ``backward()`` on a scalar
loss walks the tape in reverse topological order. Only ``matmul`` and
``softmax_last`` consume an OpCounter (everything else is free in the MAC
accounting convention used by the cost model; explicit elementwise costs are
added by the callers that need them).
"""

from __future__ import annotations

import numpy as np

from .counter import NULL_COUNTER, OpCounter


class ShapeError(ValueError):
    """Raised when operand shapes violate an op's contract."""


class GraphError(RuntimeError):
    """Raised on misuse of the computation graph (double backward, ...)."""


def _as_array(values, shape=None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if shape is not None:
        arr = arr.reshape(shape)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "_spent")

    def __init__(self, data, requires_grad: bool = False, _prev=()):
        self.data = data if isinstance(data, np.ndarray) else _as_array(data)
        if self.data.dtype != np.float64:
            self.data = self.data.astype(np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = _prev
        self._spent = False

    # -- construction ------------------------------------------------------

    @staticmethod
    def from_values(values, shape=None, requires_grad: bool = False) -> "Tensor":
        """Create a leaf tensor from external data; rejects NaN/Inf."""
        arr = _as_array(values, shape)
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite values rejected at tensor creation")
        return Tensor(arr, requires_grad=requires_grad)

    # -- helpers -----------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- backward ----------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar loss through the recorded graph."""
        if self.data.size != 1:
            raise GraphError("backward requires a scalar loss")
        if self._spent:
            raise GraphError("backward called twice on the same graph")
        self._spent = True
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, int]] = [(self, 0)]
        while stack:
            node, state = stack.pop()
            if state == 0:
                if id(node) in visited:
                    continue
                visited.add(id(node))
                stack.append((node, 1))
                for child in node._prev:
                    if id(child) not in visited:
                        stack.append((child, 0))
            else:
                topo.append(node)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # free the tape as we go; a second backward needs a re-forward
                node._backward = None

    # -- operator sugar ----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -np.asarray(other, dtype=np.float64))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division not supported; use reciprocal explicitly")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) != 1 or not isinstance(shape[0], (tuple, list)) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)


def constant(values, shape=None) -> Tensor:
    return Tensor(_as_array(values, shape))


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(_as_array(x))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over broadcast dimensions back to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _make(data, inputs, backward) -> Tensor:
    req = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=req,
                 _prev=tuple(t for t in inputs if t.requires_grad))
    if req:
        out._backward = backward
    return out


# -- elementwise ----------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bw(g):
        x._accum(g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), bw)


def sigmoid(x: Tensor) -> Tensor:
    # numerically stable in both tails
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bw(g):
        x._accum(g * out * (1.0 - out))

    return _make(out, (x,), bw)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def bw(g):
        x._accum(g * out)

    return _make(out, (x,), bw)


def log(x: Tensor) -> Tensor:
    def bw(g):
        x._accum(g / x.data)

    return _make(np.log(x.data), (x,), bw)


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)

    def bw(g):
        x._accum(g * 0.5 / out)

    return _make(out, (x,), bw)


# -- matmul ---------------------------------------------------------------


def matmul(a: Tensor, b: Tensor, counter: OpCounter = NULL_COUNTER, *,
           store: bool = True, term: str | None = None,
           extra: str | None = None) -> Tensor:
    """Batched matrix product ``a @ b`` with broadcasting over leading dims.

    MAC count is prod(batch) * m * n * k; when ``store`` is set the output
    size is added to the stored-float count (training-mode accounting).
    ``extra`` routes the cost to an itemized bucket instead of the headline.
    """
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.data.shape} vs {b.data.shape}")
    data = np.matmul(a.data, b.data)
    if counter.enabled:
        k = a.data.shape[-1]
        macs = int(np.prod(data.shape, dtype=np.int64)) * k
        mem = data.size if store else 0
        if extra is not None:
            counter.add_extra(extra, macs=macs, mem=mem)
        else:
            counter.add(macs=macs, mem=mem, term=term)

    def bw(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accum(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accum(_unbroadcast(gb, b.data.shape))

    return _make(data, (a, b), bw)


# -- softmax / losses -----------------------------------------------------


def softmax_last(x: Tensor, counter: OpCounter = NULL_COUNTER, *,
                 store: bool = True, term: str | None = None,
                 extra: str | None = None) -> Tensor:
    """Stable softmax over the last dimension."""
    x = _coerce(x)
    if x.data.ndim == 0 or x.data.shape[-1] == 0:
        raise ShapeError("softmax_last requires a non-empty last dimension")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    out = ez / ez.sum(axis=-1, keepdims=True)
    if counter.enabled and store:
        if extra is not None:
            counter.add_extra(extra, mem=out.size)
        else:
            counter.add(mem=out.size, term=term)

    def bw(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        x._accum(out * (g - dot))

    return _make(out, (x,), bw)


def cross_entropy(logits: Tensor, targets: np.ndarray,
                  mask: np.ndarray | None = None) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under ``logits``.

    ``logits`` has shape [..., V]; ``targets`` the matching leading shape.
    ``mask`` (same shape as targets, truthy = counted) selects which
    positions contribute to the mean.
    """
    targets = np.asarray(targets)
    lead = logits.data.shape[:-1]
    if targets.shape != lead:
        raise ShapeError(f"targets shape {targets.shape} does not match logits {logits.data.shape}")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    tgt_logit = np.take_along_axis(z, targets[..., None], axis=-1)[..., 0]
    nll = lse - tgt_logit
    if mask is not None:
        m = np.asarray(mask, dtype=np.float64)
        count = m.sum()
        if count == 0:
            raise ShapeError("cross_entropy mask selects no positions")
        loss = (nll * m).sum() / count
    else:
        m = None
        count = nll.size
        loss = nll.mean()

    def bw(g):
        p = np.exp(z - lse[..., None])
        np.subtract.at(p, tuple(np.indices(lead)) + (targets,), 1.0)
        if m is not None:
            p *= m[..., None]
        logits._accum(p * (float(g) / count))

    return _make(np.asarray(loss), (logits,), bw)


# -- reductions / shaping -------------------------------------------------


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is None:
            x._accum(np.broadcast_to(g, x.data.shape).copy() if np.ndim(g) else np.full_like(x.data, g))
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            x._accum(np.broadcast_to(g, x.data.shape))

    return _make(data, (x,), bw)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.data.shape

    def bw(g):
        x._accum(g.reshape(old))

    return _make(x.data.reshape(shape), (x,), bw)


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.data.ndim)))
    inv = np.argsort(axes)

    def bw(g):
        x._accum(g.transpose(inv))

    return _make(x.data.transpose(axes), (x,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_coerce(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accum(g[tuple(sl)])

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def slice_(x: Tensor, key) -> Tensor:
    """Basic (non-fancy) indexing with gradient."""

    def bw(g):
        full = np.zeros_like(x.data)
        full[key] += g
        x._accum(full)

    return _make(x.data[key], (x,), bw)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Index the first axis with an integer array (embedding / expert pick)."""
    idx = np.asarray(idx)

    def bw(g):
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        flat_idx = idx.reshape(-1)
        flat_g = g.reshape((-1,) + x.data.shape[1:])
        if x.data.shape[0] <= 64:
            # small banks: per-row masked sums beat np.add.at by a wide margin
            for e in np.unique(flat_idx):
                x.grad[e] += flat_g[flat_idx == e].sum(axis=0)
        else:
            np.add.at(x.grad, flat_idx, flat_g)

    return _make(x.data[idx], (x,), bw)


def scatter_rows(x: Tensor, idx: np.ndarray, n: int) -> Tensor:
    """Place rows x[i] at positions idx[i] of a zero [n, ...] tensor.

    ``idx`` must not repeat (each output row receives at most one input row);
    the inverse of gather_rows on distinct indices.
    """
    idx = np.asarray(idx)
    if idx.ndim != 1 or idx.size != x.data.shape[0]:
        raise ShapeError(f"idx must be 1-D with one entry per row of x, got {idx.shape}")
    data = np.zeros((n,) + x.data.shape[1:])
    data[idx] = x.data

    def bw(g):
        x._accum(g[idx])

    return _make(data, (x,), bw)


def take_last(x: Tensor, idx: np.ndarray) -> Tensor:
    """Gather along the last axis; ``idx`` broadcasts against x[..., :]."""
    idx = np.asarray(idx)
    idx_b = np.broadcast_to(idx, x.data.shape[:-1] + idx.shape[-1:])
    data = np.take_along_axis(x.data, idx_b, axis=-1)

    def bw(g):
        full = np.zeros_like(x.data)
        lead = tuple(np.indices(idx_b.shape)[:-1])
        np.add.at(full, lead + (idx_b,), g)
        x._accum(full)

    return _make(data, (x,), bw)


def gather_mid(x: Tensor, idx: np.ndarray) -> Tensor:
    """Pick rows of the middle axis per leading index: x[N,E,D], idx[N,k] -> [N,k,D]."""
    idx = np.asarray(idx)
    n = x.data.shape[0]
    rows = np.arange(n)[:, None]
    data = x.data[rows, idx]

    def bw(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (rows, idx), g)
        x._accum(full)

    return _make(data, (x,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Layer normalization over the last dimension."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    n = x.data.shape[-1]

    def bw(g):
        if gain.requires_grad:
            gain._accum((g * xhat).reshape(-1, n).sum(axis=0))
        if bias.requires_grad:
            bias._accum(g.reshape(-1, n).sum(axis=0))
        if x.requires_grad:
            gx = g * gain.data
            t1 = gx.sum(axis=-1, keepdims=True)
            t2 = (gx * xhat).sum(axis=-1, keepdims=True)
            x._accum(inv * (gx - t1 / n - xhat * t2 / n))

    return _make(out, (x, gain, bias), bw)


# -- routing helpers ------------------------------------------------------


def argtopk(values, k: int) -> list[int]:
    """Indices of the k largest values, ties to the lowest index, ascending."""
    vals = list(values)
    if k < 1 or k > len(vals):
        raise ValueError(f"argtopk requires 1 <= k <= {len(vals)}, got k={k}")
    order = sorted(range(len(vals)), key=lambda i: (-vals[i], i))
    return sorted(order[:k])


def argtopk_rows(arr: np.ndarray, k: int) -> np.ndarray:
    """Vectorized argtopk over the last axis; same tie rule, ascending."""
    if k < 1 or k > arr.shape[-1]:
        raise ValueError(f"argtopk requires 1 <= k <= {arr.shape[-1]}, got k={k}")
    order = np.argsort(-arr, axis=-1, kind="stable")[..., :k]
    return np.sort(order, axis=-1)
