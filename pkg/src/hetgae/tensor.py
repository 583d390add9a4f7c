"""Minimal reverse-mode autodiff on dense float64 numpy arrays.

A module-level tape records every operation whose inputs require
gradients; ``backward`` replays it in reverse and accumulates into leaf
``.grad`` buffers. Dense only: graph sparsity is handled structurally by
the callers via gather/scatter over edge index arrays.
"""

from __future__ import annotations

import struct
from contextlib import contextmanager

import numpy as np

__all__ = [
    "Tensor", "backward", "no_grad", "is_grad_enabled", "tape_size",
    "matmul", "transpose", "add", "sub", "mul", "div", "scale", "neg",
    "concat", "slice_rows", "slice_cols", "gather_rows", "take_per_row",
    "scatter_add_rows", "relu", "elu", "leaky_relu", "sigmoid", "exp",
    "log", "power", "clamp", "softmax_rows", "tsum", "tmean", "reshape",
    "dropout", "glorot_uniform", "zeros", "grad_check",
    "save_tensors", "load_tensors", "CHECKPOINT_MAGIC",
]

CHECKPOINT_MAGIC = b"THEGAU1\n"

_tape: list["Tensor"] = []
_grad_enabled = True


class Tensor:
    """Dense float64 array with an optional gradient accumulator."""

    __slots__ = ("values", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, values, requires_grad=False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def item(self):
        return float(self.values.reshape(()))

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.values)
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tape_size():
    return len(_tape)


def is_grad_enabled():
    return _grad_enabled


@contextmanager
def no_grad():
    """Disable tape recording, e.g. for validation forward passes."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _record(out_values, parents, backward_fn):
    out = Tensor(out_values)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        _tape.append(out)
    return out


def backward(loss):
    """Accumulate d(loss)/d(leaf) into every reachable leaf, then clear the tape."""
    global _tape
    if loss.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.values)
    for node in reversed(_tape):
        if node.grad is None or node._backward is None:
            continue
        grads = node._backward(node.grad)
        for parent, g in zip(node._parents, grads):
            if parent.requires_grad and g is not None:
                parent.accumulate(g)
        if node is not loss:
            node.grad = None
        node._backward = None
        node._parents = ()
    _tape = []


def _unbroadcast(g, shape):
    """Sum `g` down to `shape` (reverses numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# forward ops


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = a.values @ b.values

    def back(g):
        return g @ b.values.T, a.values.T @ g

    return _record(out, (a, b), back)


def transpose(a):
    a = _as_tensor(a)
    return _record(a.values.T, (a,), lambda g: (g.T,))


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.values + b.values

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), back)


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.values - b.values

    def back(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _record(out, (a, b), back)


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.values * b.values

    def back(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return _record(out, (a, b), back)


def div(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.values / b.values

    def back(g):
        ga = _unbroadcast(g / b.values, a.shape)
        gb = _unbroadcast(-g * a.values / (b.values ** 2), b.shape)
        return ga, gb

    return _record(out, (a, b), back)


def scale(a, c):
    a = _as_tensor(a)
    c = float(c)
    return _record(a.values * c, (a,), lambda g: (g * c,))


def neg(a):
    return scale(a, -1.0)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.values for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors), back)


def slice_rows(a, start, stop):
    a = _as_tensor(a)
    out = a.values[start:stop]

    def back(g):
        full = np.zeros_like(a.values)
        full[start:stop] = g
        return (full,)

    return _record(out, (a,), back)


def slice_cols(a, start, stop):
    a = _as_tensor(a)
    out = a.values[:, start:stop]

    def back(g):
        full = np.zeros_like(a.values)
        full[:, start:stop] = g
        return (full,)

    return _record(out, (a,), back)


def gather_rows(a, idx):
    a = _as_tensor(a)
    idx = np.asarray(idx, dtype=np.intp)
    out = a.values[idx]

    def back(g):
        full = np.zeros_like(a.values)
        np.add.at(full, idx, g)
        return (full,)

    return _record(out, (a,), back)


def take_per_row(a, cols):
    """out[i] = a[i, cols[i]] — used for cross-entropy label picks."""
    a = _as_tensor(a)
    cols = np.asarray(cols, dtype=np.intp)
    rows = np.arange(a.shape[0])
    out = a.values[rows, cols]

    def back(g):
        full = np.zeros_like(a.values)
        np.add.at(full, (rows, cols), g)
        return (full,)

    return _record(out, (a,), back)


def scatter_add_rows(src, idx, n_rows):
    """out[idx[e]] += src[e]; the segment-sum used by message aggregation."""
    src = _as_tensor(src)
    idx = np.asarray(idx, dtype=np.intp)
    out = np.zeros((n_rows,) + src.shape[1:], dtype=np.float64)
    np.add.at(out, idx, src.values)

    def back(g):
        return (g[idx],)

    return _record(out, (src,), back)


def relu(a):
    a = _as_tensor(a)
    out = np.maximum(a.values, 0.0)
    return _record(out, (a,), lambda g: (g * (a.values > 0.0),))


def elu(a, alpha=1.0):
    a = _as_tensor(a)
    neg_part = alpha * (np.exp(np.minimum(a.values, 0.0)) - 1.0)
    out = np.where(a.values > 0.0, a.values, neg_part)

    def back(g):
        return (g * np.where(a.values > 0.0, 1.0, neg_part + alpha),)

    return _record(out, (a,), back)


def leaky_relu(a, slope=0.2):
    a = _as_tensor(a)
    out = np.where(a.values > 0.0, a.values, slope * a.values)
    return _record(out, (a,), lambda g: (g * np.where(a.values > 0.0, 1.0, slope),))


def sigmoid(a):
    a = _as_tensor(a)
    out = np.empty_like(a.values)
    pos = a.values >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.values[pos]))
    ez = np.exp(a.values[~pos])
    out[~pos] = ez / (1.0 + ez)
    return _record(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a):
    a = _as_tensor(a)
    out = np.exp(a.values)
    return _record(out, (a,), lambda g: (g * out,))


def log(a):
    a = _as_tensor(a)
    if np.any(a.values <= 0.0):
        raise ValueError("log: domain violation (non-positive input)")
    return _record(np.log(a.values), (a,), lambda g: (g / a.values,))


def power(a, p):
    a = _as_tensor(a)
    p = float(p)
    if p != int(p) and np.any(a.values < 0.0):
        raise ValueError("power: negative base with fractional exponent")
    out = a.values ** p

    def back(g):
        return (g * p * a.values ** (p - 1.0),)

    return _record(out, (a,), back)


def clamp(a, lo, hi):
    a = _as_tensor(a)
    out = np.clip(a.values, lo, hi)
    inside = (a.values >= lo) & (a.values <= hi)
    return _record(out, (a,), lambda g: (g * inside,))


def softmax_rows(a):
    a = _as_tensor(a)
    shifted = a.values - a.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _record(out, (a,), back)


def tsum(a, axis=None, keepdims=False):
    a = _as_tensor(a)
    out = a.values.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, a.shape).copy(),)

    return _record(out, (a,), back)


def tmean(a):
    a = _as_tensor(a)
    n = a.size
    return _record(a.values.mean(), (a,), lambda g: (np.broadcast_to(g / n, a.shape).copy(),))


def reshape(a, shape):
    a = _as_tensor(a)
    return _record(a.values.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def dropout(a, rate, rng):
    """Inverted dropout; caller passes the run RNG for determinism."""
    a = _as_tensor(a)
    if rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _record(a.values * keep, (a,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# initialization and verification


def glorot_uniform(rng, shape, fan_in, fan_out):
    """Fan-scaled uniform init in ±sqrt(6/(fan_in+fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


def grad_check(f, point, eps=1e-5):
    """Max relative error of the analytic gradient of scalar f at `point`
    against central finite differences."""
    point.zero_grad()
    loss = f(point)
    backward(loss)
    analytic = point.grad.copy() if point.grad is not None else np.zeros_like(point.values)
    numeric = np.zeros_like(point.values)
    flat = point.values.reshape(-1)
    nflat = numeric.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f(point).item()
            flat[i] = orig - eps
            down = f(point).item()
            flat[i] = orig
            nflat[i] = (up - down) / (2.0 * eps)
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))


# ---------------------------------------------------------------------------
# checkpoint I/O


def save_tensors(path, named):
    """Write named tensors as a flat little-endian float64 container."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(named)))
        for name, tensor in named.items():
            values = tensor.values if isinstance(tensor, Tensor) else np.asarray(tensor)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", values.ndim))
            for dim in values.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(values.astype("<f8").tobytes())


def load_tensors(path):
    """Read a checkpoint written by save_tensors; returns name -> ndarray."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a parameter checkpoint (bad magic)")
        (count,) = struct.unpack("<I", fh.read(4))
        out = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim))
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape)
            out[name] = np.array(data, dtype=np.float64)
    return out
