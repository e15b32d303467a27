"""Minimal reverse-mode autodiff on numpy arrays.

Everything downstream (conv blocks, attention, selective scans, the full
model) is built from the primitives in this file. Each primitive computes
its forward value eagerly with numpy and attaches a backward closure that
scatters the output gradient to its parents. `Tensor.backward()` walks the
recorded graph in reverse topological order.

Default compute dtype is float32. Gradient checking runs the same graphs
in float64 against central differences (`grad_check`).
"""

from __future__ import annotations

import contextlib
import math

import numpy as np


class ConfigError(ValueError):
    """Raised when shapes, channel counts, or settings violate a contract."""


# ---------------------------------------------------------------------------
# engine


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / numeric probes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A numpy array plus gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad) and _GRAD_ENABLED
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Backpropagate from a scalar loss through the recorded graph."""
        if self.data.size != 1:
            raise ValueError(
                f"backward() needs a scalar loss, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # arithmetic sugar; full op set lives in module-level functions
    def __add__(self, other):
        if isinstance(other, (int, float)):
            return shift(self, float(other))
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return shift(self, -float(other))
        return add(self, -other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"


def as_tensor(data, requires_grad: bool = False, dtype=np.float32) -> Tensor:
    """Wrap array-like data as a Tensor, casting to `dtype` (float32 default)."""
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def _node(data: np.ndarray, parents: tuple) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
    return out


def make_op(data: np.ndarray, parents: tuple, backward) -> Tensor:
    """Register a custom primitive: forward value, parent tensors, backward closure.

    `backward` is called with the output gradient and must scatter into the
    parents via `Tensor._accum`. Used by modules that define their own
    fused primitives (the selective scan does).
    """
    out = _node(data, parents)
    if out.requires_grad:
        def run():
            backward(out.grad)
        out._backward = run
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise


def add(x: Tensor, y: Tensor) -> Tensor:
    out = _node(x.data + y.data, (x, y))
    if out.requires_grad:
        def backward():
            if x.requires_grad:
                x._accum(_unbroadcast(out.grad, x.data.shape))
            if y.requires_grad:
                y._accum(_unbroadcast(out.grad, y.data.shape))
        out._backward = backward
    return out


def mul(x: Tensor, y: Tensor) -> Tensor:
    out = _node(x.data * y.data, (x, y))
    if out.requires_grad:
        def backward():
            if x.requires_grad:
                x._accum(_unbroadcast(out.grad * y.data, x.data.shape))
            if y.requires_grad:
                y._accum(_unbroadcast(out.grad * x.data, y.data.shape))
        out._backward = backward
    return out


def scale(x: Tensor, s: float) -> Tensor:
    out = _node(x.data * s, (x,))
    if out.requires_grad:
        def backward():
            x._accum(out.grad * s)
        out._backward = backward
    return out


def shift(x: Tensor, c: float) -> Tensor:
    out = _node(x.data + c, (x,))
    if out.requires_grad:
        def backward():
            x._accum(out.grad)
        out._backward = backward
    return out


def pow_const(x: Tensor, p: float) -> Tensor:
    out = _node(x.data ** p, (x,))
    if out.requires_grad:
        def backward():
            x._accum(out.grad * p * x.data ** (p - 1.0))
        out._backward = backward
    return out


def exp(x: Tensor) -> Tensor:
    e = np.exp(x.data)
    out = _node(e, (x,))
    if out.requires_grad:
        def backward():
            x._accum(out.grad * e)
        out._backward = backward
    return out


def absolute(x: Tensor) -> Tensor:
    out = _node(np.abs(x.data), (x,))
    if out.requires_grad:
        def backward():
            x._accum(out.grad * np.sign(x.data))
        out._backward = backward
    return out


def relu(x: Tensor) -> Tensor:
    out = _node(np.maximum(x.data, 0.0), (x,))
    if out.requires_grad:
        def backward():
            x._accum(out.grad * (x.data > 0))
        out._backward = backward
    return out


def _sigmoid_np(z: np.ndarray) -> np.ndarray:
    # two-branch form avoids exp overflow on either tail
    pos = z >= 0
    e = np.exp(np.where(pos, -z, z))
    return np.where(pos, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid_np(x.data)
    out = _node(s, (x,))
    if out.requires_grad:
        def backward():
            x._accum(out.grad * s * (1.0 - s))
        out._backward = backward
    return out


def softplus(x: Tensor) -> Tensor:
    out = _node(np.logaddexp(np.zeros((), dtype=x.data.dtype), x.data), (x,))
    if out.requires_grad:
        def backward():
            x._accum(out.grad * _sigmoid_np(x.data))
        out._backward = backward
    return out


def _phi1_np(z: np.ndarray) -> np.ndarray:
    """(e^z - 1) / z, series near zero so the removable singularity stays exact."""
    z = np.asarray(z)
    small = np.abs(z) < 1e-4
    zsafe = np.where(small, 1.0, z)
    direct = np.expm1(zsafe) / zsafe
    series = 1.0 + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0)))
    return np.where(small, series, direct)


def _dphi1_np(z: np.ndarray) -> np.ndarray:
    """Derivative of phi1: (e^z (z - 1) + 1) / z^2, with a series branch."""
    z = np.asarray(z)
    small = np.abs(z) < 1e-3
    zsafe = np.where(small, 1.0, z)
    direct = (np.exp(zsafe) * (zsafe - 1.0) + 1.0) / (zsafe * zsafe)
    series = 0.5 + z * (1.0 / 3.0 + z * (0.125 + z * (1.0 / 30.0)))
    return np.where(small, series, direct)


def phi1(x: Tensor) -> Tensor:
    out = _node(_phi1_np(x.data), (x,))
    if out.requires_grad:
        def backward():
            x._accum(out.grad * _dphi1_np(x.data))
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# reductions / rearrangement


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = _node(x.data.sum(axis=axis, keepdims=keepdims), (x,))
    if out.requires_grad:
        def backward():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            x._accum(np.broadcast_to(g, x.data.shape))
        out._backward = backward
    return out


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.data.size if axis is None else np.prod(
        [x.data.shape[a] for a in np.atleast_1d(axis)]
    )
    out = _node(x.data.mean(axis=axis, keepdims=keepdims), (x,))
    if out.requires_grad:
        def backward():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            x._accum(np.broadcast_to(g, x.data.shape) / count)
        out._backward = backward
    return out


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = _node(x.data.reshape(shape), (x,))
    if out.requires_grad:
        def backward():
            x._accum(out.grad.reshape(x.data.shape))
        out._backward = backward
    return out


def permute_axes(x: Tensor, order) -> Tensor:
    order = tuple(order)
    inv = tuple(np.argsort(order))
    out = _node(np.ascontiguousarray(x.data.transpose(order)), (x,))
    if out.requires_grad:
        def backward():
            x._accum(out.grad.transpose(inv))
        out._backward = backward
    return out


def concat(parts, axis: int = 1) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ConfigError("concat needs at least one tensor")
    ref = parts[0].data.shape
    for t in parts[1:]:
        s = t.data.shape
        if len(s) != len(ref) or any(
            a != b for i, (a, b) in enumerate(zip(s, ref)) if i != axis
        ):
            raise ConfigError(
                f"concat shape mismatch off axis {axis}: {ref} vs {s}"
            )
    out = _node(np.concatenate([t.data for t in parts], axis=axis), tuple(parts))
    if out.requires_grad:
        sizes = [t.data.shape[axis] for t in parts]
        def backward():
            offs = 0
            for t, n in zip(parts, sizes):
                if t.requires_grad:
                    idx = [slice(None)] * out.grad.ndim
                    idx[axis] = slice(offs, offs + n)
                    t._accum(out.grad[tuple(idx)])
                offs += n
        out._backward = backward
    return out


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = _node(np.ascontiguousarray(x.data[idx]), (x,))
    if out.requires_grad:
        def backward():
            g = np.zeros_like(x.data)
            g[idx] = out.grad
            x._accum(g)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# convolution and pooling


def conv2d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """2-D convolution with "same" zero padding.

    x (b, ci, h, w), weight (co, ci, k, k) with odd k in {1, 3, 5},
    bias (co,). Output (b, co, h, w).
    """
    xd, wd = x.data, weight.data
    if xd.ndim != 4 or wd.ndim != 4:
        raise ConfigError(
            f"conv2d expects 4-d input and weight, got {xd.shape} and {wd.shape}"
        )
    b, ci, h, w = xd.shape
    co, ci_w, k, k2 = wd.shape
    if k != k2 or k not in (1, 3, 5):
        raise ConfigError(f"conv2d kernel must be square with k in {{1,3,5}}, got {wd.shape}")
    if ci_w != ci:
        raise ConfigError(
            f"conv2d channel mismatch: input has {ci}, weight expects {ci_w}"
        )
    if k == 1:
        y = np.tensordot(wd[:, :, 0, 0], xd, axes=([1], [1]))  # (co, b, h, w)
        y = y.transpose(1, 0, 2, 3) + bias.data[None, :, None, None]
        out = _node(y, (x, weight, bias))
        if out.requires_grad:
            def backward():
                gy = out.grad
                if bias.requires_grad:
                    bias._accum(gy.sum(axis=(0, 2, 3)))
                if weight.requires_grad:
                    gw = np.tensordot(gy, xd, axes=([0, 2, 3], [0, 2, 3]))
                    weight._accum(gw[:, :, None, None])
                if x.requires_grad:
                    gx = np.tensordot(wd[:, :, 0, 0], gy, axes=([0], [1]))
                    x._accum(gx.transpose(1, 0, 2, 3))
            out._backward = backward
        return out

    p = (k - 1) // 2
    xp = np.pad(xd, ((0, 0), (0, 0), (p, p), (p, p)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, ci * k * k)
    y = cols @ wd.reshape(co, ci * k * k).T
    y = y.reshape(b, h, w, co).transpose(0, 3, 1, 2) + bias.data[None, :, None, None]
    out = _node(np.ascontiguousarray(y), (x, weight, bias))
    if out.requires_grad:
        def backward():
            gy = out.grad
            if bias.requires_grad:
                bias._accum(gy.sum(axis=(0, 2, 3)))
            if weight.requires_grad:
                gw = np.empty_like(wd)
                for dy in range(k):
                    for dx in range(k):
                        gw[:, :, dy, dx] = np.tensordot(
                            gy, xp[:, :, dy:dy + h, dx:dx + w],
                            axes=([0, 2, 3], [0, 2, 3]),
                        )
                weight._accum(gw)
            if x.requires_grad:
                gxp = np.zeros_like(xp)
                for dy in range(k):
                    for dx in range(k):
                        t = np.tensordot(gy, wd[:, :, dy, dx], axes=([1], [0]))
                        gxp[:, :, dy:dy + h, dx:dx + w] += t.transpose(0, 3, 1, 2)
                x._accum(gxp[:, :, p:p + h, p:p + w])
        out._backward = backward
    return out


def maxpool2x2(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2. Ties resolve to the first element scanned."""
    b, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise ConfigError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
    v = x.data.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    v = np.ascontiguousarray(v).reshape(b, c, h // 2, w // 2, 4)
    idx = v.argmax(axis=-1)
    y = np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
    out = _node(y, (x,))
    if out.requires_grad:
        def backward():
            buf = np.zeros_like(v)
            np.put_along_axis(buf, idx[..., None], out.grad[..., None], axis=-1)
            g = buf.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
            x._accum(g.reshape(b, c, h, w))
        out._backward = backward
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """(b, c, h, w) -> (b, c, 1, 1) spatial mean."""
    b, c, h, w = x.data.shape
    out = _node(x.data.mean(axis=(2, 3), keepdims=True), (x,))
    if out.requires_grad:
        def backward():
            x._accum(np.broadcast_to(out.grad, x.data.shape) / (h * w))
        out._backward = backward
    return out


def global_max_pool(x: Tensor) -> Tensor:
    """(b, c, h, w) -> (b, c, 1, 1) spatial max; ties go to the first position."""
    b, c, h, w = x.data.shape
    flat = x.data.reshape(b, c, h * w)
    idx = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, idx[..., None], axis=-1).reshape(b, c, 1, 1)
    out = _node(y, (x,))
    if out.requires_grad:
        def backward():
            g = np.zeros_like(flat)
            np.put_along_axis(g, idx[..., None], out.grad.reshape(b, c, 1), axis=-1)
            x._accum(g.reshape(b, c, h, w))
        out._backward = backward
    return out


def mul_channel_scale(x: Tensor, s: Tensor) -> Tensor:
    """Scale each (b, c) map by a scalar: s has shape (b, c, 1, 1)."""
    b, c = x.data.shape[:2]
    if s.data.shape != (b, c, 1, 1):
        raise ConfigError(
            f"channel scale must be {(b, c, 1, 1)}, got {s.data.shape}"
        )
    out = _node(x.data * s.data, (x, s))
    if out.requires_grad:
        def backward():
            if x.requires_grad:
                x._accum(out.grad * s.data)
            if s.requires_grad:
                s._accum((out.grad * x.data).sum(axis=(2, 3), keepdims=True))
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# resampling


_INTERP_CACHE: dict = {}


def _interp_matrix(n_in: int, n_out: int, dtype) -> np.ndarray:
    """Row-stochastic 1-d linear interpolation matrix (half-pixel centers)."""
    key = (n_in, n_out, np.dtype(dtype).str)
    hit = _INTERP_CACHE.get(key)
    if hit is not None:
        return hit
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1.0)
    i0 = np.floor(pos).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    f = pos - i0
    m = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1.0 - f)
    np.add.at(m, (rows, i1), f)
    m = m.astype(dtype)
    _INTERP_CACHE[key] = m
    return m


def bilinear_resize(x: Tensor, factor: float) -> Tensor:
    """Bilinear up/downsampling by a dyadic factor (0.5, 2, or 4)."""
    if factor not in (0.5, 2, 4, 2.0, 4.0):
        raise ConfigError(f"bilinear_resize factor must be 0.5, 2 or 4, got {factor}")
    b, c, h, w = x.data.shape
    ho, wo = int(round(h * factor)), int(round(w * factor))
    if ho < 1 or wo < 1:
        raise ConfigError(f"bilinear_resize output collapses to zero: {h}x{w} by {factor}")
    rh = _interp_matrix(h, ho, x.data.dtype)
    rw = _interp_matrix(w, wo, x.data.dtype)
    y = np.einsum("oh,pw,bchw->bcop", rh, rw, x.data, optimize=True)
    out = _node(y, (x,))
    if out.requires_grad:
        def backward():
            g = np.einsum("oh,pw,bcop->bchw", rh, rw, out.grad, optimize=True)
            x._accum(g)
        out._backward = backward
    return out


def _shuffle_np(a: np.ndarray, r: int) -> np.ndarray:
    b, crr, h, w = a.shape
    c = crr // (r * r)
    t = a.reshape(b, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(t).reshape(b, c, h * r, w * r)


def _unshuffle_np(a: np.ndarray, r: int) -> np.ndarray:
    b, c, hr, wr = a.shape
    h, w = hr // r, wr // r
    t = a.reshape(b, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(t).reshape(b, c * r * r, h, w)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """(b, c*r^2, h, w) -> (b, c, h*r, w*r); channel blocks become subpixels."""
    b, crr, h, w = x.data.shape
    if crr % (r * r):
        raise ConfigError(
            f"pixel_shuffle needs channels divisible by r^2={r * r}, got {crr}"
        )
    out = _node(_shuffle_np(x.data, r), (x,))
    if out.requires_grad:
        def backward():
            x._accum(_unshuffle_np(out.grad, r))
        out._backward = backward
    return out


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Inverse of pixel_shuffle: (b, c, h*r, w*r) -> (b, c*r^2, h, w)."""
    b, c, hr, wr = x.data.shape
    if hr % r or wr % r:
        raise ConfigError(
            f"pixel_unshuffle needs spatial dims divisible by r={r}, got {hr}x{wr}"
        )
    out = _node(_unshuffle_np(x.data, r), (x,))
    if out.requires_grad:
        def backward():
            x._accum(_shuffle_np(out.grad, r))
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# token-sequence contractions (used by the selective scan)


def token_linear(x: Tensor, w: Tensor) -> Tensor:
    """Per-token linear map over channels: (b, c, l) x (o, c) -> (b, o, l)."""
    if x.data.shape[1] != w.data.shape[1]:
        raise ConfigError(
            f"token_linear channel mismatch: {x.data.shape} vs {w.data.shape}"
        )
    y = np.tensordot(w.data, x.data, axes=([1], [1]))  # (o, b, l)
    out = _node(np.ascontiguousarray(y.transpose(1, 0, 2)), (x, w))
    if out.requires_grad:
        def backward():
            gy = out.grad
            if x.requires_grad:
                gx = np.tensordot(w.data, gy, axes=([0], [1]))  # (c, b, l)
                x._accum(np.ascontiguousarray(gx.transpose(1, 0, 2)))
            if w.requires_grad:
                w._accum(np.tensordot(gy, x.data, axes=([0, 2], [0, 2])))
        out._backward = backward
    return out


def state_project(h: Tensor, c: Tensor) -> Tensor:
    """Contract the state axis: (n, ch, l, m) x (n, l, m) -> (n, ch, l)."""
    if h.data.shape[0] != c.data.shape[0] or h.data.shape[2:] != c.data.shape[1:]:
        raise ConfigError(
            f"state_project shape mismatch: {h.data.shape} vs {c.data.shape}"
        )
    y = np.einsum("nclm,nlm->ncl", h.data, c.data, optimize=True)
    out = _node(y, (h, c))
    if out.requires_grad:
        def backward():
            gy = out.grad
            if h.requires_grad:
                h._accum(gy[:, :, :, None] * c.data[:, None, :, :])
            if c.requires_grad:
                c._accum(np.einsum("ncl,nclm->nlm", gy, h.data, optimize=True))
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# loss


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error, reduced to a scalar."""
    if pred.data.shape != target.data.shape:
        raise ConfigError(
            f"l1_loss shape mismatch: {pred.data.shape} vs {target.data.shape}"
        )
    d = pred.data - target.data
    out = _node(np.asarray(np.mean(np.abs(d)), dtype=pred.data.dtype), (pred, target))
    if out.requires_grad:
        def backward():
            g = out.grad * np.sign(d) / d.size
            if pred.requires_grad:
                pred._accum(g)
            if target.requires_grad:
                target._accum(-g)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# parameter containers


class Module:
    """Base class: anything holding parameters and submodules.

    Attribute order is construction order, so parameter iteration (and thus
    initialization, optimizer state, and checkpoints) is deterministic.
    """

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = ""):
        for name, val in vars(self).items():
            yield from _walk_params(f"{prefix}{name}", val)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def set_dtype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def param_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


def _walk_params(name: str, val):
    if isinstance(val, Tensor):
        if val.requires_grad:
            yield name, val
    elif isinstance(val, Module):
        yield from val.named_parameters(prefix=name + ".")
    elif isinstance(val, (list, tuple)):
        for i, item in enumerate(val):
            yield from _walk_params(f"{name}.{i}", item)
    elif isinstance(val, dict):
        for k, item in val.items():
            yield from _walk_params(f"{name}.{k}", item)


def kaiming_uniform(
    rng: np.random.Generator, shape, fan_in: int, gain: float = math.sqrt(2.0)
) -> np.ndarray:
    """Uniform init with std = gain / sqrt(fan_in), in float32.

    gain sqrt(2) preserves activation variance through a relu; gain 1 is
    the right choice for layers whose output feeds no nonlinearity
    (projections, fusion convs), otherwise each such layer inflates the
    forward scale by sqrt(2) and deep stacks start far out of range.
    """
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Conv2d(Module):
    """Learnable same-padding convolution; k in {1, 3, 5}.

    `activation` names what the output feeds: "relu" uses relu-preserving
    init gain, "linear" unit gain.
    """

    def __init__(
        self,
        c_in: int,
        c_out: int,
        k: int,
        rng: np.random.Generator,
        activation: str = "relu",
    ):
        if k not in (1, 3, 5):
            raise ConfigError(f"kernel size must be 1, 3 or 5, got {k}")
        if activation not in ("relu", "linear"):
            raise ConfigError(f"activation must be 'relu' or 'linear', got {activation!r}")
        gain = math.sqrt(2.0) if activation == "relu" else 1.0
        self.weight = Tensor(
            kaiming_uniform(rng, (c_out, c_in, k, k), c_in * k * k, gain=gain),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(c_out, dtype=np.float32), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(fn, wrt, eps=1e-3, probes=None, seed: int = 0) -> float:
    """Compare analytic gradients against central differences in float64.

    `fn` is a zero-argument closure returning a Tensor built from the leaf
    tensors in `wrt` (inputs and/or parameters); their data is cast to
    float64 in place. The output is reduced through a fixed random
    projection so gradient errors cannot cancel. Each probed element e of
    each leaf is perturbed by +-eps and the relative error
    |analytic - numeric| / max(|numeric|, 1e-6) is taken; the max over all
    probes is returned. `probes` caps the number of elements checked per
    leaf (None = all), drawn without replacement from a seeded generator.

    `eps` may be a tuple of stencil widths. The per-element error is then
    the min across widths: finite-difference artifacts are width-dependent
    (corner straddling shrinks with eps, roundoff grows as 1/eps), so a
    correct analytic gradient matches at some width in the sweep while a
    wrong one fails at every width. Deep compositions with many activation
    corners need this; single ops are fine with one width.
    """
    eps_values = (eps,) if np.isscalar(eps) else tuple(eps)
    if any(e <= 0 for e in eps_values):
        raise ConfigError(f"grad_check eps must be positive, got {eps_values}")
    rng = np.random.default_rng(seed)
    for t in wrt:
        t.data = t.data.astype(np.float64)
        t.grad = None
    out = fn()
    proj = rng.standard_normal(out.data.shape)
    loss = reduce_sum(mul(out, Tensor(proj)))
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in wrt]

    def loss_at():
        with no_grad():
            return float(np.sum(fn().data * proj))

    worst = 0.0
    for t, ana in zip(wrt, analytic):
        flat = t.data.reshape(-1)
        n = flat.size
        if probes is None or n <= probes:
            idxs = range(n)
        else:
            idxs = rng.choice(n, size=probes, replace=False)
        for i in idxs:
            keep = flat[i]
            best = np.inf
            for e in eps_values:
                flat[i] = keep + e
                hi = loss_at()
                flat[i] = keep - e
                lo = loss_at()
                flat[i] = keep
                num = (hi - lo) / (2.0 * e)
                rel = abs(ana.reshape(-1)[i] - num) / max(abs(num), 1e-6)
                best = min(best, rel)
            worst = max(worst, best)
    return worst
