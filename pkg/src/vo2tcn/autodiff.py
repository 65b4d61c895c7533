"""Dense float64 tensors with reverse-mode gradients.

Only the handful of operators the TCN needs are provided. Every op checks its
result for NaN/Inf and raises :class:`~vo2tcn.errors.NumericError` instead of
letting non-finite values propagate.

Time-indexed ops (:func:`causal_conv1d`, :func:`take_time`) work on arrays of
shape ``(T, C)`` or batched ``(B, T, C)``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import NumericError, ShapeError


def _check_finite(arr: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {where}")
    return arr


class Tensor:
    """A float64 array, its gradient buffer and the op that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        arr = np.array(data, dtype=np.float64) if not isinstance(data, np.ndarray) \
            else data.astype(np.float64, copy=False)
        if arr.ndim > 3:
            raise ShapeError(f"tensors are rank <= 3, got shape {arr.shape}")
        self.data = _check_finite(arr, name or "tensor")
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self.name = name
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    def backward(self, params=None):
        backward(self, params)

    # arithmetic used for losses and small test graphs
    def __add__(self, other):
        return add(self, _lift(other, self.shape))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, -_lift(other, self.shape))

    def __rsub__(self, other):
        return add(_lift(other, self.shape), -self)

    def __neg__(self):
        return _unary(self, -self.data, lambda g: -g)

    def __mul__(self, other):
        other = _lift(other, self.shape)
        if other.shape != self.shape:
            raise ShapeError(f"mul shape mismatch {self.shape} vs {other.shape}")
        a, b = self, other

        def grads(g):
            return g * b.data, g * a.data

        return _binary(a, b, a.data * b.data, grads)

    __rmul__ = __mul__

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        x = self.data
        return _unary(self, x ** exponent, lambda g: g * exponent * x ** (exponent - 1))

    def sum(self):
        shape = self.shape
        return _unary(self, np.asarray(self.data.sum()), lambda g: np.broadcast_to(g, shape).copy())

    def mean(self):
        shape, n = self.shape, self.size
        return _unary(self, np.asarray(self.data.mean()),
                      lambda g: np.broadcast_to(g / n, shape).copy())


def _lift(value, shape) -> Tensor:
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != shape:
        arr = np.broadcast_to(arr, shape).copy()
    return Tensor(arr)


def _unary(x: Tensor, out: np.ndarray, grad_fn) -> Tensor:
    def _backward(g):
        return (grad_fn(g),)

    return Tensor(out, _parents=(x,), _backward=_backward)


def _binary(a: Tensor, b: Tensor, out: np.ndarray, grad_fn) -> Tensor:
    return Tensor(out, _parents=(a, b), _backward=grad_fn)


def parameter(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def backward(loss: Tensor, params=None) -> None:
    """Fill ``.grad`` of every leaf reachable from ``loss`` with d(loss)/d(leaf).

    Leaf gradients are overwritten, not accumulated. Tensors in ``params`` that
    the loss does not depend on get an exact zero gradient.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss._parents:
        raise RuntimeError("no recorded forward graph: backward called on a leaf tensor")

    for p in params or ():
        p.zero_grad()

    order, seen = [], set()
    stack = [(loss, False)]
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

    for node in order:
        if node._parents:
            node.grad = None
        elif node.requires_grad:
            node.zero_grad()
    loss.grad = np.ones_like(loss.data)

    for node in reversed(order):
        if not node._parents or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._backward(node.grad)):
            if not parent.requires_grad:
                continue
            _check_finite(g, "gradient")
            parent.grad = g if parent.grad is None else parent.grad + g
        if node is not loss:
            node.grad = None  # interior buffers are not needed after propagation


# ---------------------------------------------------------------------------
# network operators


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch {a.shape} vs {b.shape}")
    return _binary(a, b, a.data + b.data, lambda g: (g, g))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _unary(x, np.where(mask, x.data, 0.0), lambda g: g * mask)


def dropout(x: Tensor, rate: float, rng=None, training: bool = False) -> Tensor:
    """Inverted dropout; identity when not training or when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    scale = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _unary(x, x.data * scale, lambda g: g * scale)


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ weight + bias`` over the last axis, no activation."""
    if weight.data.ndim != 2 or x.shape[-1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeError(f"dense shapes do not conform: x{x.shape} W{weight.shape} b{bias.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd + bias.data

    def grads(g):
        flat_x = xd.reshape(-1, xd.shape[-1])
        flat_g = g.reshape(-1, g.shape[-1])
        return g @ wd.T, flat_x.T @ flat_g, flat_g.sum(axis=0)

    return Tensor(out, _parents=(x, weight, bias), _backward=grads)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, epsilon: float = 1e-5) -> Tensor:
    """Normalize each time step across channels, then scale and shift."""
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"layer_norm expects gamma/beta of shape ({c},)")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    centered = xd - mu
    inv_std = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + epsilon)
    xhat = centered * inv_std
    out = xhat * gamma.data + beta.data

    def grads(g):
        flat_g = g.reshape(-1, c)
        g_gamma = (flat_g * xhat.reshape(-1, c)).sum(axis=0)
        g_beta = flat_g.sum(axis=0)
        gx_hat = g * gamma.data
        gx = inv_std * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                        - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return gx, g_gamma, g_beta

    return Tensor(out, _parents=(x, gamma, beta), _backward=grads)


def conv_index(in_pos, out_pos, kernel_size: int, dilation: int) -> np.ndarray:
    """Gather table for a causal convolution evaluated at selected time steps.

    ``in_pos``/``out_pos`` are sorted absolute time indices of the input rows
    held and output rows wanted. Entry ``[i, j]`` is the row of the input that
    tap ``j`` reads for output ``out_pos[i]``, or ``len(in_pos)`` for a
    left-padding zero.
    """
    in_pos = np.asarray(in_pos, dtype=np.int64)
    out_pos = np.asarray(out_pos, dtype=np.int64)
    shifts = (kernel_size - 1 - np.arange(kernel_size)) * dilation
    src = out_pos[:, None] - shifts[None, :]
    idx = np.searchsorted(in_pos, src)
    idx = np.minimum(idx, len(in_pos) - 1) if len(in_pos) else idx
    pad = src < 0
    if len(in_pos) and not np.all(pad | (in_pos[idx] == src)):
        raise ShapeError("input positions do not cover the convolution's receptive field")
    return np.where(pad, len(in_pos), idx)


@lru_cache(maxsize=256)
def _dense_index(length: int, kernel_size: int, dilation: int) -> np.ndarray:
    pos = np.arange(length)
    idx = conv_index(pos, pos, kernel_size, dilation)
    idx.setflags(write=False)
    return idx


def _to3d(x: Tensor):
    if x.data.ndim == 2:
        return x.data[None], True
    if x.data.ndim == 3:
        return x.data, False
    raise ShapeError(f"time-indexed op expects (T, C) or (B, T, C), got {x.shape}")


def causal_conv1d(x: Tensor, kernel: Tensor, bias: Tensor, dilation: int, index=None) -> Tensor:
    """Dilated causal convolution with implicit left zero-padding.

    ``output[t] = bias + sum_j kernel[j] . x[t - (k-1-j)*dilation]``, reading
    zeros before the first row, so the output has as many rows as the input.
    ``kernel`` has shape ``(k, C_in, C_out)``. Passing a precomputed ``index``
    (see :func:`conv_index`) evaluates only the selected output rows.
    """
    if dilation < 1 or int(dilation) != dilation:
        raise ValueError("dilation must be a positive integer")
    xd, squeezed = _to3d(x)
    if kernel.data.ndim != 3:
        raise ShapeError(f"kernel must be (k, C_in, C_out), got {kernel.shape}")
    k, c_in, c_out = kernel.shape
    b, n_in, c = xd.shape
    if c != c_in or bias.shape != (c_out,):
        raise ShapeError(f"conv shapes do not conform: x{x.shape} kernel{kernel.shape} bias{bias.shape}")
    if n_in < 1:
        raise ShapeError("causal_conv1d needs at least one time step")
    if index is None:
        index = _dense_index(n_in, k, int(dilation))
    n_out = index.shape[0]

    padded = np.concatenate([xd, np.zeros((b, 1, c))], axis=1)
    cols = padded[:, index.reshape(-1), :].reshape(b * n_out, k * c)
    w = kernel.data.reshape(k * c, c_out)
    out = (cols @ w + bias.data).reshape(b, n_out, c_out)

    def grads(g):
        g3 = g[None] if squeezed else g
        g2 = g3.reshape(b * n_out, c_out)
        g_kernel = (cols.T @ g2).reshape(k, c_in, c_out)
        g_cols = (g2 @ w.T).reshape(b, n_out, k, c)
        g_padded = np.zeros((b, n_in + 1, c))
        for j in range(k):
            # rows are distinct within one tap except the discarded pad row
            g_padded[:, index[:, j], :] += g_cols[:, :, j, :]
        gx = g_padded[:, :n_in, :]
        return (gx[0] if squeezed else gx), g_kernel, g2.sum(axis=0)

    return Tensor(out[0] if squeezed else out, _parents=(x, kernel, bias), _backward=grads)


def take_time(x: Tensor, index) -> Tensor:
    """Select time rows. An integer index drops the time axis (the splice)."""
    xd, squeezed = _to3d(x)
    n = xd.shape[1]
    scalar = np.ndim(index) == 0
    idx = np.atleast_1d(np.asarray(index, dtype=np.int64))
    if np.any(idx < -n) or np.any(idx >= n):
        raise ShapeError(f"time index out of range for {n} steps")
    idx = idx % n
    out = xd[:, idx[0], :] if scalar else xd[:, idx, :]

    def grads(g):
        gx = np.zeros_like(xd)
        if scalar:
            gx[:, idx[0], :] = g[None] if squeezed else g
        else:
            np.add.at(gx, (slice(None), idx), g[None] if squeezed else g)
        return (gx[0] if squeezed else gx,)

    return Tensor(out[0] if squeezed else out, _parents=(x,), _backward=grads)


def mse_loss(pred: Tensor, target) -> Tensor:
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.shape:
        raise ShapeError(f"target shape {target.shape} does not match prediction {pred.shape}")
    diff = pred - Tensor(target)
    return (diff * diff).mean()
