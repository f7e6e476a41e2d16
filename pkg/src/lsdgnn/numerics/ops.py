"""Differentiable operators over :class:`Tensor`.

Each op computes its forward value with numpy and registers a closure that
maps the upstream gradient to one gradient per input.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit

from lsdgnn.errors import DimensionError, DomainError, LabelIndexError
from lsdgnn.numerics.tensor import Tensor, as_tensor


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, opname: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{opname}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return Tensor.from_op(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return Tensor.from_op(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data
    return Tensor.from_op(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor.from_op(x.data * c, (x,), lambda g: (g * c,))


def add_n(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise DimensionError("add_n of an empty sequence")
    shape = tensors[0].shape
    for t in tensors:
        if t.shape != shape:
            raise DimensionError(f"add_n: shape {t.shape} != {shape}")
    total = tensors[0].data.copy()
    for t in tensors[1:]:
        total += t.data
    return Tensor.from_op(total, tuple(tensors), lambda g: (g,) * len(tensors))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for 1-D and 2-D operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2):
        raise DimensionError(f"matmul supports 1-D/2-D operands, got {a.shape} and {b.shape}")
    inner_a = a.shape[-1]
    inner_b = b.shape[0]
    if inner_a != inner_b:
        raise DimensionError(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def grad(g):
        if ad.ndim == 1 and bd.ndim == 1:
            return g * bd, g * ad
        if ad.ndim == 1:
            return bd @ g, np.outer(ad, g)
        if bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g @ bd.T, ad.T @ g

    return Tensor.from_op(ad @ bd, (a, b), grad)


def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ W (+ b)`` with ``x`` of shape (n, d_in) or (d_in,)."""
    x, W = as_tensor(x), as_tensor(W)
    if W.ndim != 2 or x.ndim not in (1, 2) or x.shape[-1] != W.shape[0]:
        raise DimensionError(f"linear: input shape {x.shape} incompatible with weight shape {W.shape}")
    if b is not None and (b.ndim != 1 or b.shape[0] != W.shape[1]):
        raise DimensionError(f"linear: bias shape {b.shape} incompatible with weight shape {W.shape}")
    xd, Wd = x.data, W.data
    out = xd @ Wd
    if b is None:
        def grad(g):
            if xd.ndim == 1:
                return Wd @ g, np.outer(xd, g)
            return g @ Wd.T, xd.T @ g

        return Tensor.from_op(out, (x, W), grad)

    out = out + b.data

    def grad_b(g):
        if xd.ndim == 1:
            return Wd @ g, np.outer(xd, g), g
        return g @ Wd.T, xd.T @ g, g.sum(axis=0)

    return Tensor.from_op(out, (x, W, b), grad_b)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got {x.shape}")
    return Tensor.from_op(x.data.T.copy(), (x,), lambda g: (g.T,))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {src} into {shape}") from None
    return Tensor.from_op(out, (x,), lambda g: (g.reshape(src),))


def take(x: Tensor, index) -> Tensor:
    """``x[index]`` for basic or integer-array indexing."""
    src = x.shape
    out = np.array(x.data[index], dtype=np.float64)

    basic = isinstance(index, (int, np.integer, slice)) or (
        isinstance(index, tuple) and all(isinstance(i, (int, np.integer, slice)) for i in index)
    )

    def grad(g):
        full = np.zeros(src)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return Tensor.from_op(out, (x,), grad)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise DimensionError("concat of an empty sequence")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return Tensor.from_op(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DimensionError("stack of an empty sequence")
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"stack: mismatched shapes {shapes}") from None
    n = len(tensors)
    return Tensor.from_op(out, tuple(tensors), lambda g: tuple(np.moveaxis(g, axis, 0)[i] for i in range(n)))


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return Tensor.from_op(np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(x: Tensor) -> Tensor:
    shape, n = x.shape, x.size
    if n == 0:
        raise DomainError("mean of an empty tensor")
    return Tensor.from_op(np.array(x.data.mean()), (x,), lambda g: (np.full(shape, float(g) / n),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.from_op(np.maximum(x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.data)
    return Tensor.from_op(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return Tensor.from_op(t, (x,), lambda g: (g * (1.0 - t * t),))


def reciprocal(x: Tensor) -> Tensor:
    if np.any(x.data == 0):
        raise DomainError("reciprocal of zero")
    r = 1.0 / x.data
    return Tensor.from_op(r, (x,), lambda g: (-g * r * r,))


def clip_max(x: Tensor, cap: float) -> Tensor:
    """``min(x, cap)``; the gradient is zero where the cap binds."""
    keep = x.data < cap
    return Tensor.from_op(np.minimum(x.data, cap), (x,), lambda g: (g * keep,))


def _softmax_np(v: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``."""
    x = as_tensor(x)
    if x.ndim == 0:
        raise DomainError("softmax of a scalar")
    try:
        n = x.shape[axis]
    except IndexError:
        raise DomainError(f"softmax axis {axis} invalid for shape {x.shape}") from None
    if n == 0:
        raise DomainError(f"softmax over an empty axis (shape {x.shape})")
    p = _softmax_np(x.data, axis)

    def grad(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(p, (x,), grad)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    p = np.exp(out)
    return Tensor.from_op(out, (x,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def cross_entropy_loss(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Summed negative log-likelihood of ``labels`` under row-wise softmax."""
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy_loss expects (n, K) logits, got {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != n:
        raise DimensionError(f"cross_entropy_loss: {labels.shape[0]} labels for {n} rows")
    for row, lab in enumerate(labels):
        if not 0 <= lab < k:
            raise LabelIndexError(f"label {lab} out of range [0, {k}) at row {row}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    nll = log_z - shifted[rows, labels]
    p = np.exp(shifted - log_z[:, None])

    def grad(g):
        d = p.copy()
        d[rows, labels] -= 1.0
        return (d * float(g),)

    return Tensor.from_op(np.array(nll.sum()), (logits,), grad)


def frobenius_distance(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"frobenius_distance: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    d = float(np.sqrt((diff * diff).sum()))

    def grad(g):
        if d == 0.0:
            # Subgradient 0 at the kink.
            z = np.zeros_like(diff)
            return z, z
        gd = diff * (float(g) / d)
        return gd, -gd

    return Tensor.from_op(np.array(d), (a, b), grad)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity unless ``training`` and ``p > 0``."""
    if not training or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise DomainError(f"dropout probability {p} outside [0, 1)")
    if rng is None:
        raise DomainError("dropout in training mode needs an rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return Tensor.from_op(x.data * mask, (x,), lambda g: (g * mask,))


def gru_forward(x: np.ndarray, h: np.ndarray, W_x: np.ndarray, W_h: np.ndarray, b: np.ndarray,
                ax: np.ndarray | None = None, hzr: np.ndarray | None = None):
    """Row-batched GRU step on raw arrays; returns ``(h_new, cache)``.

    ``ax = x W_x + b`` and ``hzr = h W_h[:, :2d]`` may be passed in when
    they were computed for many rows at once.
    """
    d = h.shape[-1]
    if ax is None:
        ax = x @ W_x + b
    if hzr is None:
        hzr = h @ W_h[:, : 2 * d]
    zr = expit(ax[..., : 2 * d] + hzr)
    z, r = zr[..., :d], zr[..., d:]
    rh = r * h
    c = np.tanh(ax[..., 2 * d :] + rh @ W_h[:, 2 * d :])
    return h + z * (c - h), (h, z, r, rh, c)


def gru_backward(g: np.ndarray, cache, W_h: np.ndarray, weight_grad: bool = True):
    """Partial GRU backward.

    Returns ``(da, dh_direct, dW_hc)``: ``da`` is the gradient w.r.t. the
    pre-activations ``ax`` (the caller maps it onto x, W_x, b, and its first
    ``2d`` columns onto the ``hzr`` product), ``dh_direct`` is the part of
    dL/dh that bypasses ``hzr``, and ``dW_hc`` the candidate block of dL/dW_h
    (``None`` with ``weight_grad=False``; it equals ``outer(rh, da[2d:])``).
    """
    h, z, r, rh, c = cache
    d = h.shape[-1]
    Wh_c = W_h[:, 2 * d :]
    da = np.empty(h.shape[:-1] + (3 * d,))
    dc_pre = g * z * (1.0 - c * c)
    da[..., 2 * d :] = dc_pre
    d_rh = dc_pre @ Wh_c.T
    da[..., :d] = g * (c - h) * z * (1.0 - z)
    da[..., d : 2 * d] = d_rh * h * r * (1.0 - r)
    dh_direct = g * (1.0 - z) + d_rh * r
    if not weight_grad:
        return da, dh_direct, None
    if rh.ndim == 1:
        dW_hc = np.outer(rh, dc_pre)
    else:
        dW_hc = rh.T @ dc_pre
    return da, dh_direct, dW_hc


def gru_cell(x: Tensor, h_prev: Tensor, W_x: Tensor, W_h: Tensor, b: Tensor) -> Tensor:
    """One GRU step with gate blocks ordered [update, reset, candidate].

    ``W_x``: (d_x, 3*d_h), ``W_h``: (d_h, 3*d_h), ``b``: (3*d_h,).
    ``z = sigmoid(x W_xz + h W_hz + b_z)``, ``r`` likewise,
    ``c = tanh(x W_xc + (r*h) W_hc + b_c)``, ``h' = (1-z)*h + z*c``.
    Rows of a 2-D ``x``/``h_prev`` are independent steps.
    """
    d_h = h_prev.shape[-1]
    if W_h.shape != (d_h, 3 * d_h) or b.shape != (3 * d_h,):
        raise DimensionError(
            f"gru_cell: hidden size {d_h} incompatible with W_h {W_h.shape} / b {b.shape}"
        )
    if W_x.ndim != 2 or W_x.shape[1] != 3 * d_h or x.shape[-1] != W_x.shape[0]:
        raise DimensionError(f"gru_cell: input shape {x.shape} incompatible with W_x {W_x.shape}")
    if x.ndim != h_prev.ndim or x.ndim not in (1, 2) or (x.ndim == 2 and x.shape[0] != h_prev.shape[0]):
        raise DimensionError(f"gru_cell: batch mismatch between x {x.shape} and h {h_prev.shape}")

    xd, hd, Wx, Wh = x.data, h_prev.data, W_x.data, W_h.data
    out, cache = gru_forward(xd, hd, Wx, Wh, b.data)

    def grad(g):
        da, dh, dW_hc = gru_backward(g, cache, Wh)
        dzr = da[..., : 2 * d_h]
        dh = dh + dzr @ Wh[:, : 2 * d_h].T
        dx = da @ Wx.T
        if xd.ndim == 1:
            dWx = np.outer(xd, da)
            dWh = np.concatenate([np.outer(hd, dzr), dW_hc], axis=1)
            db = da
        else:
            dWx = xd.T @ da
            dWh = np.concatenate([hd.T @ dzr, dW_hc], axis=1)
            db = da.sum(axis=0)
        return dx, dh, dWx, dWh, db

    return Tensor.from_op(out, (x, h_prev, W_x, W_h, b), grad)
