"""Differentiable primitives.

Every function takes and returns :class:`Tensor` objects. When a tape is
active and any input requires a gradient, the op records a closure that maps
the output gradient to one gradient per input (``None`` where not needed).
Time-series tensors are laid out ``[batch, time, channels]``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, DegenerateBatchError, DimensionError
from .tensor import Tensor, as_tensor, current_tape

CE_CLIP = 1e-12


def _emit(data, inputs, backward_fn):
    tape = current_tape()
    needs = tape is not None and any(isinstance(t, Tensor) and t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(out, inputs, backward_fn)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _emit(a.data + b.data, (a, b), back)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _emit(a.data - b.data, (a, b), back)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _emit(a.data * b.data, (a, b), back)


def activation(x, kind):
    """Elementwise ``relu``, ``sigmoid`` or ``tanh``."""
    x = as_tensor(x)
    if kind == "relu":
        pos = x.data > 0
        out = np.where(pos, x.data, 0.0)
        return _emit(out, (x,), lambda g: (g * pos,))
    if kind == "sigmoid":
        out = _sigmoid(x.data)
        return _emit(out, (x,), lambda g: (g * out * (1.0 - out),))
    if kind == "tanh":
        out = np.tanh(x.data)
        return _emit(out, (x,), lambda g: (g * (1.0 - out * out),))
    if kind in (None, "linear", "identity"):
        return x
    raise ConfigurationError(f"unknown activation {kind!r}")


def relu(x):
    return activation(x, "relu")


def sigmoid(x):
    return activation(x, "sigmoid")


def tanh(x):
    return activation(x, "tanh")


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit(out, (x,), back)


# ---------------------------------------------------------------- shape ops

def reshape(x, shape):
    x = as_tensor(x)
    src = x.shape
    return _emit(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),))


def transpose(x, axes):
    x = as_tensor(x)
    inv = np.argsort(axes)
    return _emit(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def getitem(x, index):
    x = as_tensor(x)
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(i, (int, np.integer, slice)) or i is Ellipsis or i is None for i in parts)

    def back(g):
        z = np.zeros_like(x.data)
        if basic:
            z[index] = g
        else:
            np.add.at(z, index, g)
        return (z,)

    return _emit(x.data[index], (x,), back)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _emit(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back)


def sum(x, axis=None):
    x = as_tensor(x)
    shape = x.shape

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _emit(x.data.sum(axis=axis), (x,), back)


def mean(x, axis=None):
    x = as_tensor(x)
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis), 1.0 / n)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b):
    """Batched matrix product with numpy broadcasting on leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _emit(a.data @ b.data, (a, b), back)


def dense_forward(x, weights, bias=None):
    """Affine map over the last axis: ``x @ weights + bias``."""
    x, weights = as_tensor(x), as_tensor(weights)
    if weights.ndim != 2 or x.shape[-1] != weights.shape[0]:
        raise DimensionError(f"dense: input shape {x.shape} does not conform to weights shape {weights.shape}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (weights.shape[1],):
            raise DimensionError(f"dense: bias shape {bias.shape} does not conform to weights shape {weights.shape}")
    in_dim, out_dim = weights.shape
    x2 = x.data.reshape(-1, in_dim)
    out = x2 @ weights.data
    if bias is not None:
        out += bias.data
    out = out.reshape(x.shape[:-1] + (out_dim,))

    def back(g):
        g2 = g.reshape(-1, out_dim)
        gx = (g2 @ weights.data.T).reshape(x.shape)
        gw = x2.T @ g2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    inputs = (x, weights) if bias is None else (x, weights, bias)
    return _emit(out, inputs, back)


# ---------------------------------------------------------------- convolution and pooling

def _conv_padding(k, stride, padding):
    if stride < 1:
        raise ConfigurationError(f"stride must be >= 1, got {stride}")
    if padding == "same":
        if stride != 1:
            raise ConfigurationError("'same' padding requires stride 1")
        if k % 2 == 0:
            raise ConfigurationError(f"'same' padding requires an odd kernel, got k={k}")
        return (k - 1) // 2
    if padding == "valid":
        return 0
    raise ConfigurationError(f"unknown padding {padding!r}")


def conv1d_forward(x, kernel, bias, stride=1, padding="same"):
    """Cross-correlation along time.

    ``x`` is ``[batch, T, C_in]``, ``kernel`` is ``[k, C_in, C_out]``. Samples
    outside the series read as zero.
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.ndim != 3 or kernel.ndim != 3 or x.shape[2] != kernel.shape[1]:
        raise DimensionError(f"conv1d: input shape {x.shape} does not conform to kernel shape {kernel.shape}")
    if bias.shape != (kernel.shape[2],):
        raise DimensionError(f"conv1d: bias shape {bias.shape} does not conform to kernel shape {kernel.shape}")
    k, c_in, c_out = kernel.shape
    pad = _conv_padding(k, stride, padding)
    b, t, _ = x.shape
    t_pad = t + 2 * pad
    if k > t_pad:
        raise ConfigurationError(f"conv1d: kernel length {k} exceeds padded length {t_pad}")
    t_out = (t_pad - k) // stride + 1

    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0))) if pad else x.data
    win = sliding_window_view(xp, k, axis=1)[:, ::stride]  # [b, t_out, c_in, k]
    cols = np.ascontiguousarray(win.transpose(0, 1, 3, 2)).reshape(b * t_out, k * c_in)
    kmat = kernel.data.reshape(k * c_in, c_out)
    out = (cols @ kmat + bias.data).reshape(b, t_out, c_out)

    def back(g):
        g2 = g.reshape(-1, c_out)
        gk = (cols.T @ g2).reshape(k, c_in, c_out)
        gb = g2.sum(axis=0)
        gcols = (g2 @ kmat.T).reshape(b, t_out, k, c_in)
        gxp = np.zeros((b, t_pad, c_in))
        span = stride * (t_out - 1) + 1
        for tau in range(k):
            gxp[:, tau:tau + span:stride] += gcols[:, :, tau, :]
        return gxp[:, pad:pad + t], gk, gb

    return _emit(out, (x, kernel, bias), back)


def pool1d(x, k, kind="max", stride=None, padding="valid"):
    """Windowed max or mean along time, per channel."""
    x = as_tensor(x)
    stride = k if stride is None else stride
    b, t, c = x.shape
    if padding == "same":
        pad = _conv_padding(k, stride, padding)
    elif padding == "valid":
        pad = 0
        if k > t:
            raise ConfigurationError(f"pool1d: window {k} longer than series length {t}")
    else:
        raise ConfigurationError(f"unknown padding {padding!r}")
    fill = -np.inf if kind == "max" else 0.0
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)), constant_values=fill) if pad else x.data
    t_pad = t + 2 * pad
    win = sliding_window_view(xp, k, axis=1)[:, ::stride]  # [b, t_out, c, k]
    t_out = win.shape[1]
    span = stride * (t_out - 1) + 1

    if kind == "max":
        idx = win.argmax(axis=-1)
        out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]

        def back(g):
            gxp = np.zeros((b, t_pad, c))
            for tau in range(k):
                gxp[:, tau:tau + span:stride] += g * (idx == tau)
            return (gxp[:, pad:pad + t],)
    elif kind == "avg":
        out = win.mean(axis=-1)

        def back(g):
            gxp = np.zeros((b, t_pad, c))
            gk = g / k
            for tau in range(k):
                gxp[:, tau:tau + span:stride] += gk
            return (gxp[:, pad:pad + t],)
    else:
        raise ConfigurationError(f"unknown pooling kind {kind!r}")
    return _emit(out, (x,), back)


def global_max_pool_time(x):
    x = as_tensor(x)
    idx = x.data.argmax(axis=1)  # [b, c]
    out = np.take_along_axis(x.data, idx[:, None, :], axis=1)[:, 0, :]

    def back(g):
        z = np.zeros_like(x.data)
        np.put_along_axis(z, idx[:, None, :], g[:, None, :], axis=1)
        return (z,)

    return _emit(out, (x,), back)


def global_avg_pool_time(x):
    return mean(x, axis=1)


# ---------------------------------------------------------------- normalization and regularization

def batchnorm_forward(x, gamma, beta, running_mean, running_var, mode="train", epsilon=1e-5, momentum=0.1):
    """Per-channel batch normalization over batch (and time for 3-D input).

    ``running_mean``/``running_var`` are numpy arrays updated in place in
    train mode as ``new = (1 - momentum) * old + momentum * batch``.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    axes = (0,) if x.ndim == 2 else (0, 1)
    if mode == "train":
        if x.shape[0] < 2:
            raise DegenerateBatchError("batch normalization in train mode needs a batch of at least 2")
        n = int(np.prod([x.shape[a] for a in axes]))
        mu = x.data.mean(axis=axes)
        xc = x.data - mu
        var = (xc * xc).mean(axis=axes)
        inv_std = 1.0 / np.sqrt(var + epsilon)
        xhat = xc * inv_std
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * n / (n - 1)

        def back(g):
            dxhat = g * gamma.data
            s1 = dxhat.sum(axis=axes)
            s2 = (dxhat * xhat).sum(axis=axes)
            gx = inv_std / n * (n * dxhat - s1 - xhat * s2)
            return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)
    elif mode == "eval":
        inv_std = 1.0 / np.sqrt(running_var + epsilon)
        xhat = (x.data - running_mean) * inv_std

        def back(g):
            return g * gamma.data * inv_std, (g * xhat).sum(axis=axes), g.sum(axis=axes)
    else:
        raise ConfigurationError(f"unknown mode {mode!r}")
    out = gamma.data * xhat + beta.data
    return _emit(out, (x, gamma, beta), back)


def layer_norm(x, gamma, beta, epsilon=1e-5):
    """Normalize each position over its last axis, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    m = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + epsilon)
    xhat = xc * inv_std
    lead = tuple(range(x.ndim - 1))

    def back(g):
        dxhat = g * gamma.data
        s1 = dxhat.sum(axis=-1, keepdims=True)
        s2 = (dxhat * xhat).sum(axis=-1, keepdims=True)
        gx = inv_std / m * (m * dxhat - s1 - xhat * s2)
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _emit(gamma.data * xhat + beta.data, (x, gamma, beta), back)


def dropout(x, p, mode="train", rng=None):
    """Inverted dropout: survivors are scaled by ``1/(1-p)`` at train time."""
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"dropout rate must lie in [0, 1), got {p}")
    x = as_tensor(x)
    if mode == "eval" or p == 0.0:
        return x
    if rng is None:
        raise ConfigurationError("train-mode dropout needs a seeded generator")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return _emit(x.data * mask, (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------- recurrence

def gru_recurrence(x_proj, w_hh, b_hh, reverse=False):
    """Run a GRU over precomputed input projections.

    ``x_proj`` is ``[batch, T, 3H]`` holding ``x @ W_ih + b_ih`` with gate
    blocks ordered (reset, update, candidate). With ``h`` the previous state::

        r  = sigmoid(xr + h @ Whr + bhr)
        z  = sigmoid(xz + h @ Whz + bhz)
        n  = tanh(xn + r * (h @ Whn + bhn))
        h' = (1 - z) * n + z * h

    The initial state is zero. Output ``[batch, T, H]`` holds the state after
    each timestep, at that timestep's index (also when ``reverse``).
    """
    x_proj, w_hh, b_hh = as_tensor(x_proj), as_tensor(w_hh), as_tensor(b_hh)
    b, t, h3 = x_proj.shape
    hid = h3 // 3
    if w_hh.shape != (hid, h3) or b_hh.shape != (h3,):
        raise DimensionError(f"gru: projection {x_proj.shape} does not conform to W_hh {w_hh.shape}, b_hh {b_hh.shape}")
    order = range(t - 1, -1, -1) if reverse else range(t)
    xd, w, bias = x_proj.data, w_hh.data, b_hh.data
    h = np.zeros((b, hid))
    out = np.empty((b, t, hid))
    cache = []
    for step in order:
        hh = h @ w + bias
        xs = xd[:, step]
        r = _sigmoid(xs[:, :hid] + hh[:, :hid])
        z = _sigmoid(xs[:, hid:2 * hid] + hh[:, hid:2 * hid])
        n = np.tanh(xs[:, 2 * hid:] + r * hh[:, 2 * hid:])
        h_new = (1.0 - z) * n + z * h
        cache.append((step, h, r, z, n, hh[:, 2 * hid:]))
        out[:, step] = h_new
        h = h_new

    def back(g):
        gx = np.zeros_like(xd)
        gw = np.zeros_like(w)
        gb = np.zeros_like(bias)
        dh_next = np.zeros((b, hid))
        for step, h_prev, r, z, n, hhn in reversed(cache):
            dh = g[:, step] + dh_next
            dn_pre = dh * (1.0 - z) * (1.0 - n * n)
            dz_pre = dh * (h_prev - n) * z * (1.0 - z)
            dr_pre = dn_pre * hhn * r * (1.0 - r)
            gx[:, step, :hid] = dr_pre
            gx[:, step, hid:2 * hid] = dz_pre
            gx[:, step, 2 * hid:] = dn_pre
            dhh = np.concatenate([dr_pre, dz_pre, dn_pre * r], axis=1)
            gw += h_prev.T @ dhh
            gb += dhh.sum(axis=0)
            dh_next = dh * z + dhh @ w.T
        return gx, gw, gb

    return _emit(out, (x_proj, w_hh, b_hh), back)


# ---------------------------------------------------------------- losses

def cross_entropy_loss(probs, onehot):
    """Mean over the batch of ``-log p(true class)``; probabilities clipped to [1e-12, 1]."""
    probs, onehot = as_tensor(probs), as_tensor(onehot)
    if probs.shape != onehot.shape:
        raise DimensionError(f"cross entropy: predictions {probs.shape} vs targets {onehot.shape}")
    batch = probs.shape[0]
    clipped = np.clip(probs.data, CE_CLIP, 1.0)
    loss = -(onehot.data * np.log(clipped)).sum() / batch
    # gradient passes straight through the clip so saturated rows still learn
    return _emit(np.asarray(loss), (probs, onehot), lambda g: (-g * onehot.data / clipped / batch, None))


def mse_loss(preds, onehot):
    preds, onehot = as_tensor(preds), as_tensor(onehot)
    if preds.shape != onehot.shape:
        raise DimensionError(f"mse: predictions {preds.shape} vs targets {onehot.shape}")
    diff = preds.data - onehot.data
    return _emit(np.asarray((diff * diff).mean()), (preds, onehot), lambda g: (g * 2.0 * diff / diff.size, None))
