"""Parameterized layers built on :mod:`sits_tempo.numerics.ops`."""
from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigurationError
from . import ops
from .tensor import Parameter, Tensor, as_tensor


def he_uniform(rng, shape, fan_in):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def glorot_uniform(rng, shape, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def _init(rng, shape, fan_in, fan_out, scheme):
    if scheme == "he":
        return he_uniform(rng, shape, fan_in)
    if scheme == "glorot":
        return glorot_uniform(rng, shape, fan_in, fan_out)
    if scheme == "zeros":
        return np.zeros(shape)
    raise ConfigurationError(f"unknown init scheme {scheme!r}")


class Module:
    """Base class: parameter discovery, train/eval switching, call protocol."""

    mode = "train"

    def forward(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)

    def children(self):
        for value in vars(self).values():
            if isinstance(value, Module):
                yield value
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield item

    def modules(self):
        yield self
        for child in self.children():
            yield from child.modules()

    def named_parameters(self, prefix=""):
        """All parameters (trainable or not) with dotted names, each exactly once."""
        seen = set()
        for name, p in self._walk(prefix):
            if id(p) not in seen:
                seen.add(id(p))
                yield name, p

    def _walk(self, prefix):
        for key, value in vars(self).items():
            path = f"{prefix}{key}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value._walk(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item._walk(f"{path}.{i}.")
                    elif isinstance(item, Parameter):
                        yield f"{path}.{i}", item

    def parameters(self, trainable_only=True):
        return [p for _, p in self.named_parameters() if p.trainable or not trainable_only]

    def zero_gradients(self):
        for p in self.parameters(trainable_only=False):
            p.zero_grad()

    def train(self):
        for m in self.modules():
            m.mode = "train"
        return self

    def eval(self):
        for m in self.modules():
            m.mode = "eval"
        return self

    def set_rng(self, rng):
        for m in self.modules():
            if isinstance(m, Dropout):
                m.rng = rng

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        for name, p in self.named_parameters():
            p.value = state[name]


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


class Dense(Module):
    def __init__(self, in_dim, out_dim, rng, init="he", name="dense"):
        self.weight = Parameter(_init(rng, (in_dim, out_dim), in_dim, out_dim, init), f"{name}.weight")
        self.bias = Parameter(np.zeros(out_dim), f"{name}.bias")

    def forward(self, x):
        return ops.dense_forward(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, c_in, c_out, k, rng, stride=1, padding="same", init="he", name="conv"):
        self.stride = stride
        self.padding = padding
        self.kernel = Parameter(_init(rng, (k, c_in, c_out), k * c_in, k * c_out, init), f"{name}.kernel")
        self.bias = Parameter(np.zeros(c_out), f"{name}.bias")

    def forward(self, x):
        return ops.conv1d_forward(x, self.kernel, self.bias, self.stride, self.padding)


class BatchNorm(Module):
    def __init__(self, channels, epsilon=1e-5, momentum=0.1, name="bn"):
        self.epsilon = epsilon
        self.momentum = momentum
        self.gamma = Parameter(np.ones(channels), f"{name}.gamma")
        self.beta = Parameter(np.zeros(channels), f"{name}.beta")
        self.running_mean = Parameter(np.zeros(channels), f"{name}.running_mean", trainable=False)
        self.running_var = Parameter(np.ones(channels), f"{name}.running_var", trainable=False)

    def forward(self, x):
        return ops.batchnorm_forward(x, self.gamma, self.beta, self.running_mean.data, self.running_var.data,
                                     self.mode, self.epsilon, self.momentum)


class Dropout(Module):
    def __init__(self, p):
        if not 0.0 <= p < 1.0:
            raise ConfigurationError(f"dropout rate must lie in [0, 1), got {p}")
        self.p = p
        self.rng = None

    def forward(self, x):
        return ops.dropout(x, self.p, self.mode, self.rng)


class Activation(Module):
    def __init__(self, kind):
        self.kind = kind

    def forward(self, x):
        return ops.activation(x, self.kind)


class Pool1d(Module):
    def __init__(self, k, kind="max", stride=None, padding="valid"):
        self.k, self.kind, self.stride, self.padding = k, kind, stride, padding

    def forward(self, x):
        return ops.pool1d(x, self.k, self.kind, self.stride, self.padding)


class GlobalMaxPool(Module):
    def forward(self, x):
        return ops.global_max_pool_time(x)


class GlobalAvgPool(Module):
    def forward(self, x):
        return ops.global_avg_pool_time(x)


class Flatten(Module):
    def forward(self, x):
        return ops.reshape(x, (x.shape[0], -1))


class LayerNorm(Module):
    def __init__(self, m, epsilon=1e-5, name="ln"):
        self.epsilon = epsilon
        self.gamma = Parameter(np.ones(m), f"{name}.gamma")
        self.beta = Parameter(np.zeros(m), f"{name}.beta")

    def forward(self, x):
        return ops.layer_norm(x, self.gamma, self.beta, self.epsilon)


# ---------------------------------------------------------------- recurrent

def gru_layer_forward(x, params, direction="forward"):
    """GRU over ``[batch, T, C_in]``.

    ``params`` maps ``"forward"``/``"backward"`` to dicts with ``w_ih``
    ``[C_in, 3H]``, ``w_hh`` ``[H, 3H]``, ``b_ih`` and ``b_hh`` ``[3H]``.
    Bidirectional output concatenates forward then backward states per
    timestep along channels.
    """
    if direction not in ("forward", "backward", "bidirectional"):
        raise ConfigurationError(f"unknown GRU direction {direction!r}")
    outs = []
    for d in (("forward", "backward") if direction == "bidirectional" else (direction,)):
        p = params[d]
        proj = ops.dense_forward(x, p["w_ih"], p["b_ih"])
        outs.append(ops.gru_recurrence(proj, p["w_hh"], p["b_hh"], reverse=(d == "backward")))
    return outs[0] if len(outs) == 1 else ops.concat(outs, axis=-1)


class GRU(Module):
    def __init__(self, c_in, hidden, rng, direction="bidirectional", name="gru"):
        if hidden < 1:
            raise ConfigurationError(f"GRU hidden size must be >= 1, got {hidden}")
        self.hidden = hidden
        self.direction = direction
        dirs = ("forward", "backward") if direction == "bidirectional" else (direction,)
        self.cells = []
        for d in dirs:
            cell = _GRUCell(c_in, hidden, rng, f"{name}.{d}")
            cell.direction = d
            self.cells.append(cell)

    @property
    def out_dim(self):
        return self.hidden * len(self.cells)

    def params_dict(self):
        return {c.direction: c.as_dict() for c in self.cells}

    def forward(self, x):
        return gru_layer_forward(x, self.params_dict(), self.direction)


class _GRUCell(Module):
    def __init__(self, c_in, hidden, rng, name):
        h3 = 3 * hidden
        self.w_ih = Parameter(glorot_uniform(rng, (c_in, h3), c_in, h3), f"{name}.w_ih")
        self.w_hh = Parameter(glorot_uniform(rng, (hidden, h3), hidden, h3), f"{name}.w_hh")
        self.b_ih = Parameter(np.zeros(h3), f"{name}.b_ih")
        self.b_hh = Parameter(np.zeros(h3), f"{name}.b_hh")

    def as_dict(self):
        return {"w_ih": self.w_ih, "w_hh": self.w_hh, "b_ih": self.b_ih, "b_hh": self.b_hh}


# ---------------------------------------------------------------- attention

def multi_head_attention(x, heads, params, return_weights=False):
    """Unmasked scaled dot-product self-attention over time.

    ``params`` holds ``wq, wk, wv, wo`` ``[M, M]`` and ``bq, bk, bv, bo`` ``[M]``.
    Scores are scaled by ``1/sqrt(M/heads)``.
    """
    x = as_tensor(x)
    b, t, m = x.shape
    if m % heads:
        raise ConfigurationError(f"model width {m} is not divisible by {heads} heads")
    d = m // heads

    def split(w, bias):
        y = ops.dense_forward(x, params[w], params[bias])
        return ops.transpose(ops.reshape(y, (b, t, heads, d)), (0, 2, 1, 3))

    q, k, v = split("wq", "bq"), split("wk", "bk"), split("wv", "bv")
    scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d))
    weights = ops.softmax(scores, axis=-1)
    ctx = ops.reshape(ops.transpose(ops.matmul(weights, v), (0, 2, 1, 3)), (b, t, m))
    out = ops.dense_forward(ctx, params["wo"], params["bo"])
    return (out, weights.data) if return_weights else out


class MultiHeadAttention(Module):
    def __init__(self, m, heads, rng, name="mha"):
        if m % heads:
            raise ConfigurationError(f"model width {m} is not divisible by {heads} heads")
        self.heads = heads
        for w in ("q", "k", "v", "o"):
            setattr(self, f"w{w}", Parameter(glorot_uniform(rng, (m, m), m, m), f"{name}.w{w}"))
            setattr(self, f"b{w}", Parameter(np.zeros(m), f"{name}.b{w}"))
        self.last_weights = None

    def params_dict(self):
        return {k: getattr(self, k) for k in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")}

    def forward(self, x):
        out, self.last_weights = multi_head_attention(x, self.heads, self.params_dict(), return_weights=True)
        return out


def positional_encoding(t, m):
    """Sinusoidal table ``[T, M]``: sin on even columns, cos on odd ones."""
    pos = np.arange(t)[:, None]
    i = np.arange(m)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / m)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return Tensor(table)


class PositionalEncoding(Module):
    def __init__(self, t, m):
        self.table = positional_encoding(t, m)

    def forward(self, x):
        x = as_tensor(x)
        return ops.add(x, self.table.data[: x.shape[1]])
