"""Builders for the six architectures.

Every builder takes ``(cfg, T, C, N, seed=0)`` and is pure in those
arguments: weights are drawn from ``default_rng([seed, 0])`` and the dropout
stream from ``default_rng([seed, 1])``.
"""
from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from ..numerics import ops
from ..numerics.layers import (
    GRU,
    Activation,
    BatchNorm,
    Conv1d,
    Dense,
    Dropout,
    Flatten,
    GlobalAvgPool,
    GlobalMaxPool,
    LayerNorm,
    Module,
    MultiHeadAttention,
    PositionalEncoding,
    Pool1d,
    Sequential,
)
from .base import Model
from .config import ModelConfig

INCEPTION_KERNELS = (10, 20, 40)
INCEPTION_BOTTLENECK = 32
MCDCNN_FILTERS = 8


def _check(cfg: ModelConfig, variant: str, t, c, n):
    if cfg.variant != variant:
        raise ConfigurationError(f"expected a {variant} config, got {cfg.variant}")
    cfg.validate()
    for name, v in (("T", t), ("C", c), ("N", n)):
        if int(v) < 1:
            raise ConfigurationError(f"{name} must be >= 1, got {v}")
    if n < 2:
        raise ConfigurationError(f"need at least two classes, got N={n}")


def _weights_rng(seed):
    return np.random.default_rng([int(seed), 0])


# ------------------------------------------------------------- temporal cnn

class TemporalCNN(Model):
    def __init__(self, cfg, t, c, n, seed=0):
        super().__init__(cfg, t, c, n, seed)
        rng = _weights_rng(seed)
        u, f, k = cfg.nb_conv_units, cfg.nb_fc_units, cfg.filter_size
        blocks = []
        c_in = c
        for i in range(cfg.nb_conv_layers):
            blocks.append(Sequential(Conv1d(c_in, u, k, rng, name=f"conv{i}"), BatchNorm(u, name=f"bn{i}"),
                                     Activation("relu"), Dropout(cfg.dropout)))
            c_in = u
        self.features = Sequential(*blocks)
        self.flatten = Flatten()
        self.fc = Sequential(Dense(t * u, f, rng, name="fc"), BatchNorm(f, name="bn_fc"), Activation("relu"),
                             Dropout(cfg.dropout))
        self.out = Dense(f, n, rng, init="glorot", name="out")

    def forward(self, x):
        x = self.check_input(x)
        return ops.softmax(self.out(self.fc(self.flatten(self.features(x)))))


def build_temporal_cnn(cfg: ModelConfig, t: int, c: int, n: int, seed: int = 0) -> TemporalCNN:
    _check(cfg, "temporal_cnn", t, c, n)
    if t < cfg.filter_size:
        raise ConfigurationError(f"series length T={t} is shorter than filter_size {cfg.filter_size}")
    model = TemporalCNN(cfg, t, c, n, seed)
    model.reseed(seed)
    return model


# ------------------------------------------------------------------- mcdcnn

class MCDCNN(Model):
    def __init__(self, cfg, t, c, n, seed=0):
        super().__init__(cfg, t, c, n, seed)
        rng = _weights_rng(seed)
        self.branches = [
            Sequential(Conv1d(1, MCDCNN_FILTERS, 5, rng, name=f"branch{j}.conv0"), Activation("relu"), Pool1d(2),
                       Conv1d(MCDCNN_FILTERS, MCDCNN_FILTERS, 5, rng, name=f"branch{j}.conv1"), Activation("relu"),
                       Pool1d(2), Flatten())
            for j in range(c)
        ]
        width = c * MCDCNN_FILTERS * ((t // 2) // 2)
        self.head_layers = Sequential(
            Dense(width, 732, rng, name="fc0"), Activation("relu"),
            Dense(732, 256, rng, name="fc1"), Activation("relu"),
            Dropout(cfg.dropout),
            Dense(256, 128, rng, name="fc2"), Activation("relu"),
            BatchNorm(128, name="bn"),
            Dense(128, n, rng, init="glorot", name="out"),
        )

    def forward(self, x):
        x = self.check_input(x)
        parts = [branch(x[:, :, j:j + 1]) for j, branch in enumerate(self.branches)]
        merged = parts[0] if len(parts) == 1 else ops.concat(parts, axis=-1)
        return ops.softmax(self.head_layers(merged))


def build_mcdcnn(cfg: ModelConfig, t: int, c: int, n: int, seed: int = 0) -> MCDCNN:
    _check(cfg, "mcdcnn", t, c, n)
    if t < 4:
        raise ConfigurationError(f"T={t} is too short for two conv + maxpool(2) stages (need T >= 4)")
    model = MCDCNN(cfg, t, c, n, seed)
    model.reseed(seed)
    return model


# ----------------------------------------------------------------- time cnn

class TimeCNN(Model):
    head = "sigmoid"

    def __init__(self, cfg, t, c, n, seed=0):
        super().__init__(cfg, t, c, n, seed)
        rng = _weights_rng(seed)
        t1 = t // 3
        self.features = Sequential(
            Conv1d(c, 6, 5, rng, init="glorot", name="conv0"), Activation("sigmoid"),
            Pool1d(3, "avg"),
            Conv1d(6, 12, 5, rng, init="glorot", name="conv1"), Activation("sigmoid"),
            Flatten(),
        )
        self.classifier = Sequential(
            Dense(12 * t1, 128, rng, name="fc0"), Activation("relu"),
            Dropout(cfg.dropout),
            Dense(128, 64, rng, name="fc1"), Activation("relu"),
            BatchNorm(64, name="bn"),
            Dense(64, 32, rng, name="fc2"), Activation("relu"),
            Dense(32, n, rng, init="glorot", name="out"),
        )

    def forward(self, x):
        x = self.check_input(x)
        return ops.activation(self.classifier(self.features(x)), "sigmoid")


def build_time_cnn(cfg: ModelConfig, t: int, c: int, n: int, seed: int = 0) -> TimeCNN:
    _check(cfg, "time_cnn", t, c, n)
    if t < 5:
        raise ConfigurationError(f"Time-CNN needs T >= 5, got {t}")
    model = TimeCNN(cfg, t, c, n, seed)
    model.reseed(seed)
    return model


# ---------------------------------------------------------------------- rnn

class RNN(Model):
    def __init__(self, cfg, t, c, n, seed=0):
        super().__init__(cfg, t, c, n, seed)
        rng = _weights_rng(seed)
        h = cfg.hidden
        self.grus = []
        c_in = c
        for i in range(cfg.layers):
            self.grus.append(GRU(c_in, h, rng, "bidirectional", name=f"gru{i}"))
            c_in = 2 * h
        self.classifier = Sequential(
            Dropout(cfg.dropout),
            Dense(2 * h, cfg.fc_units, rng, name="fc"), Activation("relu"),
            Dense(cfg.fc_units, n, rng, init="glorot", name="out"),
        )

    def forward(self, x):
        x = self.check_input(x)
        for gru in self.grus:
            x = gru(x)
        h = self.config.hidden
        # forward direction ends at the last step, backward direction at step 0
        summary = ops.concat([x[:, -1, :h], x[:, 0, h:]], axis=-1)
        return ops.softmax(self.classifier(summary))


def build_rnn(cfg: ModelConfig, t: int, c: int, n: int, seed: int = 0) -> RNN:
    _check(cfg, "rnn", t, c, n)
    model = RNN(cfg, t, c, n, seed)
    model.reseed(seed)
    return model


# ------------------------------------------------------------ inceptiontime

def inception_kernel_sizes(t: int, base=INCEPTION_KERNELS) -> tuple:
    """Odd kernels for ``same`` padding, clipped to the largest odd size <= T."""
    largest = t if t % 2 else t - 1
    out = []
    for k in base:
        k = k if k % 2 else k - 1
        out.append(max(1, min(k, largest)))
    return tuple(out)


class InceptionModule(Module):
    """Bottleneck, three parallel convolutions and a pooled branch, depth-concatenated."""

    def __init__(self, c_in, filters, kernels, rng, name):
        b = INCEPTION_BOTTLENECK
        self.bottleneck = Conv1d(c_in, b, 1, rng, name=f"{name}.bottleneck")
        self.convs = [Conv1d(b, filters, k, rng, name=f"{name}.conv{k}") for k in kernels]
        self.pool = Pool1d(3, "max", stride=1, padding="same")
        self.pool_conv = Conv1d(c_in, b, 1, rng, name=f"{name}.pool_conv")
        self.out_channels = len(kernels) * filters + b
        self.bn = BatchNorm(self.out_channels, name=f"{name}.bn")
        self.act = Activation("relu")

    def forward(self, x):
        z = self.bottleneck(x)
        branches = [conv(z) for conv in self.convs] + [self.pool_conv(self.pool(x))]
        return self.act(self.bn(ops.concat(branches, axis=-1)))


class Shortcut(Module):
    def __init__(self, c_in, c_out, rng, name):
        self.conv = Conv1d(c_in, c_out, 1, rng, name=f"{name}.conv")
        self.bn = BatchNorm(c_out, name=f"{name}.bn")

    def forward(self, x):
        return self.bn(self.conv(x))


class InceptionTime(Model):
    def __init__(self, cfg, t, c, n, seed=0):
        super().__init__(cfg, t, c, n, seed)
        rng = _weights_rng(seed)
        self.kernels = inception_kernel_sizes(t)
        self.blocks = []
        self.shortcuts = []
        c_in, res_in = c, c
        for d in range(cfg.layers):
            block = InceptionModule(c_in, cfg.hidden, self.kernels, rng, name=f"inception{d}")
            self.blocks.append(block)
            c_in = block.out_channels
            if d % 3 == 2:
                self.shortcuts.append(Shortcut(res_in, c_in, rng, name=f"shortcut{d // 3}"))
                res_in = c_in
        self.gap = GlobalAvgPool()
        self.dropout = Dropout(cfg.dropout)
        self.out = Dense(c_in, n, rng, init="glorot", name="out")

    def forward(self, x):
        x = self.check_input(x)
        residual = x
        for d, block in enumerate(self.blocks):
            x = block(x)
            if d % 3 == 2:
                x = ops.relu(ops.add(x, self.shortcuts[d // 3](residual)))
                residual = x
        return ops.softmax(self.out(self.dropout(self.gap(x))))


def build_inception_time(cfg: ModelConfig, t: int, c: int, n: int, seed: int = 0) -> InceptionTime:
    _check(cfg, "inception_time", t, c, n)
    model = InceptionTime(cfg, t, c, n, seed)
    model.reseed(seed)
    return model


# -------------------------------------------------------------- transformer

class EncoderBlock(Module):
    """Post-norm encoder block: attention and feed-forward, each with residual and layer norm."""

    def __init__(self, m, heads, inner, dropout, rng, name):
        self.attn = MultiHeadAttention(m, heads, rng, name=f"{name}.mha")
        self.drop1 = Dropout(dropout)
        self.ln1 = LayerNorm(m, name=f"{name}.ln1")
        self.ff1 = Dense(m, inner, rng, name=f"{name}.ff1")
        self.act = Activation("relu")
        self.ff2 = Dense(inner, m, rng, init="glorot", name=f"{name}.ff2")
        self.drop2 = Dropout(dropout)
        self.ln2 = LayerNorm(m, name=f"{name}.ln2")

    def forward(self, x):
        x = self.ln1(ops.add(x, self.drop1(self.attn(x))))
        return self.ln2(ops.add(x, self.drop2(self.ff2(self.act(self.ff1(x))))))


class Transformer(Model):
    def __init__(self, cfg, t, c, n, seed=0):
        super().__init__(cfg, t, c, n, seed)
        rng = _weights_rng(seed)
        m = cfg.d_model
        self.embed = Dense(c, m, rng, init="glorot", name="embed")
        self.position = PositionalEncoding(t, m)
        self.blocks = [EncoderBlock(m, cfg.heads, cfg.d_inner, cfg.dropout, rng, name=f"block{i}")
                       for i in range(cfg.layers)]
        self.pool = GlobalMaxPool()
        self.out = Dense(m, n, rng, init="glorot", name="out")

    def forward(self, x):
        x = self.check_input(x)
        x = self.position(self.embed(x))
        for block in self.blocks:
            x = block(x)
        return ops.softmax(self.out(self.pool(x)))

    def attention_maps(self) -> list:
        """Per-block attention weights ``[B, heads, T, T]`` from the most recent forward pass."""
        return [b.attn.last_weights for b in self.blocks]


def build_transformer(cfg: ModelConfig, t: int, c: int, n: int, seed: int = 0) -> Transformer:
    _check(cfg, "transformer", t, c, n)
    model = Transformer(cfg, t, c, n, seed)
    model.reseed(seed)
    return model


BUILDERS = {
    "temporal_cnn": build_temporal_cnn,
    "mcdcnn": build_mcdcnn,
    "time_cnn": build_time_cnn,
    "rnn": build_rnn,
    "inception_time": build_inception_time,
    "transformer": build_transformer,
}


def build_model(cfg: ModelConfig, t: int, c: int, n: int, seed: int = 0) -> Model:
    """Dispatch on ``cfg.variant``."""
    try:
        builder = BUILDERS[cfg.variant]
    except KeyError:
        raise ConfigurationError(f"unknown variant {cfg.variant!r}") from None
    return builder(cfg, t, c, n, seed)


def count_parameters(model) -> int:
    """Number of trainable scalars; batch-norm running statistics are not trainable."""
    return int(sum(p.data.size for p in model.parameters(trainable_only=True)))
