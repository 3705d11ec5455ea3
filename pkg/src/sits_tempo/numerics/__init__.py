"""Tensor arithmetic and reverse-mode automatic differentiation."""
from .tensor import DTYPE, Parameter, Tape, Tensor, as_tensor, backward, zero_gradients
from .ops import (
    activation,
    batchnorm_forward,
    concat,
    conv1d_forward,
    cross_entropy_loss,
    dense_forward,
    dropout,
    global_avg_pool_time,
    global_max_pool_time,
    gru_recurrence,
    layer_norm,
    matmul,
    mse_loss,
    pool1d,
    softmax,
)
from .layers import (
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
    gru_layer_forward,
    multi_head_attention,
    positional_encoding,
)
