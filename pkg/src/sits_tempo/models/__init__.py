"""The six surveyed architectures, their configurations and persistence."""
from .base import Model, argmax_lowest
from .builders import (
    BUILDERS,
    build_inception_time,
    build_mcdcnn,
    build_model,
    build_rnn,
    build_temporal_cnn,
    build_time_cnn,
    build_transformer,
    count_parameters,
    inception_kernel_sizes,
)
from .config import VARIANTS, ModelConfig
from .io import load_model, save_model
