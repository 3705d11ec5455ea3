"""Per-pixel satellite image time series classification: autodiff engine,
six reference architectures, preprocessing, training and a benchmark harness."""

__version__ = "0.1.0"
