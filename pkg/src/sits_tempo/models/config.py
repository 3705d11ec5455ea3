"""Declarative architecture descriptions."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from ..errors import ConfigurationError

VARIANTS = ("temporal_cnn", "mcdcnn", "time_cnn", "rnn", "inception_time", "transformer")

# fields each variant reads; everything else must stay None
VARIANT_FIELDS = {
    "temporal_cnn": ("nb_conv_layers", "nb_conv_units", "nb_fc_units", "filter_size", "dropout"),
    "mcdcnn": ("dropout",),
    "time_cnn": ("dropout",),
    "rnn": ("layers", "hidden", "fc_units", "dropout"),
    "inception_time": ("layers", "hidden", "dropout"),
    "transformer": ("heads", "layers", "d_model", "d_inner", "dropout"),
}

_INT_FIELDS = {"nb_conv_layers", "nb_conv_units", "nb_fc_units", "filter_size", "layers", "hidden",
               "fc_units", "heads", "d_model", "d_inner"}


@dataclass(frozen=True)
class ModelConfig:
    """One architecture and its hyperparameters.

    ``layers``/``hidden`` are read per variant: stacked GRUs and their width
    for ``rnn``, Inception modules and filters per branch for
    ``inception_time``, encoder blocks for ``transformer``.
    """

    variant: str
    dropout: float = 0.0
    nb_conv_layers: int | None = None
    nb_conv_units: int | None = None
    nb_fc_units: int | None = None
    filter_size: int | None = None
    layers: int | None = None
    hidden: int | None = None
    fc_units: int | None = None
    heads: int | None = None
    d_model: int | None = None
    d_inner: int | None = None

    @classmethod
    def default(cls, variant: str) -> "ModelConfig":
        """Architecture defaults as originally published for each model."""
        defaults = {
            "temporal_cnn": dict(nb_conv_layers=3, nb_conv_units=64, nb_fc_units=256, filter_size=5, dropout=0.182),
            "mcdcnn": dict(dropout=0.3),
            "time_cnn": dict(dropout=0.3),
            "rnn": dict(layers=3, hidden=128, fc_units=256, dropout=0.2),
            "inception_time": dict(layers=6, hidden=32, dropout=0.0),
            "transformer": dict(heads=8, layers=6, d_model=512, d_inner=2048, dropout=0.2),
        }
        if variant not in defaults:
            raise ConfigurationError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
        return cls(variant=variant, **defaults[variant]).validate()

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes).validate()

    def validate(self) -> "ModelConfig":
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; expected one of {', '.join(VARIANTS)}")
        if not 0.0 <= self.dropout <= 0.5:
            raise ConfigurationError(f"dropout {self.dropout} outside the search space [0, 0.5]")
        used = VARIANT_FIELDS[self.variant]
        for f in fields(self):
            if f.name in _INT_FIELDS:
                value = getattr(self, f.name)
                if f.name in used and value is None:
                    raise ConfigurationError(f"{self.variant}: missing {f.name}")
                if value is not None and (not isinstance(value, int) or value < 0):
                    raise ConfigurationError(f"{self.variant}: {f.name} must be a non-negative integer, got {value!r}")
        v = self.variant
        if v == "temporal_cnn":
            if not 2 <= self.nb_conv_layers <= 5:
                raise ConfigurationError(f"nb_conv_layers must lie in [2, 5], got {self.nb_conv_layers}")
            if self.filter_size < 3 or self.filter_size % 2 == 0:
                raise ConfigurationError(f"filter_size must be odd and >= 3, got {self.filter_size}")
            if self.nb_conv_units < 1 or self.nb_fc_units < 1:
                raise ConfigurationError("temporal_cnn widths must be positive")
        elif v in ("rnn", "inception_time"):
            if self.layers < 1 or self.hidden < 1:
                raise ConfigurationError(f"{v}: layers and hidden must be >= 1")
            if v == "rnn" and self.fc_units < 1:
                raise ConfigurationError("rnn: fc_units must be >= 1")
        elif v == "transformer":
            if self.heads < 1 or self.d_model < 1 or self.d_inner < 1:
                raise ConfigurationError("transformer: heads, d_model and d_inner must be >= 1")
            if self.d_model % self.heads:
                raise ConfigurationError(f"d_model {self.d_model} is not divisible by {self.heads} heads")
        return self

    def to_mapping(self) -> dict:
        """Only the fields this variant uses, in declaration order."""
        used = ("variant",) + VARIANT_FIELDS[self.variant]
        return {k: v for k, v in asdict(self).items() if k in used}

    @classmethod
    def from_mapping(cls, mapping) -> "ModelConfig":
        mapping = dict(mapping)
        if "variant" not in mapping:
            raise ConfigurationError("model config needs a 'variant' key")
        variant = str(mapping.pop("variant")).strip()
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigurationError(f"unknown model key {key!r}")
            try:
                kwargs[key] = int(raw) if key in _INT_FIELDS else float(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"model key {key!r}: cannot parse {raw!r}") from exc
        return cls(variant=variant, **kwargs).validate()

    def label(self) -> str:
        parts = [f"{k}={v}" for k, v in self.to_mapping().items() if k != "variant"]
        return f"{self.variant}(" + ", ".join(parts) + ")"
