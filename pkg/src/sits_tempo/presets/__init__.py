"""Committed model and training presets, one INI file per ``<variant>/<dataset>``.

File schema (shared with experiment specs)::

    [meta]      dataset, reference_oa, reference_f1, note (all optional)
    [model]     variant plus the variant's hyperparameters
    [training]  optimizer, learning_rate, weight_decay, batch_size, max_epochs,
                early_stopping (on/off), patience, restore_best,
                lr_plateau (on/off), plateau_factor, plateau_patience, plateau_min_lr
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from importlib import resources

from ..errors import ConfigurationError
from ..models.config import ModelConfig
from ..training import TrainingConfig

# a preset shared by both datasets answers to either name
ALIASES = {
    "transformer/tiselac": "transformer/both",
    "transformer/sits_tsi": "transformer/both",
}


@dataclass(frozen=True)
class Preset:
    name: str
    model: ModelConfig
    training: TrainingConfig
    dataset: str
    meta: dict = field(default_factory=dict, compare=False)

    def reference(self, dataset: str | None = None):
        """``(oa, f1)`` reported for this preset on ``dataset``, or ``(None, None)``."""
        dataset = dataset or self.dataset
        suffixes = (f"_{dataset}", "") if dataset == self.dataset else (f"_{dataset}",)
        for suffix in suffixes:
            oa = self.meta.get(f"reference_oa{suffix}")
            if oa is not None:
                return float(oa), float(self.meta.get(f"reference_f1{suffix}", "nan"))
        return None, None


def parse_config_text(text: str, source: str = "<text>"):
    """Parse the INI schema into ``(ModelConfig, TrainingConfig, meta)``."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc
    if not parser.has_section("model"):
        raise ConfigurationError(f"{source}: missing [model] section")
    model = ModelConfig.from_mapping(parser["model"])
    training = TrainingConfig.from_mapping(parser["training"]) if parser.has_section("training") else TrainingConfig()
    meta = dict(parser["meta"]) if parser.has_section("meta") else {}
    return model, training, meta


def load_config_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), str(path))


def render_config(model: ModelConfig, training: TrainingConfig | None = None, meta: dict | None = None) -> str:
    """Inverse of :func:`parse_config_text`."""
    parser = configparser.ConfigParser(interpolation=None)
    if meta:
        parser["meta"] = {k: str(v) for k, v in meta.items()}
    parser["model"] = {k: str(v) for k, v in model.to_mapping().items()}
    if training is not None:
        parser["training"] = {k: ("on" if v is True else "off" if v is False else str(v))
                              for k, v in training.to_mapping().items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def _root():
    return resources.files(__name__)


def catalog() -> list:
    """Every committed preset name (aliases excluded), sorted."""
    names = []
    for variant_dir in _root().iterdir():
        if variant_dir.is_dir() and not variant_dir.name.startswith("_"):
            for f in variant_dir.iterdir():
                if f.name.endswith(".cfg"):
                    names.append(f"{variant_dir.name}/{f.name[:-4]}")
    return sorted(names)


def lookup(name: str) -> Preset:
    """Load ``<variant>/<dataset>`` (aliases allowed)."""
    resolved = ALIASES.get(name, name)
    if resolved not in catalog():
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(catalog() + sorted(ALIASES))}")
    variant, stem = resolved.split("/")
    text = _root().joinpath(variant, stem + ".cfg").read_text(encoding="utf-8")
    model, training, meta = parse_config_text(text, resolved)
    dataset = name.split("/")[1] if name in ALIASES else meta.get("dataset", stem)
    return Preset(resolved, model, training, dataset, meta)
