"""Saving and restoring trained models as ``.npz`` archives."""
from __future__ import annotations

import json

import numpy as np

from ..errors import FormatError
from .builders import build_model
from .config import ModelConfig


def save_model(model, path, extra: dict | None = None):
    """Write every parameter (running statistics included) plus the build recipe."""
    t, c = model.input_signature
    meta = {"config": model.config.to_mapping(), "T": t, "C": c, "N": model.n_classes, "seed": model.seed,
            "extra": extra or {}}
    arrays = {f"param:{name}": value for name, value in model.state_dict().items()}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load_model(path):
    """Rebuild the architecture from the stored recipe and load its weights.

    Returns ``(model, extra)`` where ``extra`` is whatever was passed to :func:`save_model`.
    """
    try:
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(str(archive["meta"]))
            state = {k[len("param:"):]: archive[k] for k in archive.files if k.startswith("param:")}
    except (OSError, KeyError, ValueError) as exc:
        raise FormatError(f"{path}: not a saved model ({exc})") from exc
    cfg = ModelConfig.from_mapping(meta["config"])
    model = build_model(cfg, meta["T"], meta["C"], meta["N"], meta["seed"])
    expected = {name for name, _ in model.named_parameters()}
    if expected != set(state):
        raise FormatError(f"{path}: parameter set does not match a {cfg.variant} model")
    model.load_state_dict(state)
    model.eval()
    return model, meta.get("extra", {})
