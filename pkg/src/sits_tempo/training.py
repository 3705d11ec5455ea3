"""Optimizers, schedules and the epoch loop."""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, TrainingError
from .numerics import Tape, backward, ops
from .numerics.layers import BatchNorm
from .numerics.ops import cross_entropy_loss, mse_loss  # re-exported

LOSSES = {"cross_entropy": cross_entropy_loss, "mse": mse_loss}
HEAD_LOSS = {"softmax": "cross_entropy", "sigmoid": "mse"}


# -------------------------------------------------------------- optimizers

def adam_step(params, state: dict, lr, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8, t=1):
    """One bias-corrected Adam update; ``weight_decay`` is added to the gradient as L2.

    ``state`` maps ``id(param)`` to its ``(m, v)`` moments and is updated in place.
    """
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if weight_decay:
            g = g + weight_decay * p.data
        m, v = state.get(id(p), (None, None))
        if m is None:
            m, v = np.zeros_like(p.data), np.zeros_like(p.data)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state[id(p)] = (m, v)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def sgd_step(params, lr, weight_decay=0.0, momentum=0.0, state: dict | None = None):
    """``p <- p - lr * (g + weight_decay * p)``, with optional heavy-ball momentum."""
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        step = g + weight_decay * p.data if weight_decay else g
        if momentum:
            if state is None:
                raise ConfigurationError("momentum needs a state dict")
            buf = state.get(id(p))
            buf = step if buf is None else momentum * buf + step
            state[id(p)] = buf
            step = buf
        p.data -= lr * step


class Adam:
    def __init__(self, params, lr=1e-3, weight_decay=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.weight_decay = lr, weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = {}
        self.t = 0

    def step(self):
        self.t += 1
        adam_step(self.params, self.state, self.lr, self.weight_decay, self.beta1, self.beta2, self.eps, self.t)


class SGD:
    def __init__(self, params, lr=0.01, weight_decay=0.0, momentum=0.0):
        self.params = list(params)
        self.lr, self.weight_decay, self.momentum = lr, weight_decay, momentum
        self.state = {}

    def step(self):
        sgd_step(self.params, self.lr, self.weight_decay, self.momentum, self.state)


# ------------------------------------------------------------ configuration

@dataclass(frozen=True)
class EarlyStopping:
    patience: int = 10
    restore_best: bool = True
    monitor: str = "val_loss"


@dataclass(frozen=True)
class PlateauSchedule:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without train-loss improvement."""

    factor: float = 0.5
    patience: int = 50
    min_lr: float = 1e-4
    monitor: str = "train_loss"


@dataclass(frozen=True)
class TrainingConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    batch_size: int = 128
    max_epochs: int = 500
    early_stopping: EarlyStopping | None = field(default_factory=EarlyStopping)
    lr_plateau: PlateauSchedule | None = None
    loss: str | None = None  # None: pick from the model head
    seed: int = 0
    momentum: float = 0.0

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"optimizer must be adam or sgd, got {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigurationError("batch_size and max_epochs must be >= 1")
        if self.loss is not None and self.loss not in LOSSES:
            raise ConfigurationError(f"unknown loss {self.loss!r}")
        if self.early_stopping is not None and self.early_stopping.patience < 1:
            raise ConfigurationError("early stopping patience must be >= 1")
        if self.lr_plateau is not None:
            p = self.lr_plateau
            if not 0 < p.factor < 1 or p.patience < 1 or p.min_lr <= 0:
                raise ConfigurationError("plateau schedule needs 0 < factor < 1, patience >= 1, min_lr > 0")

    def with_(self, **changes) -> "TrainingConfig":
        return replace(self, **changes)

    def to_mapping(self) -> dict:
        """Flat string-friendly mapping (the [training] section of a preset)."""
        out = {k: v for k, v in asdict(self).items() if k not in ("early_stopping", "lr_plateau")}
        if out["loss"] is None:
            del out["loss"]
        es, pl = self.early_stopping, self.lr_plateau
        out["early_stopping"] = "on" if es else "off"
        if es:
            out.update(patience=es.patience, restore_best=es.restore_best)
        out["lr_plateau"] = "on" if pl else "off"
        if pl:
            out.update(plateau_factor=pl.factor, plateau_patience=pl.patience, plateau_min_lr=pl.min_lr)
        return out

    @classmethod
    def from_mapping(cls, mapping) -> "TrainingConfig":
        m = {k: str(v).strip() for k, v in dict(mapping).items()}

        def flag(key, default):
            if key not in m:
                return default
            value = m.pop(key).lower()
            if value in ("on", "true", "yes", "1"):
                return True
            if value in ("off", "false", "no", "0"):
                return False
            raise ConfigurationError(f"training key {key!r}: expected on/off, got {value!r}")

        try:
            es_on = flag("early_stopping", True)
            restore = flag("restore_best", True)
            patience = int(m.pop("patience", 10))
            pl_on = flag("lr_plateau", False)
            plateau = PlateauSchedule(float(m.pop("plateau_factor", 0.5)), int(m.pop("plateau_patience", 50)),
                                      float(m.pop("plateau_min_lr", 1e-4)))
            kwargs = {}
            casts = {"optimizer": str, "learning_rate": float, "weight_decay": float, "batch_size": int,
                     "max_epochs": int, "loss": str, "seed": int, "momentum": float}
            for key, value in m.items():
                if key not in casts:
                    raise ConfigurationError(f"unknown training key {key!r}")
                kwargs[key] = casts[key](value)
        except ValueError as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"training config: {exc}") from exc
        return cls(early_stopping=EarlyStopping(patience, restore) if es_on else None,
                   lr_plateau=plateau if pl_on else None, **kwargs)


def default_training_config(variant: str) -> TrainingConfig:
    """Per-architecture optimizer recipe."""
    base = TrainingConfig()
    recipes = {
        "temporal_cnn": dict(learning_rate=1e-3, weight_decay=1e-6),
        "time_cnn": dict(learning_rate=1e-3, weight_decay=0.0, loss="mse"),
        "mcdcnn": dict(optimizer="sgd", learning_rate=0.01, weight_decay=5e-4),
        "rnn": dict(learning_rate=1e-3, weight_decay=0.0),
        "inception_time": dict(learning_rate=0.01, weight_decay=2e-6, lr_plateau=PlateauSchedule()),
        "transformer": dict(learning_rate=1.31e-3, weight_decay=5.52e-8),
    }
    if variant not in recipes:
        raise ConfigurationError(f"unknown variant {variant!r}")
    return base.with_(**recipes[variant])


def timing_protocol(cfg: TrainingConfig, epochs: int = 20, batch_size: int = 128) -> TrainingConfig:
    """Fixed-length run for cost comparisons: no early stopping, no schedule."""
    return cfg.with_(batch_size=batch_size, max_epochs=epochs, early_stopping=None, lr_plateau=None)


# --------------------------------------------------------------------- logs

LOG_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr", "seconds")


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    best_epoch: int | None = None
    stopped_reason: str = ""
    total_time: float = 0.0

    def column(self, name) -> np.ndarray:
        return np.array([row[name] for row in self.epochs], dtype=np.float64)

    @property
    def n_epochs(self) -> int:
        return len(self.epochs)

    def seconds_per_epoch(self) -> float:
        return float(np.mean(self.column("seconds"))) if self.epochs else float("nan")

    def fingerprint(self) -> tuple:
        """Everything except wall-clock time, for determinism checks."""
        def cell(v):  # NaN != NaN would make identical logs compare unequal
            return None if isinstance(v, float) and math.isnan(v) else v

        rows = tuple(tuple(cell(row[c]) for c in LOG_COLUMNS if c != "seconds") for row in self.epochs)
        return rows, self.best_epoch, self.stopped_reason

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for row in self.epochs:
            writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in LOG_COLUMNS[1:]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> "TrainLog":
        rows = list(csv.DictReader(io.StringIO(text)))
        log = cls([{c: (int(r[c]) if c == "epoch" else float(r[c])) for c in LOG_COLUMNS} for r in rows])
        finite = [(row["val_loss"], row["epoch"]) for row in log.epochs if math.isfinite(row["val_loss"])]
        log.best_epoch = min(finite)[1] if finite else None
        return log

    def to_text(self) -> str:
        lines = []
        for row in self.epochs:
            lines.append(f"epoch {row['epoch']:4d}  loss {row['train_loss']:.5f}  acc {row['train_acc']:.4f}  "
                         f"val_loss {row['val_loss']:.5f}  val_acc {row['val_acc']:.4f}  "
                         f"lr {row['lr']:.3g}  {row['seconds']:.2f}s")
        lines.append(f"stopped: {self.stopped_reason}; best epoch {self.best_epoch}; total {self.total_time:.2f}s")
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------- the loop

def _has_batchnorm(model) -> bool:
    return any(isinstance(m, BatchNorm) for m in model.modules())


def _resolve_loss(model, cfg: TrainingConfig) -> str:
    expected = HEAD_LOSS[getattr(model, "head", "softmax")]
    if cfg.loss is not None and cfg.loss != expected:
        raise ConfigurationError(f"{cfg.loss} loss does not fit a {model.head} head (use {expected})")
    return expected


def evaluate_loss(model, x, y, loss_name, batch_size=1024):
    """Eval-mode mean loss and accuracy over ``(x, y)``; nothing is recorded."""
    if len(x) == 0:
        return float("nan"), float("nan")
    probs = model.predict_proba(x, batch_size)
    k = probs.shape[1]
    onehot = np.eye(k)[y]
    if loss_name == "cross_entropy":
        loss = float(-np.log(np.clip(probs[np.arange(len(y)), y], ops.CE_CLIP, 1.0)).mean())
    else:
        loss = float(((probs - onehot) ** 2).mean())
    acc = float((np.argmax(probs, axis=1) == y).mean())
    return loss, acc


def train(model, train_ds, val_ds, cfg: TrainingConfig, progress=None) -> TrainLog:
    """Mini-batch training with optional early stopping and plateau schedule.

    ``progress``, if given, is called with each finished epoch row.
    """
    loss_name = _resolve_loss(model, cfg)
    loss_fn = LOSSES[loss_name]
    has_bn = _has_batchnorm(model)
    if has_bn and cfg.batch_size < 2:
        raise ConfigurationError("batch_size must be >= 2 when batch norm layers are trained")
    x_train, y_train = np.asarray(train_ds.samples), np.asarray(train_ds.labels)
    if len(x_train) == 0:
        raise ConfigurationError("empty training set")
    has_val = val_ds is not None and len(val_ds) > 0
    if cfg.early_stopping is not None and not has_val:
        raise ConfigurationError("early stopping needs a non-empty validation set")
    k = model.n_classes
    eye = np.eye(k)

    params = model.parameters()
    if cfg.optimizer == "adam":
        opt = Adam(params, cfg.learning_rate, cfg.weight_decay)
    else:
        opt = SGD(params, cfg.learning_rate, cfg.weight_decay, cfg.momentum)
    shuffle_rng = np.random.default_rng([cfg.seed, 2])
    model.reseed(cfg.seed)

    log = TrainLog()
    best_val, best_state = math.inf, None
    since_best = 0
    plateau_best, plateau_wait = math.inf, 0
    n = len(x_train)
    start = time.perf_counter()
    tape = Tape()
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        model.train()
        order = shuffle_rng.permutation(n)
        total_loss, correct, seen = 0.0, 0, 0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            if has_bn and len(idx) == 1:
                continue  # a lone sample has no batch statistics
            xb, yb = x_train[idx], y_train[idx]
            model.zero_gradients()
            tape.reset()
            with tape:
                probs = model(xb)
                loss = loss_fn(probs, eye[yb])
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}, batch {b + 1}")
            backward(loss, tape)
            opt.step()
            total_loss += value * len(idx)
            correct += int((np.argmax(probs.data, axis=1) == yb).sum())
            seen += len(idx)
        train_loss = total_loss / max(seen, 1)
        train_acc = correct / max(seen, 1)
        if has_val:
            val_loss, val_acc = evaluate_loss(model, val_ds.samples, val_ds.labels, loss_name)
        else:
            val_loss, val_acc = float("nan"), float("nan")
        row = {"epoch": epoch, "train_loss": train_loss, "train_acc": train_acc, "val_loss": val_loss,
               "val_acc": val_acc, "lr": opt.lr, "seconds": time.perf_counter() - t0}
        log.epochs.append(row)
        if progress is not None:
            progress(row)

        if has_val and val_loss < best_val:
            best_val, since_best = val_loss, 0
            log.best_epoch = epoch
            if cfg.early_stopping is not None and cfg.early_stopping.restore_best:
                best_state = model.state_dict()
        elif has_val:
            since_best += 1

        plateau = cfg.lr_plateau
        if plateau is not None:
            if train_loss < plateau_best:
                plateau_best, plateau_wait = train_loss, 0
            else:
                plateau_wait += 1
                if plateau_wait >= plateau.patience:
                    opt.lr = max(opt.lr * plateau.factor, plateau.min_lr)
                    plateau_wait = 0

        if cfg.early_stopping is not None and since_best >= cfg.early_stopping.patience:
            log.stopped_reason = "early_stopping"
            break
    else:
        log.stopped_reason = "max_epochs"

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    log.total_time = time.perf_counter() - start
    return log
