"""Loading, normalizing, splitting and synthesizing satellite image time series.

Samples are always held as ``[N, T, C]`` float64 arrays with zero-based
integer labels; the original one-based class IDs live in ``class_ids`` for
reporting.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlignmentError,
    ConfigurationError,
    DimensionError,
    FormatError,
    LabelError,
    ParseError,
    StratificationError,
)

TISELAC_T, TISELAC_C = 23, 10
TISELAC_CHANNELS = ("ultra_blue", "blue", "green", "red", "nir", "swir1", "swir2", "ndvi", "ndwi", "bi")
TISELAC_CLASSES = ("Urban Areas", "Other built-up surfaces", "Forests", "Sparse Vegetation",
                   "Rocks and bare soil", "Grassland", "Sugarcane crops", "Other crops", "Water")
SITS_TSI_T, SITS_TSI_K = 46, 24


@dataclass(frozen=True)
class SitsDataset:
    """Immutable bundle of series, labels and class metadata."""

    samples: np.ndarray
    labels: np.ndarray
    class_names: tuple
    provenance: str = ""
    class_ids: tuple = ()

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if samples.ndim != 3:
            raise DimensionError(f"samples must be [N, T, C], got shape {samples.shape}")
        if labels.shape != (samples.shape[0],):
            raise AlignmentError(f"{samples.shape[0]} samples but {labels.shape[0]} labels")
        k = len(self.class_names)
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            bad = int(np.flatnonzero((labels < 0) | (labels >= k))[0])
            raise LabelError(f"label {labels[bad]} at index {bad} outside [0, {k})")
        samples.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "class_ids", tuple(self.class_ids) or tuple(range(1, k + 1)))

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def t(self) -> int:
        return self.samples.shape[1]

    @property
    def c(self) -> int:
        return self.samples.shape[2]

    @property
    def k(self) -> int:
        return len(self.class_names)

    def __len__(self):
        return self.n

    def subset(self, index, provenance=None) -> "SitsDataset":
        index = np.asarray(index)
        return SitsDataset(self.samples[index], self.labels[index], self.class_names,
                           provenance if provenance is not None else self.provenance, self.class_ids)

    def with_samples(self, samples, provenance=None) -> "SitsDataset":
        return SitsDataset(samples, self.labels, self.class_names,
                           provenance if provenance is not None else self.provenance, self.class_ids)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


# ------------------------------------------------------------------ parsing

def detect_separator(line: str):
    """``","`` when the line has a comma, else ``None`` (any run of whitespace)."""
    return "," if "," in line else None


def _content_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if stripped:
                yield lineno, stripped


def read_numeric_table(path, n_fields: int) -> np.ndarray:
    """Rows of exactly ``n_fields`` numbers, comma- or whitespace-separated.

    Row numbers in errors are 1-based file line numbers.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    sep = None
    for _, line in _content_lines(path):
        sep = detect_separator(line)
        break
    try:
        table = np.loadtxt(path, delimiter=sep, dtype=np.float64, ndmin=2)
        if table.shape[1] == n_fields or table.size == 0:
            return table.reshape(-1, n_fields) if table.size == 0 else table
    except ValueError:
        pass
    # slow path: find the first offending row and say exactly what is wrong
    rows = []
    for lineno, line in _content_lines(path):
        fields_ = [f for f in (line.split(sep) if sep else line.split())]
        fields_ = [f.strip() for f in fields_]
        if len(fields_) != n_fields:
            raise FormatError(f"{path}: row {lineno} has {len(fields_)} fields, expected {n_fields}")
        try:
            rows.append([float(f) for f in fields_])
        except ValueError:
            bad = next(i for i, f in enumerate(fields_) if not _is_float(f))
            raise ParseError(f"{path}: row {lineno}, field {bad + 1}: {fields_[bad]!r} is not numeric") from None
    return np.asarray(rows, dtype=np.float64).reshape(-1, n_fields)


def _is_float(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def _class_labels(values, k, path, first_id=1):
    """Validate integer class IDs in ``[first_id, first_id + k)`` and shift them to zero-based."""
    values = np.asarray(values, dtype=np.float64)
    ints = np.round(values)
    bad = np.flatnonzero((ints != values) | (ints < first_id) | (ints >= first_id + k))
    if bad.size:
        raise LabelError(f"{path}: row {bad[0] + 1} has class ID {values[bad[0]]:g}, "
                         f"expected an integer in [{first_id}, {first_id + k - 1}]")
    return ints.astype(np.int64) - first_id


def load_tiselac(features_path, labels_path) -> SitsDataset:
    """230 features per row (timestamp-major, 10 channels each) plus a separate label file."""
    feats = read_numeric_table(features_path, TISELAC_T * TISELAC_C)
    labels = read_numeric_table(labels_path, 1)[:, 0]
    if len(feats) != len(labels):
        raise AlignmentError(f"{features_path} has {len(feats)} rows but {labels_path} has {len(labels)}")
    y = _class_labels(labels, len(TISELAC_CLASSES), labels_path)
    return SitsDataset(feats.reshape(-1, TISELAC_T, TISELAC_C), y, TISELAC_CLASSES,
                       f"tiselac:{os.path.basename(str(features_path))}")


def load_sits_tsi(fold_path) -> SitsDataset:
    """46 single-channel values plus a trailing class ID (1..24) per row."""
    table = read_numeric_table(fold_path, SITS_TSI_T + 1)
    y = _class_labels(table[:, -1], SITS_TSI_K, fold_path)
    names = tuple(f"class {i}" for i in range(1, SITS_TSI_K + 1))
    return SitsDataset(table[:, :-1].reshape(-1, SITS_TSI_T, 1), y, names,
                       f"sits_tsi:{os.path.basename(str(fold_path))}")


def load_delimited(path, t: int, c: int, k: int, class_names=None) -> SitsDataset:
    """Generic layout: ``T*C`` timestamp-major values then a 1-based class ID."""
    table = read_numeric_table(path, t * c + 1)
    y = _class_labels(table[:, -1], k, path)
    names = tuple(class_names) if class_names else tuple(f"class {i}" for i in range(1, k + 1))
    return SitsDataset(table[:, :-1].reshape(-1, t, c), y, names, f"file:{os.path.basename(str(path))}")


def write_delimited(ds: SitsDataset, path, meta: dict | None = None):
    """Write ``ds`` in the generic layout with a JSON sidecar at ``path + '.json'``."""
    flat = ds.samples.reshape(ds.n, -1)
    ids = np.asarray(ds.class_ids)[ds.labels]
    with open(path, "w", encoding="utf-8") as fh:
        for row, cid in zip(flat, ids):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(cid)}\n")
    sidecar = {"K": ds.k, "T": ds.t, "C": ds.c, "class_names": list(ds.class_names),
               "provenance": ds.provenance}
    sidecar.update(meta or {})
    with open(str(path) + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_synthetic(path) -> SitsDataset:
    """Read a file written by :func:`write_delimited`, shapes taken from the sidecar."""
    sidecar = str(path) + ".json"
    if not os.path.exists(sidecar):
        raise FormatError(f"{path}: missing metadata sidecar {sidecar}")
    with open(sidecar, encoding="utf-8") as fh:
        meta = json.load(fh)
    ds = load_delimited(path, int(meta["T"]), int(meta["C"]), int(meta["K"]), meta.get("class_names"))
    return ds.subset(np.arange(ds.n), provenance=meta.get("provenance", ds.provenance))


# ------------------------------------------------------------ normalization

@dataclass(frozen=True)
class NormalizationStats:
    """Per-(timestamp, channel) percentile bounds. Cells with ``low == high`` are degenerate."""

    low: np.ndarray
    high: np.ndarray
    low_p: float = 2.0
    high_p: float = 98.0

    @property
    def degenerate(self) -> np.ndarray:
        return self.low == self.high

    @property
    def shape(self):
        return self.low.shape

    def checksum(self) -> str:
        import hashlib
        return hashlib.sha256(np.ascontiguousarray(self.low).tobytes()
                              + np.ascontiguousarray(self.high).tobytes()).hexdigest()[:16]

    def to_arrays(self) -> dict:
        return {"norm_low": self.low, "norm_high": self.high,
                "norm_percentiles": np.array([self.low_p, self.high_p])}

    @classmethod
    def from_arrays(cls, arrays) -> "NormalizationStats":
        p = np.asarray(arrays["norm_percentiles"])
        return cls(np.asarray(arrays["norm_low"]), np.asarray(arrays["norm_high"]), float(p[0]), float(p[1]))


def fit_normalizer(train: SitsDataset, low_p: float = 2.0, high_p: float = 98.0) -> NormalizationStats:
    """Linear-interpolation percentiles (rank ``(n-1)p/100``) over the training samples only."""
    if train.n < 2:
        raise ConfigurationError(f"need at least 2 training samples to fit a normalizer, got {train.n}")
    if not 0 <= low_p < high_p <= 100:
        raise ConfigurationError(f"percentiles must satisfy 0 <= low < high <= 100, got {low_p}, {high_p}")
    low, high = np.percentile(train.samples, [low_p, high_p], axis=0, method="linear")
    return NormalizationStats(low, high, float(low_p), float(high_p))


def normalize_array(x: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1:] != stats.shape:
        raise DimensionError(f"data cells {x.shape[1:]} do not match normalizer cells {stats.shape}")
    degenerate = stats.degenerate
    span = np.where(degenerate, 1.0, stats.high - stats.low)
    out = np.clip((x - stats.low) / span, 0.0, 1.0)
    return np.where(degenerate, 0.5, out)


def apply_normalizer(ds: SitsDataset, stats: NormalizationStats) -> SitsDataset:
    """``clamp((x - low) / (high - low), 0, 1)`` per cell; degenerate cells become 0.5."""
    return ds.with_samples(normalize_array(ds.samples, stats))


# ----------------------------------------------------------------- splitting

@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    val_fraction: float = 0.2
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if self.train_fraction <= 0 or self.val_fraction < 0:
            raise ConfigurationError("split fractions must be positive")
        if self.train_fraction + self.val_fraction > 1 + 1e-12:
            raise ConfigurationError(f"split fractions sum to {self.train_fraction + self.val_fraction} > 1")

    @property
    def fractions(self) -> tuple:
        test = max(0.0, 1.0 - self.train_fraction - self.val_fraction)
        return (self.train_fraction, self.val_fraction, test)


def largest_remainder(total: int, weights) -> np.ndarray:
    """Integer counts summing to ``total``, proportional to ``weights`` (Hamilton's method)."""
    w = np.asarray(weights, dtype=np.float64)
    if total == 0 or w.sum() == 0:
        return np.zeros(len(w), dtype=np.int64)
    exact = total * w / w.sum()
    counts = np.floor(exact + 1e-9).astype(np.int64)
    short = total - counts.sum()
    if short > 0:
        order = np.argsort(-(exact - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _stratified_counts(class_sizes, fractions, totals):
    """Per-class partition counts; each within one sample of its exact share, columns summing to ``totals``.

    Every cell starts at the floor of its exact share and some cells with a
    fractional part are raised by one. Raises go greedily to the largest
    fractional parts, then augmenting paths (a bipartite matching between
    classes and partitions) place whatever the greedy pass could not.
    """
    exact = np.outer(class_sizes, fractions)
    counts = np.floor(exact + 1e-9).astype(np.int64)
    row_left = np.asarray(class_sizes - counts.sum(axis=1), dtype=np.int64)
    col_left = np.asarray(totals - counts.sum(axis=0), dtype=np.int64)
    frac = exact - counts
    open_cell = frac > 1e-12
    raised = np.zeros_like(open_cell)
    for flat in np.argsort(-frac, axis=None, kind="stable"):
        i, j = np.unravel_index(flat, frac.shape)
        if open_cell[i, j] and row_left[i] > 0 and col_left[j] > 0:
            raised[i, j] = True
            row_left[i] -= 1
            col_left[j] -= 1

    def augment(row):
        # breadth-first search: rows reach columns through unraised open cells, columns reach
        # rows through raised cells (which the path then lowers)
        parent_col, parent_row = {}, {row: None}
        frontier = [row]
        while frontier:
            nxt = []
            for i in frontier:
                for j in np.flatnonzero(open_cell[i] & ~raised[i]):
                    if j in parent_col:
                        continue
                    parent_col[j] = i
                    if col_left[j] > 0:
                        while True:  # flip the path back to the start
                            i2 = parent_col[j]
                            raised[i2, j] = True
                            j2 = parent_row[i2]
                            if j2 is None:
                                break
                            raised[i2, j2] = False
                            j = j2
                        return True
                    for i3 in np.flatnonzero(raised[:, j]):
                        if i3 not in parent_row:
                            parent_row[i3] = j
                            nxt.append(i3)
            frontier = nxt
        return False

    for i in range(len(row_left)):
        while row_left[i] > 0:
            if not augment(i):
                raise StratificationError("could not balance stratified partition sizes")
            row_left[i] -= 1
            col_left[:] = totals - (counts + raised).sum(axis=0)
    return counts + raised


def split_indices(labels, spec: SplitSpec, k: int | None = None, class_names=None):
    """Disjoint, exhaustive index arrays ``(train, val, test)``; deterministic under ``spec.seed``."""
    labels = np.asarray(labels)
    n = len(labels)
    fractions = np.array(spec.fractions)
    totals = largest_remainder(n, fractions)
    rng = np.random.default_rng(spec.seed)
    if not spec.stratified:
        perm = rng.permutation(n)
        cuts = np.cumsum(totals)[:-1]
        return tuple(np.split(perm, cuts))
    k = int(labels.max()) + 1 if k is None else k
    sizes = np.bincount(labels, minlength=k)
    active = int((fractions > 0).sum())
    for cls in range(k):
        if 0 < sizes[cls] < active:
            name = class_names[cls] if class_names else cls
            raise StratificationError(f"class {name!r} has {sizes[cls]} samples, fewer than the {active} partitions")
    counts = _stratified_counts(sizes, fractions, totals)
    parts = [[], [], []]
    for cls in range(k):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        start = 0
        for j in range(3):
            parts[j].append(idx[start:start + counts[cls, j]])
            start += counts[cls, j]
    out = []
    for j in range(3):
        merged = np.concatenate(parts[j]) if parts[j] else np.zeros(0, dtype=np.int64)
        out.append(rng.permutation(merged))
    return tuple(out)


def split(ds: SitsDataset, spec: SplitSpec):
    """Split into ``(train, val, test)`` datasets (test may be empty)."""
    idx = split_indices(ds.labels, spec, ds.k, ds.class_names)
    tags = ("train", "val", "test")
    return tuple(ds.subset(i, f"{ds.provenance}/{tag}") for i, tag in zip(idx, tags))


def one_hot(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    bad = np.flatnonzero((labels < 0) | (labels >= k))
    if bad.size:
        raise LabelError(f"label {labels[bad[0]]} at index {bad[0]} outside [0, {k})")
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


# ---------------------------------------------------------------- synthetic

@dataclass(frozen=True)
class SynthSpec:
    """Seasonal sinusoid per (class, channel) plus Gaussian noise.

    ``amplitude``, ``phase`` and ``baseline`` are ``[K, C]``; any left as
    ``None`` is drawn from the seed (phases spread as ``2*pi*k/K`` plus a
    small per-channel jitter).
    """

    k: int = 5
    t: int = 23
    c: int = 10
    n: int = 2000
    sigma: float = 0.1
    seed: int = 0
    proportions: tuple | None = None
    amplitude: np.ndarray | None = field(default=None, compare=False)
    phase: np.ndarray | None = field(default=None, compare=False)
    baseline: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.k < 1 or self.t < 1 or self.c < 1 or self.n < 0:
            raise ConfigurationError("K, T, C must be positive and N non-negative")
        if self.sigma < 0:
            raise ConfigurationError(f"sigma must be >= 0, got {self.sigma}")
        if self.proportions is not None:
            p = np.asarray(self.proportions, dtype=np.float64)
            if p.shape != (self.k,) or (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
                raise ConfigurationError("proportions must be K non-negative values summing to 1")

    def profiles(self):
        """Resolved ``(amplitude, phase, baseline)``, each ``[K, C]``."""
        rng = np.random.default_rng([self.seed, 7])
        shape = (self.k, self.c)
        amp = rng.uniform(0.5, 1.0, size=shape)
        jitter = rng.uniform(-0.1, 0.1, size=shape)
        base = rng.uniform(0.0, 1.0, size=shape)
        phase = 2 * np.pi * np.arange(self.k)[:, None] / self.k + jitter
        pick = lambda given, default: default if given is None else np.broadcast_to(np.asarray(given, float), shape)
        return pick(self.amplitude, amp), pick(self.phase, phase), pick(self.baseline, base)

    def describe(self) -> dict:
        return {"K": self.k, "T": self.t, "C": self.c, "N": self.n, "sigma": self.sigma, "seed": self.seed,
                "proportions": list(self.proportions) if self.proportions is not None else None}


def synth_generate(spec: SynthSpec) -> SitsDataset:
    amp, phase, base = spec.profiles()
    props = np.full(spec.k, 1.0 / spec.k) if spec.proportions is None else np.asarray(spec.proportions)
    counts = largest_remainder(spec.n, props)
    rng = np.random.default_rng([spec.seed, 8])
    labels = rng.permutation(np.repeat(np.arange(spec.k), counts))
    tt = np.arange(spec.t)[None, :, None]
    clean = base[labels][:, None, :] + amp[labels][:, None, :] * np.sin(2 * np.pi * tt / spec.t
                                                                         + phase[labels][:, None, :])
    noise = rng.normal(0.0, spec.sigma, size=clean.shape) if spec.sigma > 0 else 0.0
    names = tuple(f"class {i}" for i in range(1, spec.k + 1))
    return SitsDataset(clean + noise, labels, names, f"synthetic:seed={spec.seed}")
