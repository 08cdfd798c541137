"""Time-frequency feature extraction, MFCC comparison features, information
gain ranking, and labeled dataset assembly.

The canonical vector has 59 entries: 19 statistics per axis (time-domain
moments, quartiles, mean crossing rate, absolute area, plus spectral energy,
power-spectral entropy and dominant-frequency ratio) and two cross-axis
aggregates.  Order and names are frozen; serialization must round-trip them
exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .segment import (
    IsolationConfig,
    SpeechSegment,
    detect_speech_region,
    highpass_motion_filter,
    isolate_words,
)
from .trace import SensorTrace, load_trace, trim_protocol_edges

AXES = ("x", "y", "z")

_AXIS_STATS = (
    "min", "max", "median", "variance", "std", "range", "abs_mean", "cv",
    "skewness", "kurtosis", "q1", "q2", "q3", "iqr", "mcr", "abs_area",
    "energy", "entropy", "freq_ratio",
)

#: Canonical identifiers and order of the full time-frequency feature set.
FEATURE_NAMES: tuple[str, ...] = tuple(
    f"{axis}_{stat}" for axis in AXES for stat in _AXIS_STATS
) + ("total_abs_area", "total_strength")

assert len(FEATURE_NAMES) == 59

# |mean| below this counts as zero when forming the coefficient of variation.
_CV_MEAN_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class FeatureVector:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).copy()
        if vals.ndim != 1 or len(vals) != len(self.names):
            raise ValueError(
                f"values shape {vals.shape} does not match {len(self.names)} names"
            )
        if not np.all(np.isfinite(vals)):
            bad = [self.names[i] for i in np.flatnonzero(~np.isfinite(vals))]
            raise ValueError(f"non-finite feature values: {', '.join(bad)}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", tuple(self.names))

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.values, other.values)


def _spectral_magnitudes(s: np.ndarray) -> np.ndarray:
    """|F_k| for k = 1..floor(m/2): positive-frequency bins, DC excluded."""
    return np.abs(np.fft.rfft(s))[1:]


def _axis_stats(s: np.ndarray, dt: float) -> list[float]:
    m = len(s)
    mean = float(np.mean(s))
    mn = float(np.min(s))
    mx = float(np.max(s))
    median = float(np.median(s))
    variance = float(np.var(s, ddof=1))
    std = math.sqrt(variance)
    rng = mx - mn
    abs_mean = float(np.mean(np.abs(s)))
    cv = 100.0 * std / abs(mean) if abs(mean) >= _CV_MEAN_EPS else 0.0

    centered = s - mean
    m2 = float(np.mean(centered**2))
    # zero-variance guard scaled with the signal so a*s keeps the same branch
    tiny = (1e-12 * max(abs(mn), abs(mx), 1e-300)) ** 2
    if m2 <= tiny:
        skewness = 0.0
        kurtosis = 0.0
    else:
        skewness = float(np.mean(centered**3)) / m2**1.5
        kurtosis = float(np.mean(centered**4)) / m2**2

    q1, q2, q3 = (float(q) for q in np.quantile(s, (0.25, 0.5, 0.75)))
    iqr = q3 - q1
    mcr = float(np.count_nonzero(centered[:-1] * centered[1:] < 0)) / (m - 1)
    abs_area = float(np.sum(np.abs(s))) * dt

    mags = _spectral_magnitudes(s)
    energy = float(np.sum(mags))
    power = mags * mags
    total_power = float(np.sum(power))
    # all-zero spectrum guard, again relative to the signal scale
    power_floor = (1e-13 * m * max(abs(mn), abs(mx), 1e-300)) ** 2
    if total_power <= power_floor:
        entropy = 0.0
        freq_ratio = 0.0
    else:
        p = power / total_power
        p = p[p > 0]
        entropy = float(-np.sum(p * np.log(p)))
        freq_ratio = float(np.max(mags)) / energy

    return [
        mn, mx, median, variance, std, rng, abs_mean, cv, skewness, kurtosis,
        q1, q2, q3, iqr, mcr, abs_area, energy, entropy, freq_ratio,
    ]


def extract_tf_features(trace: SensorTrace, seg: SpeechSegment) -> FeatureVector:
    """Compute the canonical 59-entry time-frequency vector for a segment."""
    if seg.end_idx > trace.n:
        raise ValueError(f"segment [{seg.start_idx}, {seg.end_idx}) exceeds trace length {trace.n}")
    if seg.n < 4:
        raise ValueError(f"segment of {seg.n} samples too short (need >= 4 for moments)")
    dt = 1.0 / trace.sample_rate_hz
    sl = slice(seg.start_idx, seg.end_idx)
    values: list[float] = []
    abs_areas = []
    for axis in AXES:
        stats = _axis_stats(trace.channel(axis)[sl], dt)
        abs_areas.append(stats[_AXIS_STATS.index("abs_area")])
        values.extend(stats)
    values.append(sum(abs_areas))
    magnitude = np.sqrt(trace.x[sl] ** 2 + trace.y[sl] ** 2 + trace.z[sl] ** 2)
    values.append(float(np.mean(magnitude)))
    return FeatureVector(names=FEATURE_NAMES, values=np.asarray(values))


# ---------------------------------------------------------------------------
# MFCC comparison features


@dataclass(frozen=True)
class MfccConfig:
    frame_samples: int = 64
    hop_samples: int = 32
    n_filters: int = 20
    n_coeffs: int = 13
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.frame_samples < 4 or self.hop_samples < 1:
            raise ValueError("frame_samples must be >= 4 and hop_samples >= 1")
        if not (1 <= self.n_coeffs <= self.n_filters):
            raise ValueError("need 1 <= n_coeffs <= n_filters")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")


def mfcc_feature_names(cfg: MfccConfig = MfccConfig()) -> tuple[str, ...]:
    return tuple(f"mfcc_mean_{i:02d}" for i in range(cfg.n_coeffs)) + tuple(
        f"mfcc_std_{i:02d}" for i in range(cfg.n_coeffs)
    )


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, n_fft: int, rate_hz: float) -> np.ndarray:
    """Triangular mel filters spanning 0..rate/2, one row per filter."""
    edges_hz = _mel_to_hz(np.linspace(0.0, _hz_to_mel(rate_hz / 2.0), n_filters + 2))
    bin_freqs = np.arange(n_fft // 2 + 1) * rate_hz / n_fft
    bank = np.zeros((n_filters, len(bin_freqs)))
    for i in range(n_filters):
        lo, mid, hi = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bin_freqs - lo) / (mid - lo)
        falling = (hi - bin_freqs) / (hi - mid)
        bank[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def _dct_ii(x: np.ndarray, n_keep: int) -> np.ndarray:
    n = x.shape[-1]
    j = np.arange(n)
    basis = np.cos(np.pi * np.arange(n_keep)[:, None] * (2 * j + 1) / (2 * n))
    return x @ basis.T


def extract_mfcc_features(
    trace: SensorTrace, seg: SpeechSegment, cfg: MfccConfig = MfccConfig()
) -> FeatureVector:
    """Cepstral features at the sensor rate: per-frame MFCCs aggregated to a
    per-coefficient mean and standard deviation over the segment."""
    if seg.end_idx > trace.n:
        raise ValueError(f"segment [{seg.start_idx}, {seg.end_idx}) exceeds trace length {trace.n}")
    s = trace.z[seg.start_idx : seg.end_idx]
    if len(s) < cfg.frame_samples:
        raise ValueError(
            f"segment of {len(s)} samples shorter than one {cfg.frame_samples}-sample frame"
        )
    n_frames = (len(s) - cfg.frame_samples) // cfg.hop_samples + 1
    idx = np.arange(cfg.frame_samples)[None, :] + cfg.hop_samples * np.arange(n_frames)[:, None]
    frames = s[idx] * np.hamming(cfg.frame_samples)
    mags = np.abs(np.fft.rfft(frames, axis=1))
    bank = mel_filterbank(cfg.n_filters, cfg.frame_samples, trace.sample_rate_hz)
    logmel = np.log(np.maximum(mags @ bank.T, cfg.log_floor))
    coeffs = _dct_ii(logmel, cfg.n_coeffs)
    values = np.concatenate([np.mean(coeffs, axis=0), np.std(coeffs, axis=0)])
    return FeatureVector(names=mfcc_feature_names(cfg), values=values)


# ---------------------------------------------------------------------------
# Labeled datasets


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    feature_names: tuple[str, ...]
    matrix: np.ndarray
    labels: tuple[str, ...]
    label_vocab: tuple[str, ...]
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.float64).copy()
        if mat.ndim != 2:
            raise ValueError("matrix must be two-dimensional")
        if mat.shape[0] < 1:
            raise ValueError("dataset must contain at least one row")
        if mat.shape[1] != len(self.feature_names):
            raise ValueError(
                f"matrix has {mat.shape[1]} columns, expected {len(self.feature_names)}"
            )
        if not np.all(np.isfinite(mat)):
            raise ValueError("dataset matrix contains non-finite values")
        if len(self.labels) != mat.shape[0]:
            raise ValueError("labels length does not match row count")
        vocab = tuple(self.label_vocab)
        if len(set(vocab)) != len(vocab):
            raise ValueError("label_vocab contains duplicates")
        missing = set(self.labels) - set(vocab)
        if missing:
            raise ValueError(f"labels not in vocab: {sorted(missing)}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "label_vocab", vocab)
        object.__setattr__(self, "meta", dict(self.meta))

    @classmethod
    def from_rows(cls, rows, labels, meta: dict[str, str] | None = None) -> "LabeledDataset":
        rows = list(rows)
        if not rows:
            raise ValueError("empty dataset")
        names = rows[0].names
        for r in rows:
            if r.names != names:
                raise ValueError("rows disagree on feature names")
        return cls(
            feature_names=names,
            matrix=np.vstack([r.values for r in rows]),
            labels=tuple(labels),
            label_vocab=tuple(sorted(set(labels))),
            meta=meta or {},
        )

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    def row(self, i: int) -> FeatureVector:
        return FeatureVector(names=self.feature_names, values=self.matrix[i])

    def class_counts(self) -> dict[str, int]:
        return {label: self.labels.count(label) for label in self.label_vocab}

    def subset(self, indices) -> "LabeledDataset":
        """Row subset; keeps the full label vocabulary."""
        idx = np.asarray(indices)
        return LabeledDataset(
            feature_names=self.feature_names,
            matrix=self.matrix[idx],
            labels=tuple(self.labels[i] for i in idx),
            label_vocab=self.label_vocab,
            meta=dict(self.meta),
        )

    def label_indices(self) -> np.ndarray:
        lut = {label: i for i, label in enumerate(self.label_vocab)}
        return np.asarray([lut[l] for l in self.labels], dtype=np.intp)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.feature_names == other.feature_names
            and np.array_equal(self.matrix, other.matrix)
            and self.labels == other.labels
            and self.label_vocab == other.label_vocab
            and self.meta == other.meta
        )


def save_dataset(ds: LabeledDataset, path) -> None:
    path = Path(path)
    lines = [f"# {k}={ds.meta[k]}" for k in sorted(ds.meta)]
    lines.append("label," + ",".join(ds.feature_names))
    for i in range(ds.n_rows):
        lines.append(ds.labels[i] + "," + ",".join(repr(float(v)) for v in ds.matrix[i]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_dataset(path) -> LabeledDataset:
    path = Path(path)
    meta: dict[str, str] = {}
    names: tuple[str, ...] | None = None
    labels: list[str] = []
    rows: list[list[float]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    k, v = body.split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            parts = line.split(",")
            if names is None:
                if parts[0] != "label":
                    raise ValueError(f"{path}:{lineno}: expected 'label,...' header")
                names = tuple(parts[1:])
                continue
            if len(parts) != len(names) + 1:
                raise ValueError(
                    f"{path}:{lineno}: expected {len(names) + 1} columns, got {len(parts)}"
                )
            labels.append(parts[0])
            rows.append([float(p) for p in parts[1:]])
    if names is None or not rows:
        raise ValueError(f"{path}: empty dataset file")
    return LabeledDataset(
        feature_names=names,
        matrix=np.asarray(rows),
        labels=tuple(labels),
        label_vocab=tuple(sorted(set(labels))),
        meta=meta,
    )


# ---------------------------------------------------------------------------
# Information gain ranking


def _entropy_nats(counts: np.ndarray) -> float:
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-np.sum(p * np.log(p)))


def rank_features_info_gain(ds: LabeledDataset, bins: int = 10) -> list[tuple[str, float]]:
    """Rank features by information gain about the label.

    Each feature is discretized into at most ``bins`` equal-frequency bins;
    the gain is H(labels) - H(labels | bin) in nats.  Sorted descending,
    ties broken by canonical feature order.  A single-label dataset yields
    all-zero gains.
    """
    if bins < 2:
        raise ValueError("bins must be >= 2")
    y = ds.label_indices()
    n_classes = len(ds.label_vocab)
    h_labels = _entropy_nats(np.bincount(y, minlength=n_classes).astype(float))

    gains = []
    for col in range(ds.n_features):
        v = ds.matrix[:, col]
        cuts = np.unique(np.quantile(v, np.arange(1, bins) / bins))
        bin_idx = np.searchsorted(cuts, v, side="right")
        h_cond = 0.0
        for b in np.unique(bin_idx):
            sel = bin_idx == b
            weight = np.count_nonzero(sel) / len(v)
            h_cond += weight * _entropy_nats(
                np.bincount(y[sel], minlength=n_classes).astype(float)
            )
        gains.append(h_labels - h_cond)

    order = sorted(range(ds.n_features), key=lambda i: (-gains[i], i))
    return [(ds.feature_names[i], float(gains[i])) for i in order]


# ---------------------------------------------------------------------------
# Dataset building from a trace manifest


@dataclass(frozen=True)
class PipelineConfig:
    """End-to-end settings for turning raw traces into feature rows."""

    feature_mode: str = "tf"            # "tf" | "mfcc"
    segmentation: str = "region"        # "region" (one word per trace) | "word"
    trim_head_s: float = 5.0
    trim_tail_s: float = 2.0
    highpass_hz: float = 2.0
    window_samples: int = 100
    stride_samples: int = 10
    expand_frac: float = 0.3
    isolation: IsolationConfig = field(default_factory=IsolationConfig)
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    sample_rate_hz: float | None = None  # fallback for traces without sidecar rate

    def __post_init__(self):
        if self.feature_mode not in ("tf", "mfcc"):
            raise ValueError(f"unknown feature mode {self.feature_mode!r}")
        if self.segmentation not in ("region", "word"):
            raise ValueError(f"unknown segmentation mode {self.segmentation!r}")

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def worker_count() -> int:
    """Parallelism cap from VIBESPEECH_THREADS (default: CPU count)."""
    env = os.environ.get("VIBESPEECH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"VIBESPEECH_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def read_manifest(path) -> list[dict[str, str]]:
    """Rows of a ``trace_path,label[,speaker,gender]`` manifest CSV."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "trace_path" not in reader.fieldnames:
            raise ValueError(f"{path}: manifest needs a header with a trace_path column")
        if "label" not in reader.fieldnames:
            raise ValueError(f"{path}: manifest needs a label column")
        rows = [dict(r) for r in reader]
    if not rows:
        raise ValueError(f"{path}: empty manifest")
    return rows


def segments_for_trace(
    trace: SensorTrace, cfg: PipelineConfig
) -> list[tuple[SensorTrace, SpeechSegment]]:
    """Trim protocol padding, high-pass, and segment one trace.

    The filtered trace travels with each segment since indices refer to it.
    """
    if cfg.trim_head_s > 0 or cfg.trim_tail_s > 0:
        trace = trim_protocol_edges(trace, cfg.trim_head_s, cfg.trim_tail_s)
    trace = highpass_motion_filter(trace, cfg.highpass_hz)
    if cfg.segmentation == "region":
        segs = [
            detect_speech_region(trace, cfg.window_samples, cfg.stride_samples, cfg.expand_frac)
        ]
    else:
        segs = isolate_words(trace, cfg.isolation)
    return [(trace, s) for s in segs]


def _extract(trace: SensorTrace, seg: SpeechSegment, cfg: PipelineConfig) -> FeatureVector:
    if cfg.feature_mode == "tf":
        return extract_tf_features(trace, seg)
    return extract_mfcc_features(trace, seg, cfg.mfcc)


def build_dataset(
    manifest_path,
    cfg: PipelineConfig = PipelineConfig(),
    label_field: str = "label",
) -> tuple[LabeledDataset, list[tuple[str, str]]]:
    """Run the segmentation + extraction pipeline over a manifest.

    Returns the dataset plus a skip report of (trace_path, reason) for rows
    that could not contribute (unreadable file, no segments found).  Row
    order follows manifest order regardless of the parallelism level.
    """
    manifest_path = Path(manifest_path)
    entries = read_manifest(manifest_path)
    base = manifest_path.parent

    def process(entry):
        rel = entry["trace_path"]
        try:
            label = entry.get(label_field)
            if not label:
                raise ValueError(f"manifest row lacks a {label_field!r} value")
            p = base / rel
            fmt = "jsonl" if p.suffix == ".jsonl" else "csv"
            trace = load_trace(p, format=fmt, sample_rate_hz=cfg.sample_rate_hz)
            pairs = segments_for_trace(trace, cfg)
            if not pairs:
                return rel, "no speech segments found", []
            return rel, None, [(_extract(tr, seg, cfg), label) for tr, seg in pairs]
        except (OSError, ValueError) as exc:
            return rel, str(exc), []

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(process, entries))

    rows: list[FeatureVector] = []
    labels: list[str] = []
    skipped: list[tuple[str, str]] = []
    for rel, err, extracted in results:
        if err is not None:
            skipped.append((rel, err))
            continue
        for fv, label in extracted:
            rows.append(fv)
            labels.append(label)
    if not rows:
        raise ValueError(
            f"{manifest_path}: no usable rows "
            f"({len(skipped)} skipped: {skipped[:3]}{'...' if len(skipped) > 3 else ''})"
        )
    meta = {
        "pipeline_hash": cfg.config_hash(),
        "feature_mode": cfg.feature_mode,
        "label_field": label_field,
        "manifest": manifest_path.name,
    }
    return LabeledDataset.from_rows(rows, labels, meta=meta), skipped
