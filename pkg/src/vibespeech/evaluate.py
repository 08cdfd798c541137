"""Evaluation protocols, confusion-matrix metrics, and keyword search.

Both protocols (10-fold cross validation and the 66/34 train-test split) are
stratified and seeded: per class the rows are shuffled once, then dealt
round-robin into folds or cut at the split point.  Reports carry a hash of
the fold assignment so paired runs (e.g. two feature sets on the same data)
can prove they saw identical partitions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .features import LabeledDataset
from .learn import Prediction, predict_labels

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f_measure: float
    support: int


@dataclass(frozen=True, eq=False)
class EvalReport:
    label_vocab: tuple[str, ...]
    confusion: np.ndarray            # rows = true class, columns = predicted
    per_class: dict[str, ClassMetrics]
    weighted_f: float
    macro_f: float
    protocol: str
    seed: int
    extra: dict[str, str] = field(default_factory=dict)

    def summary(self) -> str:
        return (
            f"{self.protocol} (seed {self.seed}): weighted F = {self.weighted_f:.4f}, "
            f"macro F = {self.macro_f:.4f} over {len(self.label_vocab)} classes"
        )


def metrics_from_confusion(
    confusion, label_vocab: Sequence[str] | None = None
) -> tuple[dict, float, float]:
    """Per-class precision/recall/F plus weighted and macro aggregates.

    Zero denominators yield zero metrics rather than NaN, so an all-zero row
    (class never seen) or column (class never predicted) stays well-defined.
    Without a vocabulary the classes are named by their matrix index.
    """
    c = np.asarray(confusion)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"confusion matrix must be square, got shape {c.shape}")
    if np.any(c < 0) or not np.all(c == np.floor(c)):
        raise ValueError("confusion matrix must hold non-negative integer counts")
    if label_vocab is None:
        label_vocab = tuple(str(i) for i in range(c.shape[0]))
    if c.shape[0] != len(label_vocab):
        raise ValueError("label_vocab size does not match the matrix")
    c = c.astype(np.float64)
    per_class: dict[str, ClassMetrics] = {}
    f_values = []
    supports = []
    for i, label in enumerate(label_vocab):
        tp = c[i, i]
        predicted = c[:, i].sum()
        actual = c[i, :].sum()
        precision = tp / predicted if predicted > 0 else 0.0
        recall = tp / actual if actual > 0 else 0.0
        f = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class[label] = ClassMetrics(float(precision), float(recall), float(f), int(actual))
        f_values.append(f)
        supports.append(actual)
    total = sum(supports)
    weighted_f = float(sum(f * s for f, s in zip(f_values, supports)) / total) if total > 0 else 0.0
    macro_f = float(np.mean(f_values))
    return per_class, weighted_f, macro_f


Trainer = Callable[[LabeledDataset], object]


def _stratified_order(ds: LabeledDataset, seed: int) -> dict[str, np.ndarray]:
    """Per-class row indices in a seeded shuffled order (vocab order fixed)."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(ds.labels)
    out = {}
    for label in ds.label_vocab:
        idx = np.flatnonzero(labels == label)
        out[label] = idx[rng.permutation(len(idx))]
    return out


def _hash_assignment(assignment: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(assignment, dtype=np.int64).tobytes()).hexdigest()[:16]


def evaluate_cv(
    ds: LabeledDataset, trainer: Trainer, k: int = 10, seed: int = 0
) -> EvalReport:
    """Stratified seeded k-fold cross validation.

    Folds are disjoint, cover the dataset, and are balanced within one row
    per class.  The confusion matrix accumulates held-out predictions only.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    counts = ds.class_counts()
    small = {label: c for label, c in counts.items() if c < k}
    if small:
        raise ValueError(
            f"every class needs >= {k} rows for {k}-fold CV; too small: {small} "
            f"(all counts: {counts})"
        )
    fold_of = np.empty(ds.n_rows, dtype=np.int64)
    for label, idx in _stratified_order(ds, seed).items():
        fold_of[idx] = np.arange(len(idx)) % k

    n_classes = len(ds.label_vocab)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    y = ds.label_indices()
    for fold in range(k):
        test = np.flatnonzero(fold_of == fold)
        train = np.flatnonzero(fold_of != fold)
        model = trainer(ds.subset(train))
        pred_idx, _ = predict_labels(model, ds.matrix[test])
        np.add.at(confusion, (y[test], pred_idx), 1)

    per_class, weighted_f, macro_f = metrics_from_confusion(confusion, ds.label_vocab)
    return EvalReport(
        label_vocab=ds.label_vocab,
        confusion=confusion,
        per_class=per_class,
        weighted_f=weighted_f,
        macro_f=macro_f,
        protocol=f"cv{k}",
        seed=seed,
        extra={"fold_hash": _hash_assignment(fold_of)},
    )


def split_indices(
    ds: LabeledDataset, train_fraction: float = 0.66, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/test row indices honoring the fraction per class."""
    if not (0 < train_fraction < 1):
        raise ValueError("train_fraction must lie in (0, 1)")
    train_parts, test_parts = [], []
    for label, idx in _stratified_order(ds, seed).items():
        n_train = round(train_fraction * len(idx))
        if n_train == 0 or n_train == len(idx):
            raise ValueError(
                f"class {label!r} with {len(idx)} rows lands entirely on one "
                f"side of a {train_fraction:.0%} split"
            )
        train_parts.append(idx[:n_train])
        test_parts.append(idx[n_train:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(test_parts))


def evaluate_split(
    ds: LabeledDataset, trainer: Trainer, train_fraction: float = 0.66, seed: int = 0
) -> EvalReport:
    """Stratified seeded split evaluation (66/34 by default)."""
    train, test = split_indices(ds, train_fraction, seed)
    model = trainer(ds.subset(train))
    y = ds.label_indices()
    pred_idx, _ = predict_labels(model, ds.matrix[test])
    n_classes = len(ds.label_vocab)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y[test], pred_idx), 1)
    per_class, weighted_f, macro_f = metrics_from_confusion(confusion, ds.label_vocab)
    membership = np.zeros(ds.n_rows, dtype=np.int64)
    membership[test] = 1
    return EvalReport(
        label_vocab=ds.label_vocab,
        confusion=confusion,
        per_class=per_class,
        weighted_f=weighted_f,
        macro_f=macro_f,
        protocol=f"split{round(train_fraction * 100):d}",
        seed=seed,
        extra={"fold_hash": _hash_assignment(membership)},
    )


def binary_one_vs_others(ds: LabeledDataset, target_label: str) -> LabeledDataset:
    """Remap labels to {target, "other"}; rows are untouched."""
    if target_label not in ds.label_vocab:
        raise ValueError(f"unknown target label {target_label!r} (vocab: {ds.label_vocab})")
    if target_label == "other":
        raise ValueError('target label "other" collides with the pooled class name')
    labels = tuple(l if l == target_label else "other" for l in ds.labels)
    meta = dict(ds.meta)
    meta["binary_target"] = target_label
    return LabeledDataset(
        feature_names=ds.feature_names,
        matrix=ds.matrix,
        labels=labels,
        label_vocab=tuple(sorted({target_label, "other"})),
        meta=meta,
    )


# ---------------------------------------------------------------------------
# Keyword search: confidence CDF, quantile threshold, filtering


@dataclass(frozen=True, eq=False)
class ConfidenceCdf:
    """Empirical CDF over prediction confidences."""

    values: np.ndarray  # sorted ascending

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.values, q))

    def fraction_at_or_below(self, x: float) -> float:
        return float(np.searchsorted(self.values, x, side="right")) / len(self.values)


def _confidences(predictions: Iterable) -> np.ndarray:
    vals = [p.confidence if isinstance(p, Prediction) else float(p) for p in predictions]
    return np.asarray(vals, dtype=np.float64)


def keyword_confidence_cdf(predictions: Iterable) -> ConfidenceCdf:
    """Sorted confidences with quantile lookup; errors on an empty set."""
    vals = _confidences(predictions)
    if len(vals) == 0:
        raise ValueError("cannot build a CDF from zero predictions")
    return ConfidenceCdf(values=np.sort(vals))


def pick_threshold(marginal_predictions: Iterable, q: float = 0.95) -> float:
    """Threshold at the q-th quantile of marginal-word confidences."""
    return keyword_confidence_cdf(marginal_predictions).quantile(q)


def keyword_filter(
    predictions: Sequence[tuple[object, Prediction]], threshold: float
) -> list[tuple[object, str]]:
    """Keep (item, label) pairs whose confidence reaches the threshold.

    The threshold is clamped into [0, 1], so 1+eps behaves like 1.
    """
    theta = min(max(float(threshold), 0.0), 1.0)
    return [(item, p.label) for item, p in predictions if p.confidence >= theta]


# ---------------------------------------------------------------------------
# Report serialization


def report_to_jsonable(report: EvalReport) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "protocol": report.protocol,
        "seed": report.seed,
        "label_vocab": list(report.label_vocab),
        "confusion": [[int(v) for v in row] for row in report.confusion],
        "per_class": {
            label: {
                "precision": m.precision,
                "recall": m.recall,
                "f_measure": m.f_measure,
                "support": m.support,
            }
            for label, m in report.per_class.items()
        },
        "weighted_f": report.weighted_f,
        "macro_f": report.macro_f,
        "extra": dict(report.extra),
    }


def save_report(report: EvalReport, path) -> None:
    Path(path).write_text(
        json.dumps(report_to_jsonable(report), indent=1, sort_keys=True) + "\n",
        encoding="utf-8",
        newline="\n",
    )


def load_report(path) -> EvalReport:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise ValueError(f"{path}: unsupported report schema version")
    per_class = {
        label: ClassMetrics(m["precision"], m["recall"], m["f_measure"], m["support"])
        for label, m in doc["per_class"].items()
    }
    return EvalReport(
        label_vocab=tuple(doc["label_vocab"]),
        confusion=np.asarray(doc["confusion"], dtype=np.int64),
        per_class=per_class,
        weighted_f=doc["weighted_f"],
        macro_f=doc["macro_f"],
        protocol=doc["protocol"],
        seed=doc["seed"],
        extra=dict(doc["extra"]),
    )
