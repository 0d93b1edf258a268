from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, roc_auc_score

from src import LOGGER
from src.modules.utils._data import DatasetSplit
from src.modules.utils._dataset import SkeletonDataset
from src.modules.utils._errors import (
    DimensionError,
    LabelError,
    ParameterError,
    SkelFallError,
    TopologyMismatchError,
    UndefinedMetricError,
)
from src.modules.utils._model import FallDetectorNet, parameter_checksum
from src.modules.utils._ops import softmax
from src.modules.utils._preprocess import NormStats

UNDEFINED = "undefined"
METRIC_COLUMNS = ("f1", "sensitivity", "specificity", "auc", "fp_rate", "accuracy")
_HEADINGS = {
    "f1": "F1", "sensitivity": "Sensitivity", "specificity": "Specificity",
    "auc": "AUC", "fp_rate": "FP rate", "accuracy": "Accuracy",
}


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _check(scores: Sequence[float], labels: Sequence[int]):
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.size == 0:
        raise ParameterError("no samples to score")
    if scores.shape != labels.shape:
        raise DimensionError(f"{scores.size} scores for {labels.size} labels")
    if not np.isin(labels, (0, 1)).all():
        raise LabelError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def confusion(scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> Confusion:
    """Counts for the rule ``fall probability >= threshold``, i.e. the argmax of two logits at 0.5."""
    scores, labels = _check(scores, labels)
    predicted = (scores >= threshold).astype(np.int64)
    tn, fp, fn, tp = confusion_matrix(labels, predicted, labels=[0, 1]).ravel()
    return Confusion(tp=int(tp), fp=int(fp), tn=int(tn), fn=int(fn))


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve; tied scores count one half."""
    scores, labels = _check(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"AUC needs both classes, got {n_pos} positive / {n_neg} negative")
    return float(roc_auc_score(labels, scores))


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


@dataclass(frozen=True)
class MetricsReport:
    """Binary fall-detection metrics. ``None`` marks a metric whose denominator is zero."""

    tp: int
    fp: int
    tn: int
    fn: int
    f1: Optional[float]
    sensitivity: Optional[float]
    specificity: Optional[float]
    auc: Optional[float]
    fp_rate: Optional[float]
    accuracy: Optional[float]
    threshold: float = 0.5

    @property
    def n_samples(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_confusion(cls, counts: Confusion, auc: Optional[float] = None, threshold: float = 0.5) -> "MetricsReport":
        tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
        specificity = _ratio(tn, tn + fp)
        return cls(
            tp=tp, fp=fp, tn=tn, fn=fn,
            f1=_ratio(2 * tp, 2 * tp + fp + fn),
            sensitivity=_ratio(tp, tp + fn),
            specificity=specificity,
            auc=auc,
            fp_rate=None if specificity is None else 1.0 - specificity,
            accuracy=_ratio(tp + tn, counts.total),
            threshold=threshold,
        )

    @classmethod
    def from_scores(cls, scores: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> "MetricsReport":
        counts = confusion(scores, labels, threshold)
        try:
            auc = roc_auc(scores, labels)
        except UndefinedMetricError as exc:
            LOGGER.warning(f"AUC undefined: {exc}")
            auc = None
        return cls.from_confusion(counts, auc, threshold)

    def format(self, name: str) -> str:
        value = getattr(self, name)
        return UNDEFINED if value is None else f"{100 * value:.2f}%"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "counts": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "metrics": {name: UNDEFINED if getattr(self, name) is None else getattr(self, name) for name in METRIC_COLUMNS},
            "n_samples": self.n_samples,
            "threshold": self.threshold,
        }

    def to_text(self) -> str:
        header = " | ".join(f"{_HEADINGS[name]:>11}" for name in METRIC_COLUMNS)
        row = " | ".join(f"{self.format(name):>11}" for name in METRIC_COLUMNS)
        counts = f"tp={self.tp} fp={self.fp} tn={self.tn} fn={self.fn} (n={self.n_samples}, threshold={self.threshold})"
        return f"{header}\n{row}\n{counts}\n"


def predict_scores(
    net: FallDetectorNet,
    dataset: SkeletonDataset,
    indices: Sequence[int],
    stats: NormStats,
    window: int = 250,
    max_frames: int = 300,
    batch_size: int = 64,
) -> np.ndarray:
    """Fall probabilities from eval-mode forwards on the first ``window`` frames of each sample."""
    net.eval()
    scores = []
    for start in range(0, len(indices), batch_size):
        joints, velocity, _ = dataset.batch(indices[start:start + batch_size], stats, max_frames, window)
        logits = net(joints, velocity)
        scores.append(softmax(logits.data)[:, 1])
    return np.concatenate(scores) if scores else np.zeros(0)


def evaluate_indices(
    net: FallDetectorNet,
    dataset: SkeletonDataset,
    indices: Sequence[int],
    stats: NormStats,
    window: int = 250,
    max_frames: int = 300,
    batch_size: int = 64,
) -> MetricsReport:
    if dataset.joint_count != net.config.joints:
        raise TopologyMismatchError(
            f"network was built for {net.config.joints} joints, dataset has {dataset.joint_count}"
        )
    scores = predict_scores(net, dataset, indices, stats, window, max_frames, batch_size)
    return MetricsReport.from_scores(scores, dataset.labels[list(indices)])


def evaluate(
    net: FallDetectorNet,
    dataset: SkeletonDataset,
    split: Optional[DatasetSplit],
    stats: NormStats,
    mode: str = "standard",
    window: int = 250,
    max_frames: int = 300,
    batch_size: int = 64,
) -> MetricsReport:
    """
    Score the split's test samples, or the whole dataset without a split.

    ``transfer`` mode evaluates a network trained elsewhere and proves it
    untouched by comparing parameter checksums before and after.
    """
    if mode not in ("standard", "transfer"):
        raise ParameterError(f"unknown evaluation mode {mode!r}")
    indices = list(range(len(dataset))) if split is None else dataset.indices(split.test_ids)
    before = parameter_checksum(net) if mode == "transfer" else None
    report = evaluate_indices(net, dataset, indices, stats, window, max_frames, batch_size)
    if before is not None and parameter_checksum(net) != before:
        raise SkelFallError("transfer evaluation modified the network")
    return report
