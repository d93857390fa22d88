"""
Evaluation
==========
Per-tag precision / recall / F1 with the -1 sentinel, exact accuracy under
the gold-set membership rule, and the confusion matrix.

Counting rule per example (predicted tag p, gold set G):
- p ∈ G  → tp[p] += 1, otherwise fp[p] += 1
- every g ∈ G with g ≠ p → fn[g] += 1

Undefined ratios (zero denominator) are reported as -1.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .corpus import NUM_TAGS, TAG_ABBREVIATIONS, TAG_INDEX, TAGS
from .models import Prediction

logger = logging.getLogger(__name__)

UNDEFINED = -1.0

PredictionLike = Union[Prediction, int, str]
GoldLike = Iterable[Union[int, str]]


@dataclass
class TagMetrics:
    tag: str
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


@dataclass(eq=False)
class EvalReport:
    """Scores for one prediction run over a test split"""
    tags: List[TagMetrics]
    exact_accuracy: float
    n_examples: int
    confusion: np.ndarray = field(default_factory=lambda: np.zeros((NUM_TAGS, NUM_TAGS), dtype=np.int64))

    def metrics(self, tag: str) -> TagMetrics:
        return self.tags[TAG_INDEX[tag]]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EvalReport):
            return NotImplemented
        return (self.tags == other.tags and self.exact_accuracy == other.exact_accuracy
                and self.n_examples == other.n_examples and np.array_equal(self.confusion, other.confusion))


# ==================== SCORING ====================

def _label(prediction: PredictionLike) -> int:
    if isinstance(prediction, Prediction):
        return prediction.label_index
    if isinstance(prediction, str):
        if prediction not in TAG_INDEX:
            raise ValueError(f"unknown tag {prediction!r}")
        return TAG_INDEX[prediction]
    label = int(prediction)
    if not 0 <= label < NUM_TAGS:
        raise ValueError(f"label {label} outside 0..{NUM_TAGS - 1}")
    return label


def _gold_set(gold: GoldLike) -> FrozenSet[int]:
    labels = frozenset(_label(g) for g in gold)
    if not labels:
        raise ValueError("gold tag set is empty")
    return labels


def _ratio(numerator: int, denominator: int) -> float:
    return numerator / denominator if denominator > 0 else UNDEFINED


def _f1(precision: float, recall: float) -> float:
    if precision == UNDEFINED or recall == UNDEFINED:
        return UNDEFINED
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def confusion_matrix(predictions: Sequence[PredictionLike], gold: Sequence[GoldLike]) -> np.ndarray:
    """6×6 counts, rows = gold tag, columns = predicted tag; one count per gold tag"""
    if len(predictions) != len(gold):
        raise ValueError(f"{len(predictions)} predictions for {len(gold)} gold sets")
    matrix = np.zeros((NUM_TAGS, NUM_TAGS), dtype=np.int64)
    for prediction, tags in zip(predictions, gold):
        p = _label(prediction)
        for g in _gold_set(tags):
            matrix[g, p] += 1
    return matrix


def score(predictions: Sequence[PredictionLike], gold: Sequence[GoldLike]) -> EvalReport:
    """
    Score predictions against gold tag sets.

    Args:
        predictions: Prediction objects, label indices or tag names
        gold: One non-empty tag set per prediction (names or indices)

    Raises:
        ValueError: length mismatch, empty gold set or unknown tag
    """
    if len(predictions) != len(gold):
        raise ValueError(f"{len(predictions)} predictions for {len(gold)} gold sets")

    tp = np.zeros(NUM_TAGS, dtype=np.int64)
    fp = np.zeros(NUM_TAGS, dtype=np.int64)
    fn = np.zeros(NUM_TAGS, dtype=np.int64)
    correct = 0

    for prediction, tags in zip(predictions, gold):
        p = _label(prediction)
        gold_set = _gold_set(tags)
        if p in gold_set:
            tp[p] += 1
            correct += 1
        else:
            fp[p] += 1
        for g in gold_set:
            if g != p:
                fn[g] += 1

    metrics = []
    for k, tag in enumerate(TAGS):
        precision = _ratio(int(tp[k]), int(tp[k] + fp[k]))
        recall = _ratio(int(tp[k]), int(tp[k] + fn[k]))
        metrics.append(TagMetrics(tag=tag, precision=precision, recall=recall, f1=_f1(precision, recall),
                                  tp=int(tp[k]), fp=int(fp[k]), fn=int(fn[k])))

    n = len(predictions)
    return EvalReport(tags=metrics, exact_accuracy=correct / n if n else 0.0, n_examples=n,
                      confusion=confusion_matrix(predictions, gold))


# ==================== REPORTING ====================

def _fmt(value: float) -> str:
    return "-1" if value == UNDEFINED else f"{value:.4f}"


def format_report(report: EvalReport) -> Tuple[str, Dict[str, Any]]:
    """
    Render a report as an aligned text table and a machine-readable record.

    The record keeps full-precision floats; parse_report inverts it exactly.
    """
    table = pd.DataFrame(
        [[_fmt(m.precision), _fmt(m.recall), _fmt(m.f1), m.tp, m.fp, m.fn] for m in report.tags],
        index=[m.tag for m in report.tags],
        columns=["Precision", "Recall", "F1-Score", "TP", "FP", "FN"],
    )
    confusion = pd.DataFrame(report.confusion, index=list(TAG_ABBREVIATIONS), columns=list(TAG_ABBREVIATIONS))
    confusion.index.name = "gold\\pred"

    text = "\n".join([
        table.to_string(),
        "",
        f"exact_accuracy {report.exact_accuracy:.4f}",
        f"n_examples {report.n_examples}",
        "",
        confusion.to_string(),
    ])

    record = {
        "tag_order": list(TAGS),
        "exact_accuracy": report.exact_accuracy,
        "n_examples": report.n_examples,
        "tags": {m.tag: {"precision": m.precision, "recall": m.recall, "f1": m.f1,
                         "tp": m.tp, "fp": m.fp, "fn": m.fn} for m in report.tags},
        "confusion": report.confusion.tolist(),
    }
    return text, record


def parse_report(record: Mapping[str, Any]) -> EvalReport:
    """Rebuild an EvalReport from its machine-readable record"""
    try:
        if list(record["tag_order"]) != list(TAGS):
            raise ValueError(f"report tag order {record['tag_order']} differs from {list(TAGS)}")
        metrics = []
        for tag in TAGS:
            entry = record["tags"][tag]
            metrics.append(TagMetrics(tag=tag, precision=float(entry["precision"]),
                                      recall=float(entry["recall"]), f1=float(entry["f1"]),
                                      tp=int(entry["tp"]), fp=int(entry["fp"]), fn=int(entry["fn"])))
        confusion = np.asarray(record["confusion"], dtype=np.int64)
        if confusion.shape != (NUM_TAGS, NUM_TAGS):
            raise ValueError(f"confusion matrix must be {NUM_TAGS}x{NUM_TAGS}, got {confusion.shape}")
        return EvalReport(tags=metrics, exact_accuracy=float(record["exact_accuracy"]),
                          n_examples=int(record["n_examples"]), confusion=confusion)
    except (KeyError, TypeError) as e:
        raise ValueError(f"malformed report record: {e}") from e


def write_report(report: EvalReport, path: Union[str, Path]) -> str:
    """Write the JSON record to `path` and the text table next to it (.txt); returns the text"""
    path = Path(path)
    text, record = format_report(report)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(record, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(path.with_suffix(".txt"), "w", encoding="utf-8", newline="\n") as f:
        f.write(text + "\n")
    logger.info(f"💾 Evaluation report written to {path}")
    return text


def read_report(path: Union[str, Path]) -> EvalReport:
    with open(path, "r", encoding="utf-8") as f:
        return parse_report(json.load(f))
