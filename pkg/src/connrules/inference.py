"""Apply a learned hypothesis to subjects and compute classification metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .cohort import AD, CN, EdgeId
from .learner import Hypothesis, rule_fires


@dataclass(frozen=True)
class Prediction:
    subject_id: str
    label: str
    fired_rules: tuple[int, ...]  # indices into hypothesis.rules


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int  # AD predicted AD
    fn: int  # AD predicted CN
    fp: int  # CN predicted AD
    tn: int  # CN predicted CN

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    sensitivity: float
    specificity: float
    confusion: ConfusionCounts


def predict(
    hypothesis: Hypothesis,
    context: Mapping[EdgeId, int],
    subject_id: str = "",
) -> Prediction:
    """AD iff any rule fires on the context; fired rule indices are kept for
    explanation output."""
    fired = tuple(k for k, r in enumerate(hypothesis.rules) if rule_fires(r, context))
    return Prediction(subject_id, AD if fired else CN, fired)


def evaluate(
    hypothesis: Hypothesis,
    labelled_contexts: Sequence[tuple[str, Mapping[EdgeId, int]]],
) -> Metrics:
    """Metrics over (true label, context) pairs. AD is the positive class;
    rates with an empty denominator are reported as 0."""
    if not labelled_contexts:
        raise ValueError("no labelled contexts to evaluate")
    tp = fn = fp = tn = 0
    for label, context in labelled_contexts:
        pred = predict(hypothesis, context).label
        if label == AD:
            if pred == AD:
                tp += 1
            else:
                fn += 1
        elif label == CN:
            if pred == AD:
                fp += 1
            else:
                tn += 1
        else:
            raise ValueError(f"unknown label {label!r}")
    n = tp + fn + fp + tn
    sens = tp / (tp + fn) if tp + fn else 0.0
    spec = tn / (tn + fp) if tn + fp else 0.0
    return Metrics((tp + tn) / n, sens, spec, ConfusionCounts(tp, fn, fp, tn))


def metrics_to_obj(m: Metrics) -> dict:
    return {
        "accuracy": m.accuracy,
        "sensitivity": m.sensitivity,
        "specificity": m.specificity,
        "confusion": {"tp": m.confusion.tp, "fn": m.confusion.fn,
                      "fp": m.confusion.fp, "tn": m.confusion.tn},
    }


def predictions_to_csv(
    predictions: Sequence[Prediction],
    true_labels: Sequence[str],
    path,
) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "true_label", "predicted_label", "fired_rule_ids"])
        for pred, label in zip(predictions, true_labels):
            writer.writerow([pred.subject_id, label, pred.label,
                             ";".join(str(k) for k in pred.fired_rules)])
    return path
