"""Top-1 accuracy, confusion matrices, and the fusion-vs-heads ablation report."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data_io import EmbeddingSet, join_pairs
from .errors import ContractError, DataError
from .fusion import MlpModel, Prediction, forward_batch, naive_average_probs

__all__ = [
    "MethodScore",
    "EvalReport",
    "top1_accuracy",
    "confusion_matrix",
    "ablation_report",
    "render_report_text",
    "report_to_dict",
]


@dataclass(frozen=True)
class MethodScore:
    top1: float
    gain: float | None = None   # headline method minus this one; None on the headline row


@dataclass
class EvalReport:
    """Accuracy of the fusion method and its baselines on one test set.

    Confusion and per-class numbers describe the headline (fusion) method;
    rows of the confusion matrix are ground-truth classes, columns are
    predictions. Gains are exact differences of the reported accuracies.
    """

    top1: float
    per_class_accuracy: np.ndarray      # (C,), NaN where a class has no test samples
    per_class_counts: np.ndarray        # (C,)
    confusion: np.ndarray               # (C, C) counts
    comparisons: dict[str, MethodScore]
    unseen_classes: list[int] = field(default_factory=list)
    unseen_count: int = 0
    unseen_correct: int = 0


def _as_truth_array(predictions: Sequence[Prediction], truth: Mapping[str, int]) -> np.ndarray:
    if not predictions:
        raise DataError("no predictions to evaluate")
    pred_ids = [p.sample_id for p in predictions]
    if len(set(pred_ids)) != len(pred_ids):
        raise DataError("duplicate sample ids among predictions")
    if set(pred_ids) != set(truth):
        missing = sorted(set(pred_ids) ^ set(truth))[:10]
        raise DataError(f"prediction and ground-truth id sets differ, e.g. {missing}")
    return np.array([truth[sid] for sid in pred_ids], dtype=np.int64)


def top1_accuracy(predictions: Sequence[Prediction], truth: Mapping[str, int]) -> float:
    """Fraction of samples whose argmax class matches the ground truth."""
    y = _as_truth_array(predictions, truth)
    guesses = np.array([p.argmax_class for p in predictions], dtype=np.int64)
    return float((guesses == y).mean())


def confusion_matrix(
    predictions: Sequence[Prediction], truth: Mapping[str, int], n_classes: int
) -> np.ndarray:
    """(C, C) counts with ground truth on rows and predictions on columns."""
    y = _as_truth_array(predictions, truth)
    guesses = np.array([p.argmax_class for p in predictions], dtype=np.int64)
    if y.max() >= n_classes or guesses.max() >= n_classes:
        raise ContractError("labels or predictions exceed the declared class count")
    mat = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(mat, (y, guesses), 1)
    return mat


def ablation_report(
    rgb_head: MlpModel,
    hha_head: MlpModel,
    fusion_model: MlpModel,
    rgb_test: EmbeddingSet,
    hha_test: EmbeddingSet,
    truth: Mapping[str, int],
    train_histogram: np.ndarray | None = None,
    include_naive: bool = True,
) -> EvalReport:
    """Score fusion against the single-modality heads and the naive average.

    All four methods run on the same test samples; the fusion model takes
    the RGB and HHA vectors concatenated in that order. train_histogram,
    when given, marks classes with zero training samples so the unseen-class
    line can be reported separately (those samples stay in the headline
    top-1).
    """
    if rgb_head.n_classes != hha_head.n_classes or rgb_head.n_classes != fusion_model.n_classes:
        raise DataError(
            "class-space mismatch: heads and fusion model disagree on class count"
        )
    n_classes = fusion_model.n_classes
    pairs = join_pairs(rgb_test, hha_test)
    if fusion_model.input_dim != pairs.rgb_dim + pairs.hha_dim:
        raise DataError("fusion model input dim does not match concatenated embeddings")

    ids = pairs.ids
    rgb_vectors, hha_vectors = pairs.split()
    rgb_probs = forward_batch(rgb_head, rgb_vectors)
    hha_probs = forward_batch(hha_head, hha_vectors)
    fusion_probs = forward_batch(fusion_model, pairs.vectors)

    def to_predictions(probs: np.ndarray) -> list[Prediction]:
        return [
            Prediction(sid, p, int(np.argmax(p))) for sid, p in zip(ids, probs)
        ]

    fusion_preds = to_predictions(fusion_probs)
    method_preds = {
        "fusion": fusion_preds,
        "rgb_head": to_predictions(rgb_probs),
        "hha_head": to_predictions(hha_probs),
    }
    if include_naive:
        method_preds["naive_average"] = to_predictions(
            naive_average_probs(rgb_probs, hha_probs)
        )

    accuracies = {name: top1_accuracy(preds, truth) for name, preds in method_preds.items()}
    fusion_top1 = accuracies["fusion"]
    comparisons = {
        name: MethodScore(acc, None if name == "fusion" else fusion_top1 - acc)
        for name, acc in accuracies.items()
    }

    confusion = confusion_matrix(fusion_preds, truth, n_classes)
    counts = confusion.sum(axis=1)
    with np.errstate(invalid="ignore"):
        per_class = np.where(counts > 0, np.diag(confusion) / np.maximum(counts, 1), np.nan)

    unseen_classes: list[int] = []
    unseen_count = 0
    unseen_correct = 0
    if train_histogram is not None:
        train_histogram = np.asarray(train_histogram)
        if train_histogram.shape != (n_classes,):
            raise ContractError(
                f"train histogram must have length {n_classes}, got {train_histogram.shape}"
            )
        unseen_classes = [int(c) for c in np.flatnonzero(train_histogram == 0)]
        y = _as_truth_array(fusion_preds, truth)
        guesses = np.array([p.argmax_class for p in fusion_preds])
        in_unseen = np.isin(y, unseen_classes)
        unseen_count = int(in_unseen.sum())
        unseen_correct = int((guesses[in_unseen] == y[in_unseen]).sum())

    return EvalReport(
        top1=fusion_top1,
        per_class_accuracy=per_class,
        per_class_counts=counts,
        confusion=confusion,
        comparisons=comparisons,
        unseen_classes=unseen_classes,
        unseen_count=unseen_count,
        unseen_correct=unseen_correct,
    )


def render_report_text(report: EvalReport) -> str:
    """Text table with one-decimal percentages and per-method gains."""
    lines = ["Top-1 accuracy [%]", f"{'method':<16}{'top-1':>8}{'gain':>8}"]
    order = ["fusion", "rgb_head", "hha_head", "naive_average"]
    for name in order:
        if name not in report.comparisons:
            continue
        score = report.comparisons[name]
        gain = "-" if score.gain is None else f"{score.gain * 100:+.1f}"
        lines.append(f"{name:<16}{score.top1 * 100:>8.1f}{gain:>8}")
    for name, score in report.comparisons.items():
        if name not in order:
            gain = "-" if score.gain is None else f"{score.gain * 100:+.1f}"
            lines.append(f"{name:<16}{score.top1 * 100:>8.1f}{gain:>8}")
    if report.unseen_classes:
        lines.append(
            f"unseen classes: {len(report.unseen_classes)}; "
            f"samples {report.unseen_correct}/{report.unseen_count} correct"
        )
    return "\n".join(lines) + "\n"


def report_to_dict(report: EvalReport) -> dict:
    """JSON-serializable view of the report."""
    return {
        "top1": report.top1,
        "comparisons": {
            name: {"top1": score.top1, "gain": score.gain}
            for name, score in report.comparisons.items()
        },
        "per_class_accuracy": [
            None if not np.isfinite(a) else float(a) for a in report.per_class_accuracy
        ],
        "per_class_counts": [int(c) for c in report.per_class_counts],
        "unseen_classes": report.unseen_classes,
        "unseen_count": report.unseen_count,
        "unseen_correct": report.unseen_correct,
    }
