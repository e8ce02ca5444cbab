"""Classification metrics: AUROC (one-vs-rest and micro), average precision, confusion."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateClass, DimensionMismatch

N_CLASSES = 3


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    _, first, counts = np.unique(sorted_vals, return_index=True, return_counts=True)
    group_rank = first + (counts + 1) / 2.0
    ranks = np.empty(len(values))
    ranks[order] = np.repeat(group_rank, counts)
    return ranks


def binary_auroc(scores, is_positive) -> float:
    """Mann-Whitney AUROC: (concordant + 0.5 * tied) / (positives * negatives)."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(is_positive, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateClass(f"need positives and negatives, got {n_pos} and {n_neg}")
    ranks = _midranks(scores)
    # rank sum minus its minimum counts concordant pairs, ties at half weight
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _check_scores(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or len(scores) != len(labels):
        raise DimensionMismatch(f"scores {scores.shape} vs {len(labels)} labels")
    return scores, labels


def auroc_ovr(scores, labels, positive_class: int) -> float:
    scores, labels = _check_scores(scores, labels)
    return binary_auroc(scores[:, positive_class], labels == positive_class)


def _pooled(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores, labels = _check_scores(scores, labels)
    truth = np.zeros_like(scores, dtype=bool)
    truth[np.arange(len(labels)), labels] = True
    return scores.ravel(), truth.ravel()


def micro_average_roc(scores, labels) -> float:
    s, t = _pooled(scores, labels)
    return binary_auroc(s, t)


def binary_average_precision(scores, is_positive) -> float:
    """Sum over descending distinct thresholds of (R_k - R_{k-1}) * P_k."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = np.asarray(is_positive, dtype=bool)
    n_pos = int(pos.sum())
    if n_pos == 0 or n_pos == len(pos):
        raise DegenerateClass("need positives and negatives")
    order = np.argsort(-scores, kind="mergesort")
    s, p = scores[order], pos[order]
    tp = np.cumsum(p)
    # last index of each run of equal scores is where a threshold admits the whole run
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp_at = tp[last]
    precision = tp_at / (last + 1)
    recall = tp_at / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def average_precision_micro(scores, labels) -> float:
    s, t = _pooled(scores, labels)
    return binary_average_precision(s, t)


def confusion_matrix(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return m


def accuracy_from_confusion(m: np.ndarray) -> float:
    return float(np.trace(m) / m.sum()) if m.sum() else float("nan")


def summarize(scores, labels, predictions=None) -> dict:
    """Accuracy, confusion and AUROC/AP figures; AUROCs of degenerate classes are None."""
    scores, labels = _check_scores(scores, labels)
    pred = scores.argmax(axis=1) if predictions is None else np.asarray(predictions)
    conf = confusion_matrix(labels, pred, scores.shape[1])
    out = {"n": int(len(labels)), "accuracy": accuracy_from_confusion(conf),
           "confusion": conf.tolist()}
    per_class = []
    for c in range(scores.shape[1]):
        try:
            per_class.append(auroc_ovr(scores, labels, c))
        except DegenerateClass:
            per_class.append(None)
    out["per_class_auroc"] = per_class
    try:
        out["micro_auroc"] = micro_average_roc(scores, labels)
        out["average_precision_micro"] = average_precision_micro(scores, labels)
    except DegenerateClass:
        out["micro_auroc"] = out["average_precision_micro"] = None
    return out
