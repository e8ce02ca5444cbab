"""Stratified k-fold plans and the cross-validation driver.

Cross-validation runs within each recording (subject) separately; held-out
predictions from every fold and recording are then pooled for the headline
metrics, and per-recording accuracies are macro-averaged alongside.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .errors import GafnirsError, TooFewSamples
from .metrics import summarize


@dataclass
class FoldPlan:
    k: int
    assignments: np.ndarray
    stratified: bool = True
    seed: int = 0

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def make_folds(labels, k: int = 10, stratified: bool = True, seed: int = 0) -> FoldPlan:
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if k < 2 or k > n:
        raise TooFewSamples(f"cannot make {k} folds from {n} samples")
    rng = np.random.default_rng([seed, 7])
    assign = np.empty(n, dtype=np.int64)
    if stratified:
        classes, counts = np.unique(labels, return_counts=True)
        if k > counts.min():
            raise TooFewSamples(f"class {classes[counts.argmin()]} has {counts.min()} samples < k={k}")
        offset = 0
        for c in classes:
            idx = rng.permutation(np.flatnonzero(labels == c))
            # continue round-robin where the previous class stopped so fold sizes stay level
            assign[idx] = (offset + np.arange(len(idx))) % k
            offset = (offset + len(idx)) % k
    else:
        assign[rng.permutation(n)] = np.arange(n) % k
    return FoldPlan(k, assign, stratified, seed)


@dataclass
class MetricsReport:
    accuracy: float
    per_class_auroc: list
    micro_auroc: float | None
    average_precision_micro: float | None
    confusion: list
    n: int
    per_fold: list[dict] = field(default_factory=list)
    per_recording: list[dict] = field(default_factory=list)
    macro_recording_accuracy: float | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "software": {"name": "gafnirs", "version": __version__},
            "metrics": {
                "accuracy": self.accuracy,
                "per_class_auroc": self.per_class_auroc,
                "micro_auroc": self.micro_auroc,
                "average_precision_micro": self.average_precision_micro,
                "confusion": self.confusion,
                "n": self.n,
                "macro_recording_accuracy": self.macro_recording_accuracy,
            },
            "per_recording": self.per_recording,
            "per_fold": self.per_fold,
            "config": self.config,
        }


class FoldError(GafnirsError):
    def __init__(self, fold: int, group: str, cause: Exception):
        self.fold, self.group, self.cause = fold, group, cause
        self.exit_code = getattr(cause, "exit_code", 1)
        super().__init__(f"recording {group!r} fold {fold}: {cause}")


def _fold_seed(seed: int, group: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, group, fold]).generate_state(1, np.uint32)[0])


def cross_validate(x: np.ndarray, y: np.ndarray, model_factory: Callable[[int], object],
                   k: int = 10, seed: int = 0, stratified: bool = True, group: str = "",
                   group_index: int = 0):
    """Held-out class scores for one recording plus per-fold summaries.

    ``model_factory(seed)`` must return a fresh object with ``fit(x, y)`` and
    ``predict_proba(x)``.
    """
    plan = make_folds(y, k, stratified, seed)
    scores = np.zeros((len(y), 3))
    per_fold = []
    for f in range(k):
        tr, te = plan.train_index(f), plan.test_index(f)
        try:
            model = model_factory(_fold_seed(seed, group_index, f))
            model.fit(x[tr], y[tr])
            scores[te] = model.predict_proba(x[te])
        except GafnirsError as exc:
            raise FoldError(f, group, exc) from exc
        s = summarize(scores[te], y[te])
        per_fold.append({"recording": group, "fold": f, "n_test": int(len(te)),
                         "accuracy": s["accuracy"], "micro_auroc": s["micro_auroc"]})
    return scores, per_fold


def run_cv(x: np.ndarray, y: np.ndarray, model_factory: Callable[[int], object], k: int = 10,
           seed: int = 0, groups=None, stratified: bool = True,
           config: dict | None = None) -> MetricsReport:
    """Per-recording k-fold CV; pooled and per-recording metrics."""
    x = np.asarray(x)
    y = np.asarray(y, dtype=np.int64)
    groups = np.asarray([""] * len(y) if groups is None else groups)
    scores = np.zeros((len(y), 3))
    per_fold, per_rec = [], []
    for gi, g in enumerate(sorted(set(groups.tolist()))):
        idx = np.flatnonzero(groups == g)
        s, folds = cross_validate(x[idx], y[idx], model_factory, k, seed, stratified, g, gi)
        scores[idx] = s
        per_fold += folds
        summ = summarize(s, y[idx])
        per_rec.append({"recording": g, "n": int(len(idx)), "accuracy": summ["accuracy"],
                        "micro_auroc": summ["micro_auroc"]})
    pooled = summarize(scores, y)
    macro = float(np.mean([r["accuracy"] for r in per_rec])) if per_rec else None
    return MetricsReport(pooled["accuracy"], pooled["per_class_auroc"], pooled["micro_auroc"],
                         pooled["average_precision_micro"], pooled["confusion"], pooled["n"],
                         per_fold, per_rec, macro, dict(config or {}))
