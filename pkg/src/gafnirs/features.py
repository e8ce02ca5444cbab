"""Windowed temporal-mean features and permutation-importance channel ranking."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionMismatch
from .ingest import Task
from .preprocess import Epoch

WINDOWS = (("w1", 5.0, 10.0), ("w2", 10.0, 15.0))
SIGNALS = ("hbo", "hbr")
_EPS = 1e-9


@dataclass
class FeatureVector:
    values: np.ndarray
    label: Task
    feature_names: list[str]
    subject_id: str = ""


def feature_names(channel_ids: list[str]) -> list[str]:
    return [f"{ch}_{sig}_{w}" for ch in channel_ids for sig in SIGNALS for w, _, _ in WINDOWS]


def window_mask(epoch: Epoch, start_s: float, end_s: float) -> np.ndarray:
    """Samples with t in the half-open window [start_s, end_s)."""
    t = epoch.times()
    return (t >= start_s - _EPS) & (t < end_s - _EPS)


def extract_features(epoch: Epoch) -> FeatureVector:
    masks = [window_mask(epoch, lo, hi) for _, lo, hi in WINDOWS]
    values = []
    for ch in epoch.channels:
        for sig in (ch.hbo, ch.hbr):
            values.extend(float(sig[m].mean()) for m in masks)
    return FeatureVector(np.array(values), epoch.task, feature_names(epoch.channel_ids),
                         epoch.subject_id)


def feature_matrix(epochs: list[Epoch]) -> tuple[np.ndarray, np.ndarray, list[str], list[str]]:
    """``X``, integer labels, feature names and subject ids for a list of epochs."""
    if not epochs:
        raise DataError("no epochs")
    vecs = [extract_features(e) for e in epochs]
    names = vecs[0].feature_names
    for v in vecs:
        if v.feature_names != names:
            raise DimensionMismatch("epochs disagree on channel layout")
    x = np.vstack([v.values for v in vecs])
    y = np.array([int(v.label) for v in vecs], dtype=np.int64)
    return x, y, names, [v.subject_id for v in vecs]


def write_features(path: str | Path, x: np.ndarray, y: np.ndarray, names: list[str],
                   subjects: list[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    subjects = subjects or [""] * len(y)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + ["label", "subject_id"])
        for row, label, subj in zip(x, y, subjects):
            w.writerow(["%.17g" % v for v in row] + [Task(int(label)).name, subj])
    return path


def read_features(path: str | Path) -> tuple[np.ndarray, np.ndarray, list[str], list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    if "label" not in header:
        raise DataError(f"{path}: no label column")
    li = header.index("label")
    names = header[:li]
    x = np.array([[float(v) for v in r[:li]] for r in rows]).reshape(len(rows), li)
    y = np.array([Task.parse(r[li]).value for r in rows], dtype=np.int64)
    si = header.index("subject_id") if "subject_id" in header else None
    subjects = [r[si] if si is not None else "" for r in rows]
    return x, y, names, subjects


# --------------------------------------------------------------- importance


@dataclass
class ImportanceReport:
    names: list[str]
    mean: np.ndarray
    std: np.ndarray
    baseline_accuracy: float

    @property
    def ranking(self) -> list[str]:
        order = sorted(range(len(self.names)), key=lambda i: (-self.mean[i], self.names[i]))
        return [self.names[i] for i in order]

    def rows(self) -> list[tuple[str, float, float]]:
        idx = {n: i for i, n in enumerate(self.names)}
        return [(n, float(self.mean[idx[n]]), float(self.std[idx[n]])) for n in self.ranking]

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "feature", "importance_mean", "importance_std"])
            for k, (n, m, s) in enumerate(self.rows(), 1):
                w.writerow([k, n, "%.17g" % m, "%.17g" % s])
        return path


def _accuracy(model, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.asarray(model.predict(x)) == y))


def permutation_importance(model, x: np.ndarray, y: np.ndarray, repeats: int = 20, seed: int = 0,
                           names: list[str] | None = None) -> ImportanceReport:
    """Accuracy drop when one column is shuffled, averaged over ``repeats``.

    Each (feature, repeat) pair draws its permutation from a generator seeded
    with ``(seed, feature, repeat)``, so reports do not depend on evaluation order.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or len(x) != len(y):
        raise DimensionMismatch(f"X has shape {x.shape} but y has {len(y)} labels")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    names = list(names) if names is not None else [f"f{i}" for i in range(x.shape[1])]
    if len(names) != x.shape[1]:
        raise DimensionMismatch(f"{len(names)} names for {x.shape[1]} columns")
    base = _accuracy(model, x, y)
    drops = np.zeros((x.shape[1], repeats))
    work = x.copy()
    for f in range(x.shape[1]):
        col = x[:, f].copy()
        for r in range(repeats):
            rng = np.random.default_rng([seed, f, r])
            work[:, f] = col[rng.permutation(len(col))]
            drops[f, r] = base - _accuracy(model, work, y)
        work[:, f] = col
    return ImportanceReport(names, drops.mean(axis=1), drops.std(axis=1), base)


def channel_of(feature: str) -> str:
    return feature.rsplit("_", 2)[0]


def select_channel(report: ImportanceReport) -> str:
    """Channel of the top-ranked feature; equal top scores go to the smallest id."""
    if not report.names:
        raise DataError("empty importance report")
    best: dict[str, float] = {}
    for n, m in zip(report.names, report.mean):
        ch = channel_of(n)
        best[ch] = max(best.get(ch, -np.inf), float(m))
    top = max(best.values())
    return min(ch for ch, v in best.items() if v == top)
