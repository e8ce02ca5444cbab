"""Gramian angular field images of univariate series."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, EmptySeries, NonFiniteValue, TargetTooLarge
from .ingest import Task
from .preprocess import Epoch


class GafKind(str, enum.Enum):
    GASF = "gasf"
    GADF = "gadf"


@dataclass
class RescaledSeries:
    values: np.ndarray
    original_min: float
    original_max: float


@dataclass
class GafImage:
    matrix: np.ndarray
    kind: GafKind
    channel_id: str = ""
    task: Task | None = None
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def rescale(x) -> RescaledSeries:
    """Min-max map onto [-1, 1]; a constant series maps to all zeros."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise EmptySeries("cannot rescale an empty series")
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue("series contains NaN or inf")
    lo, hi = float(x.min()), float(x.max())
    if hi > lo:
        span = hi - lo
        v = (2 * (x - lo) - span) / span
        # pin the extremes; the formula can miss +-1 by an ulp
        v[x == lo] = -1.0
        v[x == hi] = 1.0
        v = np.clip(v, -1.0, 1.0)
    else:
        v = np.zeros_like(x)
    return RescaledSeries(v, lo, hi)


def polar_angles(s: RescaledSeries) -> np.ndarray:
    return np.arccos(s.values)


def gasf(s: RescaledSeries, channel_id: str = "", task: Task | None = None) -> GafImage:
    """cos(phi_i + phi_j), evaluated as x_i x_j - sqrt(1 - x_i^2) sqrt(1 - x_j^2)."""
    x = s.values
    root = np.sqrt(np.clip(1.0 - x * x, 0.0, 1.0))
    g = np.outer(x, x) - np.outer(root, root)
    return GafImage(np.clip(g, -1.0, 1.0), GafKind.GASF, channel_id, task)


def gadf(s: RescaledSeries, channel_id: str = "", task: Task | None = None) -> GafImage:
    """sin(phi_i - phi_j) = sqrt(1 - x_i^2) x_j - x_i sqrt(1 - x_j^2)."""
    x = s.values
    root = np.sqrt(np.clip(1.0 - x * x, 0.0, 1.0))
    a = np.outer(root, x)
    g = a - a.T
    return GafImage(g, GafKind.GADF, channel_id, task)


def paa_downsample(x, target_n: int) -> np.ndarray:
    """Piecewise aggregate approximation onto ``target_n`` segment means.

    Segment ``k`` covers ``[floor(k n / N), floor((k + 1) n / N))``, so
    segment lengths differ by at most one sample.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if target_n < 1:
        raise ConfigError("target_n must be positive")
    if target_n > n:
        raise TargetTooLarge(f"cannot reduce {n} samples to {target_n}")
    if n % target_n == 0:
        return x.reshape(target_n, -1).mean(axis=1)
    edges = (np.arange(target_n + 1) * n) // target_n
    sums = np.add.reduceat(x, edges[:-1])
    return sums / np.diff(edges)


def encode_epoch(epoch: Epoch, channel_id: str, kind: GafKind | str = GafKind.GASF,
                 size: int = 64, signal: str = "hbo", full_window: bool = False) -> GafImage:
    """GAF image of one epoch channel (post-onset samples unless ``full_window``)."""
    kind = GafKind(kind)
    ch = epoch.channel(channel_id)
    if signal not in ("hbo", "hbr"):
        raise ConfigError(f"signal must be 'hbo' or 'hbr', got {signal!r}")
    x = ch.hbo if signal == "hbo" else ch.hbr
    if not full_window:
        x = x[epoch.offsets() >= 0]
    x = paa_downsample(x, size)
    s = rescale(x)
    img = (gasf if kind is GafKind.GASF else gadf)(s, channel_id, epoch.task)
    img.meta = {"subject_id": epoch.subject_id, "trial_index": epoch.trial_index,
                "signal": signal, "full_window": full_window}
    return img


# -------------------------------------------------------------------------- I/O


def to_pixels(matrix: np.ndarray) -> np.ndarray:
    """Linear map [-1, 1] -> [0, 255] with halves rounded up."""
    v = (np.clip(matrix, -1.0, 1.0) + 1.0) * 127.5
    return np.floor(v + 0.5).astype(np.int64)


def export_image(img: GafImage, path: str | Path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (raw matrix) and ``<path>.pgm`` (8-bit plain graymap)."""
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".csv", ".pgm") else path
    csv_path, pgm_path = base.with_suffix(".csv"), base.with_suffix(".pgm")
    try:
        base.parent.mkdir(parents=True, exist_ok=True)
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            for row in img.matrix:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        px = to_pixels(img.matrix)
        n_rows, n_cols = px.shape
        lines = [f"P2 {n_cols} {n_rows} 255"] + [" ".join(map(str, r)) for r in px]
        pgm_path.write_text("\n".join(lines) + "\n", encoding="ascii")
    except OSError as exc:
        raise DataError(f"cannot write image {base}: {exc}") from exc
    return csv_path, pgm_path


def read_image_csv(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def read_pgm(path: str | Path) -> np.ndarray:
    tokens = Path(path).read_text(encoding="ascii").split()
    if tokens[0] != "P2":
        raise DataError(f"{path}: not a plain PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.array(tokens[4:4 + w * h], dtype=np.int64).reshape(h, w)


def write_image_set(images: list[GafImage], directory: str | Path, extra: dict | None = None) -> Path:
    """Export images plus ``labels.csv`` (image_file,task) and ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, img in enumerate(images):
        stem = f"{img.meta.get('subject_id') or 'img'}_{img.meta.get('trial_index', k):04d}"
        csv_path, pgm_path = export_image(img, directory / stem)
        rows.append({"image_file": csv_path.name, "pgm_file": pgm_path.name,
                     "task": img.task.name if img.task is not None else "",
                     "subject_id": img.meta.get("subject_id", ""),
                     "trial_index": img.meta.get("trial_index", k)})
    with open(directory / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_file", "task"])
        for r in rows:
            writer.writerow([r["image_file"], r["task"]])
    manifest = {"kind": "gaf_images", "images": rows, **(extra or {})}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return directory


def load_image_set(directory: str | Path) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Images stacked as ``(n, 1, size, size)``, integer labels, subject ids."""
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if mpath.exists():
        rows = json.loads(mpath.read_text(encoding="utf-8"))["images"]
    else:
        with open(directory / "labels.csv", newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    if not rows:
        raise DataError(f"{directory}: no images")
    mats = [read_image_csv(directory / r["image_file"]) for r in rows]
    x = np.stack(mats)[:, None, :, :]
    y = np.array([Task.parse(r["task"]).value for r in rows], dtype=np.int64)
    subjects = [r.get("subject_id", "") for r in rows]
    return x, y, subjects
