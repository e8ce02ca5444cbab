"""Recordings: CSV loading/writing, validation and the synthetic generator.

On-disk layout of one recording directory::

    recording.csv   t,<ch>_wl1,<ch>_wl2,...   one row per sample
    markers.csv     onset_sample,task         task in {MI, MA, IS}
    meta.json       {"subject_id": ..., "sample_rate_hz": ...}   (optional)

When ``meta.json`` is absent the sample rate is taken from the first two
``t`` values and the subject id from the directory name.

The synthetic generator draws everything from numpy's PCG64 bit generator
seeded with the configured 64-bit seed, so a seed reproduces a recording bit
for bit on the same numpy version.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, MarkerOutOfBounds, MissingColumn, NonNumericCell

EPOCH_START_S = -5.0
EPOCH_END_S = 25.0


class Task(enum.IntEnum):
    MI = 0
    MA = 1
    IS = 2

    @classmethod
    def parse(cls, value: str | int | "Task") -> "Task":
        if isinstance(value, Task):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        try:
            return cls[value.strip().upper()]
        except KeyError:
            raise DataError(f"unknown task {value!r}; expected one of MI, MA, IS") from None


@dataclass
class ChannelSeries:
    channel_id: str
    od_wl1: np.ndarray
    od_wl2: np.ndarray

    def __post_init__(self):
        self.od_wl1 = np.asarray(self.od_wl1, dtype=np.float64)
        self.od_wl2 = np.asarray(self.od_wl2, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.od_wl1)


@dataclass(frozen=True)
class TrialMarker:
    onset_sample: int
    task: Task


@dataclass
class Recording:
    subject_id: str
    sample_rate_hz: float
    channels: list[ChannelSeries]
    markers: list[TrialMarker]

    def __len__(self) -> int:
        return len(self.channels[0]) if self.channels else 0

    @property
    def channel_ids(self) -> list[str]:
        return [c.channel_id for c in self.channels]

    def validate(self) -> "Recording":
        """Check the recording invariants, raising on the first violation."""
        if not self.sample_rate_hz > 0:
            raise DataError(f"sample rate must be positive, got {self.sample_rate_hz}")
        n = len(self)
        seen = set()
        for ch in self.channels:
            if ch.channel_id in seen:
                raise DataError(f"duplicate channel id {ch.channel_id!r}")
            seen.add(ch.channel_id)
            if len(ch.od_wl1) != n or len(ch.od_wl2) != n:
                raise DataError(f"channel {ch.channel_id!r} length differs from {n}")
            if not (np.all(np.isfinite(ch.od_wl1)) and np.all(np.isfinite(ch.od_wl2))):
                raise DataError(f"channel {ch.channel_id!r} has non-finite values")
        prev = -1
        for m in self.markers:
            if m.onset_sample < prev:
                raise DataError("markers are not sorted by onset_sample")
            prev = m.onset_sample
            check_marker(m.onset_sample, n, self.sample_rate_hz)
        return self


def epoch_window(onset: int, rate: float) -> tuple[int, int]:
    """Absolute [start, stop) sample range of the epoch around ``onset``."""
    start = onset + round(EPOCH_START_S * rate)
    n = round((EPOCH_END_S - EPOCH_START_S) * rate) + 1
    return start, start + n


def check_marker(onset: int, length: int, rate: float) -> None:
    start, stop = epoch_window(onset, rate)
    if onset - math.ceil(-EPOCH_START_S * rate) < 0 or start < 0:
        raise MarkerOutOfBounds(onset, length, " (not enough pre-trial samples)")
    if onset + math.ceil(EPOCH_END_S * rate) > length or stop > length:
        raise MarkerOutOfBounds(onset, length, " (window overruns the recording)")


# --------------------------------------------------------------------------- CSV


@dataclass
class FormatSpec:
    """Column mapping of a recording CSV.

    ``channels`` restricts/orders the channels to load; ``None`` discovers every
    ``<ch><wl1_suffix>`` / ``<ch><wl2_suffix>`` pair in header order.
    """

    time_column: str = "t"
    wl1_suffix: str = "_wl1"
    wl2_suffix: str = "_wl2"
    channels: list[str] | None = None
    onset_column: str = "onset_sample"
    task_column: str = "task"
    recording_file: str = "recording.csv"
    markers_file: str = "markers.csv"
    meta_file: str = "meta.json"


def _parse_float(text: str, row: int, col: str, path: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise NonNumericCell(row, col, text, path) from None


def _read_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    # newline="" keeps csv in charge of LF / CRLF handling
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    return header, rows


def load_recording(path: str | Path, format_spec: FormatSpec | None = None) -> Recording:
    """Load a recording directory (or a recording CSV with sibling files)."""
    fmt = format_spec or FormatSpec()
    path = Path(path)
    if path.is_dir():
        rec_path = path / fmt.recording_file
        root = path
    else:
        rec_path, root = path, path.parent
    if not rec_path.exists():
        raise DataError(f"{rec_path}: no such file")

    header, rows = _read_rows(rec_path)
    if fmt.time_column not in header:
        raise MissingColumn(fmt.time_column, str(rec_path))
    if fmt.channels is None:
        ids = [h[: -len(fmt.wl1_suffix)] for h in header if h.endswith(fmt.wl1_suffix)]
    else:
        ids = list(fmt.channels)
    col_of = {h: i for i, h in enumerate(header)}
    needed = [fmt.time_column]
    for ch in ids:
        needed += [ch + fmt.wl1_suffix, ch + fmt.wl2_suffix]
    for name in needed:
        if name not in col_of:
            raise MissingColumn(name, str(rec_path))

    data = np.empty((len(rows), len(needed)))
    for j, name in enumerate(needed):
        ci = col_of[name]
        cells = [row[ci].strip() if ci < len(row) else "" for row in rows]
        try:
            data[:, j] = np.array(cells, dtype=np.float64)
        except ValueError:
            # slow path only to locate the offending cell; rows are 1-based, header excluded
            for r, cell in enumerate(cells):
                _parse_float(cell, r + 1, name, str(rec_path))
            raise

    meta = {}
    meta_path = root / fmt.meta_file
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    rate = meta.get("sample_rate_hz")
    if rate is None:
        if len(rows) < 2:
            raise DataError(f"{rec_path}: cannot infer sample rate from fewer than 2 rows")
        rate = 1.0 / (data[1, 0] - data[0, 0])
    subject = meta.get("subject_id", root.name)

    channels = [
        ChannelSeries(ch, data[:, 1 + 2 * k].copy(), data[:, 2 + 2 * k].copy())
        for k, ch in enumerate(ids)
    ]
    markers = load_markers(root / fmt.markers_file, fmt)
    rec = Recording(str(subject), float(rate), channels, markers)
    return rec.validate()


def load_markers(path: Path, fmt: FormatSpec | None = None) -> list[TrialMarker]:
    fmt = fmt or FormatSpec()
    if not path.exists():
        return []
    header, rows = _read_rows(path)
    for name in (fmt.onset_column, fmt.task_column):
        if name not in header:
            raise MissingColumn(name, str(path))
    oc, tc = header.index(fmt.onset_column), header.index(fmt.task_column)
    markers = []
    for r, row in enumerate(rows):
        onset = _parse_float(row[oc].strip(), r + 1, fmt.onset_column, str(path))
        if onset != int(onset) or onset < 0:
            raise DataError(f"{path}: row {r + 1}: onset must be a non-negative integer")
        markers.append(TrialMarker(int(onset), Task.parse(row[tc])))
    return sorted(markers, key=lambda m: m.onset_sample)


def write_recording(rec: Recording, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = len(rec)
    cols = [np.arange(n) / rec.sample_rate_hz]
    header = ["t"]
    for ch in rec.channels:
        header += [f"{ch.channel_id}_wl1", f"{ch.channel_id}_wl2"]
        cols += [ch.od_wl1, ch.od_wl2]
    table = np.column_stack(cols) if n else np.empty((0, len(cols)))
    with open(directory / "recording.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join("%.17g" % v for v in row) + "\n")
    with open(directory / "markers.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("onset_sample,task\n")
        for m in rec.markers:
            fh.write(f"{m.onset_sample},{m.task.name}\n")
    meta = {"subject_id": rec.subject_id, "sample_rate_hz": rec.sample_rate_hz}
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return directory


def find_recordings(root: str | Path) -> list[Path]:
    """Recording directories under ``root``: itself, or its immediate subdirectories."""
    root = Path(root)
    if (root / "recording.csv").exists():
        return [root]
    found = sorted(p for p in root.iterdir() if (p / "recording.csv").exists()) if root.is_dir() else []
    if not found:
        raise DataError(f"{root}: no recording.csv found")
    return found


# --------------------------------------------------------------------- synthesis


def canonical_hrf(t: np.ndarray, peak_s: float = 6.0, undershoot_s: float = 16.0,
                  ratio: float = 1 / 6) -> np.ndarray:
    """Double-gamma haemodynamic response with unit peak (gamma modes at the given times)."""
    t = np.asarray(t, dtype=np.float64)
    a1, a2 = peak_s + 1.0, undershoot_s + 1.0
    pos = t > 0
    h = np.zeros_like(t)
    tp = t[pos]
    g1 = np.exp((a1 - 1) * np.log(tp) - tp - math.lgamma(a1))
    g2 = np.exp((a2 - 1) * np.log(tp) - tp - math.lgamma(a2))
    h[pos] = g1 - ratio * g2
    return h / h.max()


def task_response(rate: float, task_s: float = 10.0, length_s: float = 40.0) -> np.ndarray:
    """HRF convolved with a ``task_s`` boxcar, scaled to unit peak."""
    h = canonical_hrf(np.arange(0.0, 32.0, 1.0 / rate))
    box = np.ones(max(1, round(task_s * rate)))
    r = np.convolve(box, h)[: round(length_s * rate)]
    return r / np.abs(r).max()


def default_gains(n_channels: int, informative: int = 6) -> dict[Task, np.ndarray]:
    """Class gains with one strongly informative channel and weaker, mixed others.

    Channel ``informative`` carries well separated response amplitudes (IS
    silent, MI weak, MA strong); the rest respond with smaller, channel-varying
    gains so the windowed-mean features remain informative but imperfect.
    """
    idx = np.arange(n_channels)
    mi = 0.15 + 0.1 * np.cos(idx)
    ma = 0.15 + 0.1 * np.sin(idx)
    is_ = np.zeros(n_channels)
    if 0 <= informative < n_channels:
        mi[informative], ma[informative] = 0.15, 1.0
    return {Task.MI: mi, Task.MA: ma, Task.IS: is_}


@dataclass
class SynthesisConfig:
    """Synthetic recording parameters.

    Gains are haemoglobin-concentration amplitudes (HbO; HbR responds with
    ``-hbr_ratio`` times the gain) in the units of the Beer-Lambert table;
    ``noise_sd`` and ``drift_amplitude`` are in optical-density units.
    """

    n_trials_per_class: int = 30
    noise_sd: float = 0.01
    drift_amplitude: float = 0.005
    seed: int = 0
    class_response_gains: dict | None = None
    n_channels: int = 16
    sample_rate_hz: float = 13.3
    subject_id: str = "sub01"
    task_duration_s: float = 10.0
    rest_range_s: tuple[float, float] = (16.0, 18.0)
    hbr_ratio: float = 1 / 3
    gain_scale: float = 1.0
    coefficients: object = None

    def gains(self) -> dict[Task, np.ndarray]:
        src = self.class_response_gains or default_gains(self.n_channels)
        out = {}
        for task in Task:
            g = np.asarray(src.get(task, src.get(task.name, np.zeros(self.n_channels))),
                           dtype=np.float64)
            if g.shape == ():
                g = np.full(self.n_channels, float(g))
            if g.shape != (self.n_channels,):
                raise ConfigError(f"gain vector for {task.name} has shape {g.shape}, "
                                  f"expected ({self.n_channels},)")
            out[task] = g * self.gain_scale
        return out

    def validate(self) -> "SynthesisConfig":
        if self.n_trials_per_class < 1:
            raise ConfigError("n_trials_per_class must be >= 1")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.sample_rate_hz <= 0 or self.n_channels < 1:
            raise ConfigError("sample_rate_hz and n_channels must be positive")
        lo, hi = self.rest_range_s
        if not 0 <= lo <= hi:
            raise ConfigError("rest_range_s must satisfy 0 <= low <= high")
        self.gains()
        return self


def synthesize_recording(cfg: SynthesisConfig) -> Recording:
    """Generate a labelled OD recording (see :class:`SynthesisConfig`)."""
    from .preprocess import default_coefficients  # preprocess imports this module

    cfg.validate()
    coeff = cfg.coefficients or default_coefficients()
    rate = cfg.sample_rate_hz
    rng = np.random.Generator(np.random.PCG64(cfg.seed))

    tasks = np.repeat(np.array([t.value for t in Task]), cfg.n_trials_per_class)
    tasks = rng.permutation(tasks)
    lead = math.ceil(-EPOCH_START_S * rate) + 1 + round(5 * rate)
    onsets = []
    pos = float(lead)
    for _ in tasks:
        onsets.append(int(round(pos)))
        pos += (cfg.task_duration_s + rng.uniform(*cfg.rest_range_s)) * rate
    length = onsets[-1] + math.ceil(EPOCH_END_S * rate) + round(10 * rate)

    gains = cfg.gains()
    resp = task_response(rate, cfg.task_duration_s)
    hbo = np.zeros((cfg.n_channels, length))
    for onset, task in zip(onsets, tasks):
        seg = resp[: length - onset]
        hbo[:, onset:onset + len(seg)] += gains[Task(task)][:, None] * seg[None, :]
    hbr = -cfg.hbr_ratio * hbo

    # forward Beer-Lambert: OD_wl = sum_k E[wl, k] * dpf[wl] * d * conc_k
    scaled = coeff.scaled_matrix()
    od1 = scaled[0, 0] * hbo + scaled[0, 1] * hbr
    od2 = scaled[1, 0] * hbo + scaled[1, 1] * hbr

    t = np.arange(length) / rate
    od1 = od1 + rng.normal(0.0, 1.0, od1.shape) * cfg.noise_sd
    od2 = od2 + rng.normal(0.0, 1.0, od2.shape) * cfg.noise_sd
    phases = rng.uniform(0.0, 2 * np.pi, (cfg.n_channels, 2))
    drift = cfg.drift_amplitude * (
        np.sin(2 * np.pi * 0.5 * t[None, :] + phases[:, :1])
        + np.sin(2 * np.pi * 0.005 * t[None, :] + phases[:, 1:])
    )
    od1 = od1 + drift
    od2 = od2 + drift

    width = max(2, len(str(cfg.n_channels)))
    channels = [
        ChannelSeries(f"ch{k + 1:0{width}d}", od1[k], od2[k]) for k in range(cfg.n_channels)
    ]
    markers = [TrialMarker(o, Task(int(t_))) for o, t_ in zip(onsets, tasks)]
    return Recording(cfg.subject_id, rate, channels, markers).validate()
