"""Optical density to haemoglobin, zero-phase band-pass, epoching, baseline.

The chain applied to a recording by :func:`preprocess_recording` is::

    OD --(modified Beer-Lambert)--> HbO/HbR --(Butterworth filtfilt)-->
    epochs [-5, 25] s --(subtract mean over [-1, 0] s)--> Epoch

Filtering runs on the continuous recording before segmentation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (ConfigError, DataError, InvalidBand, MarkerOutOfBounds, SeriesTooShort,
                     SingularCoefficients)
from .ingest import (EPOCH_END_S, EPOCH_START_S, ChannelSeries, Recording, Task, TrialMarker,
                     epoch_window)

# ----------------------------------------------------------------- Beer-Lambert


@dataclass
class BeerLambertCoefficients:
    """Extinction matrix (rows: wavelengths, cols: HbO, HbR), DPFs and distance."""

    extinction: np.ndarray
    dpf: tuple[float, float] = (6.0, 6.0)
    source_detector_distance: float = 3.0

    def __post_init__(self):
        self.extinction = np.asarray(self.extinction, dtype=np.float64).reshape(2, 2)
        self.dpf = tuple(float(v) for v in self.dpf)
        if min(self.dpf) <= 0 or self.source_detector_distance <= 0:
            raise ConfigError("dpf and source-detector distance must be positive")

    def scaled_matrix(self) -> np.ndarray:
        """Extinction rows multiplied by their path length ``dpf_i * distance``."""
        return self.extinction * (np.asarray(self.dpf) * self.source_detector_distance)[:, None]

    def check(self) -> None:
        det = np.linalg.det(self.extinction)
        if not abs(det) > 1e-12 * np.linalg.norm(self.extinction) ** 2:
            raise SingularCoefficients(f"extinction matrix is singular (det={det:.3g})")

    @classmethod
    def identity(cls) -> "BeerLambertCoefficients":
        return cls(np.eye(2), (1.0, 1.0), 1.0)

    @classmethod
    def from_json(cls, path: str | Path) -> "BeerLambertCoefficients":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls(raw["extinction"], tuple(raw["dpf"]), float(raw["source_detector_distance_cm"]))
        except (OSError, KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"cannot read coefficients from {path}: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "extinction": self.extinction.tolist(),
            "dpf": list(self.dpf),
            "source_detector_distance_cm": self.source_detector_distance,
        }


def default_coefficients() -> BeerLambertCoefficients:
    """760/850 nm extinction table, DPF 6, 3 cm separation."""
    with resources.as_file(resources.files("gafnirs") / "data" / "beer_lambert_760_850.json") as p:
        return BeerLambertCoefficients.from_json(p)


@dataclass
class HbSeries:
    channel_id: str
    hbo: np.ndarray
    hbr: np.ndarray


def od_to_hb(series: ChannelSeries, coeff: BeerLambertCoefficients) -> HbSeries:
    coeff.check()
    inv = np.linalg.inv(coeff.scaled_matrix())
    od = np.vstack([series.od_wl1, series.od_wl2])
    hb = inv @ od
    return HbSeries(series.channel_id, hb[0], hb[1])


# ---------------------------------------------------------------------- filters


@dataclass
class FilterSpec:
    order: int = 3
    passband_low_hz: float = 0.01
    passband_high_hz: float = 0.09

    def check(self, sample_rate_hz: float) -> None:
        if self.order < 1:
            raise ConfigError("filter order must be positive")
        if not 0 < self.passband_low_hz < self.passband_high_hz < sample_rate_hz / 2:
            raise InvalidBand(
                f"need 0 < {self.passband_low_hz} < {self.passband_high_hz} < "
                f"Nyquist ({sample_rate_hz / 2})")


def butterworth_coefficients(spec: FilterSpec, sample_rate_hz: float) -> np.ndarray:
    """Digital Butterworth band-pass as second-order sections.

    Returns an ``(order, 6)`` array of rows ``[b0, b1, b2, 1, a1, a2]``. The
    analog low-pass prototype is shifted to the band with the usual
    ``s -> (s^2 + w0^2) / (bw s)`` map and discretised by the bilinear
    transform with the band edges pre-warped.
    """
    spec.check(sample_rate_hz)
    n = spec.order
    fs2 = 2.0 * sample_rate_hz
    w1 = fs2 * math.tan(math.pi * spec.passband_low_hz / sample_rate_hz)
    w2 = fs2 * math.tan(math.pi * spec.passband_high_hz / sample_rate_hz)
    if not (math.isfinite(w2) and w2 - w1 > 1e-12 * w2):
        raise InvalidBand("pre-warped band edges collapse")
    bw, w0 = w2 - w1, math.sqrt(w1 * w2)

    proto = np.exp(1j * np.pi * (2 * np.arange(1, n + 1) + n - 1) / (2 * n))
    pairs = []
    for p in proto:
        if p.imag < -1e-12:
            continue  # handled with its conjugate
        half = p * bw / 2
        root = np.sqrt(half * half - w0 * w0 + 0j)
        q1, q2 = half + root, half - root
        if abs(p.imag) <= 1e-12:
            pairs.append((q1, q2))
        else:
            pairs.append((q1, np.conj(q1)))
            pairs.append((q2, np.conj(q2)))
    s_poles = np.array([q for pr in pairs for q in pr])
    # n analog zeros at s=0 map to z=1, the n at infinity to z=-1
    gain = float(np.real((bw / fs2) ** n * np.prod(fs2 / (fs2 - s_poles))))

    sos = np.zeros((n, 6))
    per = abs(gain) ** (1.0 / n)
    for k, (q1, q2) in enumerate(pairs):
        z1, z2 = (fs2 + q1) / (fs2 - q1), (fs2 + q2) / (fs2 - q2)
        sos[k] = [per, 0.0, -per, 1.0, -np.real(z1 + z2), np.real(z1 * z2)]
    if gain < 0:
        sos[0, :3] *= -1
    # sections ordered by increasing pole radius
    radius = np.array([max(abs(np.roots(s[3:]))) for s in sos])
    sos = sos[np.argsort(radius, kind="stable")]
    if not np.all(radius < 1):
        raise InvalidBand("designed filter is unstable")
    return sos


def frequency_response(sos: np.ndarray, freqs_hz, sample_rate_hz: float) -> np.ndarray:
    """Complex response of the cascade at the given frequencies."""
    zinv = np.exp(-2j * np.pi * np.asarray(freqs_hz, dtype=np.float64) / sample_rate_hz)
    h = np.ones_like(zinv)
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 * zinv + b2 * zinv**2) / (a0 + a1 * zinv + a2 * zinv**2)
    return h


def pad_length(sos: np.ndarray) -> int:
    return 3 * 2 * len(sos)


def sos_initial_state(sos: np.ndarray) -> np.ndarray:
    """Per-section state ``(sections, 2)`` for a unit step held since -inf."""
    zi = np.zeros((len(sos), 2))
    scale = 1.0
    for s, (b0, b1, b2, _, a1, a2) in enumerate(sos):
        g = (b0 + b1 + b2) / (1.0 + a1 + a2)
        zi[s] = [g - b0, b2 - a2 * g]
        zi[s] *= scale
        scale *= g
    return zi


def _forward_backward(x: np.ndarray, sos: np.ndarray, pad: int) -> np.ndarray:
    left = 2 * x[:, :1] - x[:, pad:0:-1]
    right = 2 * x[:, -1:] - x[:, -2:-pad - 2:-1]
    ext = np.ascontiguousarray(np.concatenate([left, x, right], axis=1))
    zi0 = sos_initial_state(sos)
    zi = np.ascontiguousarray(zi0[:, None, :] * ext[None, :, 0, None])
    y = kernels.sosfilt(sos, ext, zi)
    rev = np.ascontiguousarray(y[:, ::-1])
    zi = np.ascontiguousarray(zi0[:, None, :] * rev[None, :, 0, None])
    y = kernels.sosfilt(sos, rev, zi)[:, ::-1]
    return y[:, pad:-pad]


def filtfilt(x, sos: np.ndarray) -> np.ndarray:
    """Zero-phase filtering along the last axis (1-D or 2-D input).

    Each edge is extended by odd reflection over ``6 * sections`` samples and
    the cascade starts from its step steady state. The result is the mean of
    the forward-backward and backward-forward passes, which makes the output
    exactly equivariant under time reversal.
    """
    x = np.asarray(x, dtype=np.float64)
    one_d = x.ndim == 1
    x2 = np.atleast_2d(x)
    pad = pad_length(sos)
    if x2.shape[1] <= 3 * pad:
        raise SeriesTooShort(f"need more than {3 * pad} samples, got {x2.shape[1]}")
    sos = np.ascontiguousarray(sos, dtype=np.float64)
    fb = _forward_backward(x2, sos, pad)
    bf = _forward_backward(x2[:, ::-1], sos, pad)[:, ::-1]
    y = 0.5 * (fb + bf)
    return y[0] if one_d else y


# ----------------------------------------------------------------------- epochs


@dataclass
class Epoch:
    trial_index: int
    task: Task
    channels: list[HbSeries]
    sample_rate_hz: float
    onset_sample: int = 0
    subject_id: str = ""
    t_start_s: float = EPOCH_START_S
    t_end_s: float = EPOCH_END_S
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.channels[0].hbo) if self.channels else 0

    @property
    def first_offset(self) -> int:
        """Sample offset of the first epoch sample relative to the onset."""
        return round(self.t_start_s * self.sample_rate_hz)

    def times(self) -> np.ndarray:
        return (self.first_offset + np.arange(len(self))) / self.sample_rate_hz

    def offsets(self) -> np.ndarray:
        return self.first_offset + np.arange(len(self))

    def channel(self, channel_id: str) -> HbSeries:
        for ch in self.channels:
            if ch.channel_id == channel_id:
                return ch
        raise DataError(f"epoch {self.trial_index} has no channel {channel_id!r}")

    @property
    def channel_ids(self) -> list[str]:
        return [c.channel_id for c in self.channels]


def segment_epochs(rec_hb: list[HbSeries], markers: list[TrialMarker], rate: float,
                   subject_id: str = "") -> list[Epoch]:
    length = len(rec_hb[0].hbo) if rec_hb else 0
    epochs = []
    for i, m in enumerate(markers):
        start, stop = epoch_window(m.onset_sample, rate)
        if start < 0 or stop > length:
            raise MarkerOutOfBounds(m.onset_sample, length)
        chans = [HbSeries(h.channel_id, h.hbo[start:stop].copy(), h.hbr[start:stop].copy())
                 for h in rec_hb]
        epochs.append(Epoch(i, m.task, chans, rate, m.onset_sample, subject_id))
    return epochs


def baseline_window(epoch: Epoch) -> np.ndarray:
    """Mask of samples with t in [-1, 0] s."""
    k = epoch.offsets()
    return (k >= math.ceil(-1.0 * epoch.sample_rate_hz - 1e-9)) & (k <= 0)


def baseline_correct(epoch: Epoch) -> Epoch:
    mask = baseline_window(epoch)
    chans = [HbSeries(c.channel_id, c.hbo - c.hbo[mask].mean(), c.hbr - c.hbr[mask].mean())
             for c in epoch.channels]
    return Epoch(epoch.trial_index, epoch.task, chans, epoch.sample_rate_hz, epoch.onset_sample,
                 epoch.subject_id, epoch.t_start_s, epoch.t_end_s, dict(epoch.meta))


def preprocess_recording(rec: Recording, spec: FilterSpec | None = None,
                         coeff: BeerLambertCoefficients | None = None) -> list[Epoch]:
    spec = spec or FilterSpec()
    coeff = coeff or default_coefficients()
    sos = butterworth_coefficients(spec, rec.sample_rate_hz)
    hb = [od_to_hb(ch, coeff) for ch in rec.channels]
    if not hb:
        return []
    stacked = np.vstack([h.hbo for h in hb] + [h.hbr for h in hb])
    filtered = filtfilt(stacked, sos)
    c = len(hb)
    hb = [HbSeries(h.channel_id, filtered[k], filtered[c + k]) for k, h in enumerate(hb)]
    epochs = segment_epochs(hb, rec.markers, rec.sample_rate_hz, rec.subject_id)
    return [baseline_correct(e) for e in epochs]


# -------------------------------------------------------------------------- I/O


def write_epochs(epochs: list[Epoch], directory: str | Path, extra: dict | None = None) -> Path:
    """One CSV per epoch (``t,<ch>_hbo,<ch>_hbr,...``) plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for e in epochs:
        name = f"{e.subject_id or 'epoch'}_{e.trial_index:04d}.csv"
        cols, header = [e.times()], ["t"]
        for c in e.channels:
            cols += [c.hbo, c.hbr]
            header += [f"{c.channel_id}_hbo", f"{c.channel_id}_hbr"]
        table = np.column_stack(cols)
        with open(directory / name, "w", newline="", encoding="utf-8") as fh:
            fh.write(",".join(header) + "\n")
            for row in table:
                fh.write(",".join("%.17g" % v for v in row) + "\n")
        entries.append({
            "file": name,
            "subject_id": e.subject_id,
            "trial_index": e.trial_index,
            "task": e.task.name,
            "onset_sample": e.onset_sample,
            "sample_rate_hz": e.sample_rate_hz,
            "t_start_s": e.t_start_s,
            "t_end_s": e.t_end_s,
        })
    manifest = {"kind": "epochs", "epochs": entries, **(extra or {})}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return directory


def read_epoch_csv(path: str | Path, task: Task | str | int = Task.MI, sample_rate_hz: float | None = None,
                   trial_index: int = 0, subject_id: str = "", onset_sample: int = 0) -> Epoch:
    """One epoch CSV (``t,<ch>_hbo,<ch>_hbr,...``); the rate defaults to 1 / t-step."""
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None
    if not header or header[0] != "t" or len(header) % 2 == 0 or table.shape[1] != len(header):
        raise DataError(f"{path}: expected columns t,<ch>_hbo,<ch>_hbr,...")
    if len(table) < 2:
        raise DataError(f"{path}: an epoch needs at least 2 samples")
    rate = sample_rate_hz or 1.0 / (table[1, 0] - table[0, 0])
    chans = []
    for j in range(1, len(header), 2):
        if not (header[j].endswith("_hbo") and header[j + 1].endswith("_hbr")):
            raise DataError(f"{path}: column pair {header[j]!r}, {header[j + 1]!r} is not _hbo/_hbr")
        chans.append(HbSeries(header[j][: -len("_hbo")], table[:, j].copy(), table[:, j + 1].copy()))
    t0 = float(table[0, 0])
    return Epoch(trial_index, Task.parse(task), chans, float(rate), onset_sample, subject_id,
                 t0, t0 + (len(table) - 1) / rate)


def load_epochs(directory: str | Path) -> list[Epoch]:
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.exists():
        raise DataError(f"{directory}: no manifest.json")
    manifest = json.loads(mpath.read_text(encoding="utf-8"))
    epochs = []
    for entry in manifest["epochs"]:
        e = read_epoch_csv(directory / entry["file"], entry["task"], entry["sample_rate_hz"],
                           entry["trial_index"], entry.get("subject_id", ""),
                           entry.get("onset_sample", 0))
        e.t_start_s = entry.get("t_start_s", EPOCH_START_S)
        e.t_end_s = entry.get("t_end_s", EPOCH_END_S)
        epochs.append(e)
    return epochs
