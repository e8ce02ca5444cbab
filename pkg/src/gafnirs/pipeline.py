"""End-to-end pipeline: ingest, preprocess, features/importance, GAF encode, train, evaluate.

A run is driven by one JSON config (:class:`PipelineConfig`). Each stage
writes its artifacts under ``<output>/<stage>/`` together with a
``manifest.json``; ``<output>/report.json`` holds the evaluation metrics and
contains nothing run-dependent (no timings, no absolute paths), so identical
inputs and config give a byte-identical report.
"""

from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .crossval import MetricsReport, run_cv
from .errors import ConfigError, DataError, GafnirsError
from .features import feature_matrix, permutation_importance, select_channel, write_features
from .gaf import GafKind, encode_epoch, write_image_set
from .ingest import find_recordings, load_recording
from .nn.baselines import KNN, LogisticRegression
from .nn.network import NetworkSpec
from .nn.serialize import save_model
from .nn.train import TrainConfig, train
from .preprocess import (BeerLambertCoefficients, Epoch, FilterSpec, default_coefficients,
                         preprocess_recording, write_epochs)

log = logging.getLogger("gafnirs")

DEFAULTS: dict = {
    "seed": 0,
    "paths": {"input": "data", "output": "run"},
    "preprocess": {"order": 3, "passband_low_hz": 0.01, "passband_high_hz": 0.09,
                   "coefficients": None},
    "features": {"enabled": True, "importance_model": "logreg", "repeats": 20},
    "gaf": {"channel": "auto", "kind": "gasf", "size": 64, "signal": "hbo", "full_window": False},
    "model": {"network": None, "train": {}, "fit_final": True},
    "eval": {"k": 10, "stratified": True, "baseline": "logreg"},
    # read by the synth subcommand only; kept here so one file drives a whole experiment
    "synth": {},
}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where + key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict) and key not in ("train", "synth"):
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = copy.deepcopy(value)
    return out


def set_key(raw: dict, dotted: str, value) -> None:
    """Set ``a.b.c`` in a nested dict (used for command-line overrides)."""
    *parents, last = dotted.split(".")
    node = raw
    for p in parents:
        node = node.setdefault(p, {})
    node[last] = value


@dataclass
class PipelineConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str | Path | None = None) -> "PipelineConfig":
        return cls(_merge(DEFAULTS, raw), Path(base_dir) if base_dir else Path.cwd())

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(raw, path.parent)

    def path(self, value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    # typed views --------------------------------------------------------------
    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def input_dir(self) -> Path:
        return self.path(self.raw["paths"]["input"])

    @property
    def output_dir(self) -> Path:
        return self.path(self.raw["paths"]["output"])

    def filter_spec(self) -> FilterSpec:
        p = self.raw["preprocess"]
        return FilterSpec(int(p["order"]), float(p["passband_low_hz"]), float(p["passband_high_hz"]))

    def coefficients(self) -> BeerLambertCoefficients:
        src = self.raw["preprocess"]["coefficients"]
        return default_coefficients() if src is None else BeerLambertCoefficients.from_json(self.path(src))

    def network_spec(self) -> NetworkSpec:
        size = int(self.raw["gaf"]["size"])
        net = self.raw["model"]["network"]
        if net is None:
            return NetworkSpec.default(size)
        if isinstance(net, str):
            return NetworkSpec.load(self.path(net))
        return NetworkSpec.from_dict(net)

    def train_config(self) -> TrainConfig:
        t = self.raw["model"]["train"]
        if isinstance(t, str):
            return TrainConfig.load(self.path(t))
        return TrainConfig.from_dict(dict(t))

    def validate(self) -> "PipelineConfig":
        """Check everything that can be checked before touching data."""
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        coeff = self.raw["preprocess"]["coefficients"]
        if coeff is not None and not self.path(coeff).is_file():
            raise ConfigError(f"coefficients file not found: {self.path(coeff)}")
        self.coefficients().check()
        spec = self.filter_spec()
        if spec.order < 1 or not 0 < spec.passband_low_hz < spec.passband_high_hz:
            raise ConfigError("invalid filter settings")
        g = self.raw["gaf"]
        try:
            GafKind(g["kind"])
        except ValueError:
            raise ConfigError(f"unknown GAF kind {g['kind']!r}") from None
        if g["signal"] not in ("hbo", "hbr"):
            raise ConfigError(f"signal must be 'hbo' or 'hbr', got {g['signal']!r}")
        if int(g["size"]) < 1:
            raise ConfigError("gaf.size must be positive")
        if g["channel"] == "auto" and not self.raw["features"]["enabled"]:
            raise ConfigError("gaf.channel 'auto' needs the features stage enabled")
        for key in ("importance_model",):
            if self.raw["features"][key] not in ("logreg", "knn"):
                raise ConfigError(f"features.{key} must be 'logreg' or 'knn'")
        if self.raw["eval"]["baseline"] not in ("logreg", "knn"):
            raise ConfigError("eval.baseline must be 'logreg' or 'knn'")
        if int(self.raw["eval"]["k"]) < 2:
            raise ConfigError("eval.k must be >= 2")
        spec_net = self.network_spec().validate()
        if tuple(spec_net.input_shape) != (1, int(g["size"]), int(g["size"])):
            raise ConfigError(f"network input {tuple(spec_net.input_shape)} does not match "
                              f"gaf.size {g['size']}")
        self.train_config()
        if not self.input_dir.exists():
            raise ConfigError(f"input directory not found: {self.input_dir}")
        return self

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


# ------------------------------------------------------------------- models


def make_baseline(name: str):
    if name == "logreg":
        return LogisticRegression()
    if name == "knn":
        return KNN()
    raise ConfigError(f"unknown baseline model {name!r}")


class CNNClassifier:
    """fit / predict_proba wrapper so the CNN plugs into :func:`run_cv`."""

    def __init__(self, spec: NetworkSpec, cfg: TrainConfig, seed: int | None = None):
        self.spec = spec
        self.cfg = TrainConfig(**{**cfg.to_dict(), "seed": cfg.seed if seed is None else seed})
        self.net = None
        self.history = None

    def fit(self, x: np.ndarray, y: np.ndarray) -> "CNNClassifier":
        self.net, self.history = train(self.spec, (x, y), None, self.cfg)
        return self

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return self.net.predict_proba(x)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.predict_proba(x).argmax(axis=1)


def cnn_factory(spec: NetworkSpec, cfg: TrainConfig):
    return lambda seed: CNNClassifier(spec, cfg, seed)


# ------------------------------------------------------------------- stages


class StageError(GafnirsError):
    def __init__(self, stage: str, cause: GafnirsError):
        self.stage, self.cause = stage, cause
        self.exit_code = cause.exit_code
        super().__init__(f"stage {stage!r} failed: {cause}")


def _write_manifest(directory: Path, stage: str, outputs: list[str], **info) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    body = {"stage": stage, "software": {"name": "gafnirs", "version": __version__},
            "outputs": sorted(outputs), **info}
    path = directory / "manifest.json"
    path.write_text(json.dumps(body, indent=2) + "\n", encoding="utf-8")
    return path


def encode_images(epochs: list[Epoch], channel: str, gaf: dict):
    imgs = [encode_epoch(e, channel, gaf["kind"], int(gaf["size"]), gaf["signal"],
                         bool(gaf["full_window"])) for e in epochs]
    x = np.stack([im.matrix for im in imgs])[:, None]
    return imgs, x


@dataclass
class PipelineResult:
    report: dict
    channel: str
    output_dir: Path
    timings: dict


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    cfg.validate()
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    seed = cfg.seed

    def stage(name):
        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()
                log.info("stage %s", name)

            def __exit__(self, et, ev, tb):
                timings[name] = round(time.perf_counter() - self.t0, 3)
                if isinstance(ev, GafnirsError) and not isinstance(ev, StageError):
                    raise StageError(name, ev) from ev
                return False
        return _Ctx()

    with stage("ingest"):
        rec_dirs = find_recordings(cfg.input_dir)
        recordings = [load_recording(d) for d in rec_dirs]
        ids = [r.subject_id for r in recordings]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate subject ids among recordings: {ids}")
        _write_manifest(out / "ingest", "ingest", [], recordings=[
            {"subject_id": r.subject_id, "source": d.name, "samples": len(r),
             "channels": len(r.channels), "markers": len(r.markers),
             "sample_rate_hz": r.sample_rate_hz} for r, d in zip(recordings, rec_dirs)])

    with stage("preprocess"):
        spec, coeff = cfg.filter_spec(), cfg.coefficients()
        epochs: list[Epoch] = []
        outputs = []
        for rec in recordings:
            eps = preprocess_recording(rec, spec, coeff)
            write_epochs(eps, out / "preprocess" / rec.subject_id,
                         {"stage": "preprocess", "subject_id": rec.subject_id})
            outputs.append(f"{rec.subject_id}/manifest.json")
            epochs += eps
        _write_manifest(out / "preprocess", "preprocess", outputs,
                        filter={"order": spec.order, "passband_low_hz": spec.passband_low_hz,
                                "passband_high_hz": spec.passband_high_hz},
                        coefficients=coeff.to_dict(), n_epochs=len(epochs))

    report: dict = {"software": {"name": "gafnirs", "version": __version__},
                    "config": {k: v for k, v in cfg.to_dict().items() if k != "paths"}}
    k = int(cfg.raw["eval"]["k"])
    strat = bool(cfg.raw["eval"]["stratified"])
    channel = cfg.raw["gaf"]["channel"]

    if cfg.raw["features"]["enabled"]:
        with stage("features"):
            x_f, y_f, names, subjects = feature_matrix(epochs)
            write_features(out / "features" / "features.csv", x_f, y_f, names, subjects)
            base_name = cfg.raw["eval"]["baseline"]
            base = run_cv(x_f, y_f, lambda s: make_baseline(base_name), k, seed, subjects, strat,
                          {"model": base_name})
            imp_model = make_baseline(cfg.raw["features"]["importance_model"]).fit(x_f, y_f)
            imp = permutation_importance(imp_model, x_f, y_f, int(cfg.raw["features"]["repeats"]),
                                         seed, names)
            imp.write_csv(out / "features" / "importance.csv")
            selected = select_channel(imp)
            if channel == "auto":
                channel = selected
            _write_manifest(out / "features", "features", ["features.csv", "importance.csv"],
                            n_features=len(names), selected_channel=selected,
                            importance_model=cfg.raw["features"]["importance_model"])
            report["baseline"] = {"model": base_name, **_metrics(base)}
            report["importance"] = {"selected_channel": selected, "top_features": imp.ranking[:10]}

    with stage("gaf"):
        imgs, x_img = encode_images(epochs, channel, cfg.raw["gaf"])
        y_img = np.array([int(e.task) for e in epochs], dtype=np.int64)
        groups = [e.subject_id for e in epochs]
        write_image_set(imgs, out / "gaf", {"stage": "gaf", "outputs": ["labels.csv"],
                                            **cfg.raw["gaf"], "channel": channel})

    net_spec, train_cfg = cfg.network_spec(), cfg.train_config()
    train_cfg.seed = seed
    model_info = {"channel": channel, "gaf": {**cfg.raw["gaf"], "channel": channel}}
    if cfg.raw["model"]["fit_final"]:
        with stage("train"):
            final = CNNClassifier(net_spec, train_cfg).fit(x_img, y_img)
            save_model(final.net, net_spec, out / "train" / "model",
                       {"classifier": model_info, "train": train_cfg.to_dict()})
            _write_manifest(out / "train", "train", ["model.gnn", "model.json"],
                            epochs_run=final.history.stop_epoch + 1,
                            best_epoch=final.history.best_epoch)

    with stage("eval"):
        cnn = run_cv(x_img, y_img, cnn_factory(net_spec, train_cfg), k, seed, groups, strat,
                     {"network": net_spec.to_dict(), "train": train_cfg.to_dict()})
        report["cnn"] = {"channel": channel, **_metrics(cnn)}
        report["eval"] = {"k": k, "stratified": strat, "scheme": "per-recording"}
        report_path = out / "report.json"
        report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    # run.json carries the run-dependent details kept out of report.json
    (out / "run.json").write_text(json.dumps(
        {"software": {"name": "gafnirs", "version": __version__}, "backend": kernels.BACKEND,
         "timings_s": timings, "input": str(cfg.input_dir)}, indent=2) + "\n", encoding="utf-8")
    stages = [d for d in ("ingest", "preprocess", "features", "gaf", "train") if (out / d).is_dir()]
    _write_manifest(out, "pipeline", ["report.json", "run.json"] + [f"{d}/manifest.json" for d in stages])
    return PipelineResult(report, channel, out, timings)


def _metrics(rep: MetricsReport) -> dict:
    d = rep.to_dict()
    return {"metrics": d["metrics"], "per_recording": d["per_recording"], "per_fold": d["per_fold"]}
