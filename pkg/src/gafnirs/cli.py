"""Command-line entry point (``gafnirs``).

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .crossval import run_cv
from .errors import ConfigError, DataError, GafnirsError
from .features import (feature_matrix, permutation_importance, read_features, select_channel,
                       write_features)
from .gaf import encode_epoch, load_image_set, write_image_set
from .ingest import (SynthesisConfig, Task, find_recordings, load_recording, synthesize_recording,
                     write_recording)
from .nn.network import NetworkSpec
from .nn.serialize import load_model, save_model
from .nn.train import TrainConfig
from .pipeline import (DEFAULTS, CNNClassifier, PipelineConfig, cnn_factory, make_baseline,
                       run_pipeline, set_key)
from .preprocess import (BeerLambertCoefficients, FilterSpec, default_coefficients, load_epochs,
                         preprocess_recording, read_epoch_csv, write_epochs)

log = logging.getLogger("gafnirs")


# ------------------------------------------------------------------ helpers


def _load_config(args) -> dict:
    """Section of the ``--config`` JSON relevant to a subcommand, or the whole file."""
    if not args.config:
        return {}
    try:
        return json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from None


def _seed(args, cfg: dict | None = None) -> int:
    if args.seed is not None:
        return args.seed
    return int((cfg or {}).get("seed", 0))


def _out(args, default: str | None = None) -> Path:
    value = getattr(args, "out", None) or default
    if value is None:
        raise ConfigError("--out is required")
    return Path(value)


def _write_json(path: Path, body: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _net_and_train(args, size: int | None = None) -> tuple[NetworkSpec, TrainConfig]:
    spec = NetworkSpec.load(args.net) if args.net else NetworkSpec.default(size or 64)
    tcfg = TrainConfig.load(args.train) if args.train else TrainConfig()
    if args.epochs is not None:
        tcfg.max_epochs = args.epochs
    return spec.validate(), tcfg.validate()


# ----------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    raw = _load_config(args).get("synth", {})
    base = {k: v for k, v in raw.items() if k not in ("subjects",)}
    if "rest_range_s" in base:
        base["rest_range_s"] = tuple(base["rest_range_s"])
    if "class_response_gains" in base:
        base["class_response_gains"] = {Task.parse(k): np.asarray(v, dtype=float)
                                        for k, v in base["class_response_gains"].items()}
    try:
        template = SynthesisConfig(**base)
    except TypeError as exc:
        raise ConfigError(f"bad synth config: {exc}") from None
    if args.trials is not None:
        template.n_trials_per_class = args.trials
    if args.noise is not None:
        template.noise_sd = args.noise
    seed = _seed(args, _load_config(args))
    n_subjects = args.subjects if args.subjects is not None else int(raw.get("subjects", 1))
    out = _out(args)
    written = []
    for s in range(n_subjects):
        sub = f"sub{s + 1:02d}"
        cfg = SynthesisConfig(**{**template.__dict__, "seed": int(np.random.SeedSequence([seed, s])
                                                                   .generate_state(1, np.uint64)[0]),
                                 "subject_id": sub})
        write_recording(synthesize_recording(cfg), out / sub)
        written.append(sub)
    _write_json(out / "manifest.json", {
        "stage": "synth", "software": {"name": "gafnirs", "version": __version__}, "seed": seed,
        "rng": "PCG64", "subjects": written, "trials_per_class": template.n_trials_per_class,
        "noise_sd": template.noise_sd, "gain_scale": template.gain_scale,
        "rest_range_s": list(template.rest_range_s)})
    print(f"wrote {n_subjects} recording(s) to {out}")
    return 0


def cmd_ingest_validate(args) -> int:
    for d in find_recordings(args.dir):
        rec = load_recording(d)
        counts = {t.name: sum(m.task is t for m in rec.markers) for t in Task}
        print(f"{d}: subject {rec.subject_id}, {len(rec)} samples @ {rec.sample_rate_hz:g} Hz, "
              f"{len(rec.channels)} channels, markers {counts}")
    print("ok")
    return 0


def cmd_preprocess(args) -> int:
    raw = _load_config(args).get("preprocess", {})

    def pick(flag, key, default):
        return flag if flag is not None else raw.get(key, default)

    spec = FilterSpec(int(pick(args.order, "order", 3)),
                      float(pick(args.filter_low, "passband_low_hz", 0.01)),
                      float(pick(args.filter_high, "passband_high_hz", 0.09)))
    coeff_path = args.coeffs or raw.get("coefficients")
    if args.identity:
        coeff = BeerLambertCoefficients.identity()
    elif coeff_path:
        if not Path(coeff_path).is_file():
            raise ConfigError(f"coefficients file not found: {coeff_path}")
        coeff = BeerLambertCoefficients.from_json(coeff_path)
    else:
        coeff = default_coefficients()
    out = _out(args)
    n = 0
    subjects = []
    for d in find_recordings(args.input):
        rec = load_recording(d)
        eps = preprocess_recording(rec, spec, coeff)
        write_epochs(eps, out / rec.subject_id, {"stage": "preprocess", "source": d.name})
        subjects.append(rec.subject_id)
        n += len(eps)
    _write_json(out / "manifest.json", {"stage": "preprocess", "subjects": subjects,
                                        "outputs": [f"{s}/manifest.json" for s in subjects],
                                        "coefficients": coeff.to_dict(), "n_epochs": n})
    print(f"wrote {n} epochs to {out}")
    return 0


def _epochs_from(path: str) -> list:
    root = Path(path)
    if (root / "manifest.json").exists():
        m = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
        if "epochs" in m:
            return load_epochs(root)
        if "subjects" in m:
            return [e for s in m["subjects"] for e in load_epochs(root / s)]
    raise DataError(f"{root}: not an epochs directory")


def cmd_features_extract(args) -> int:
    x, y, names, subjects = feature_matrix(_epochs_from(args.epochs))
    path = write_features(_out(args), x, y, names, subjects)
    print(f"wrote {x.shape[0]} x {x.shape[1]} features to {path}")
    return 0


def cmd_features_importance(args) -> int:
    x, y, names, _ = read_features(args.features)
    model = make_baseline(args.model).fit(x, y)
    rep = permutation_importance(model, x, y, args.repeats, _seed(args), names)
    rep.write_csv(_out(args))
    ch = select_channel(rep)
    for name, m, s in rep.rows()[: args.top]:
        print(f"{name}\t{m:.4f}\t{s:.4f}")
    print(f"selected channel: {ch}")
    return 0


def cmd_gaf_encode(args) -> int:
    epochs = _epochs_from(args.epochs)
    imgs = [encode_epoch(e, args.channel, args.kind, args.size, args.signal, args.full_window)
            for e in epochs]
    out = write_image_set(imgs, _out(args), {"stage": "gaf", "channel": args.channel,
                                             "kind": args.kind, "size": args.size,
                                             "signal": args.signal, "full_window": args.full_window})
    print(f"wrote {len(imgs)} images to {out}")
    return 0


def _image_meta(directory: str) -> dict:
    m = Path(directory) / "manifest.json"
    return json.loads(m.read_text(encoding="utf-8")) if m.exists() else {}


def cmd_train(args) -> int:
    x, y, _ = load_image_set(args.images)
    spec, tcfg = _net_and_train(args, x.shape[-1])
    tcfg.seed = _seed(args)
    clf = CNNClassifier(spec, tcfg).fit(x, y)
    meta = _image_meta(args.images)
    gaf = {k: meta.get(k, d) for k, d in DEFAULTS["gaf"].items()}
    path = save_model(clf.net, spec, _out(args), {"classifier": {"channel": gaf["channel"], "gaf": gaf},
                                                  "train": tcfg.to_dict()})
    h = clf.history
    print(f"trained {h.stop_epoch + 1} epochs (best {h.best_epoch}), "
          f"val loss {h.val_loss[h.best_epoch]:.4f}; saved {path}")
    return 0


def cmd_eval_cv(args) -> int:
    x, y, names, subjects = read_features(args.features)
    rep = run_cv(x, y, lambda s: make_baseline(args.model), args.k, _seed(args), subjects,
                 config={"model": args.model, "features": len(names)})
    _write_json(Path(args.report), rep.to_dict())
    print(f"accuracy {rep.accuracy:.4f}, micro AUROC {rep.micro_auroc:.4f}")
    return 0


def cmd_eval_cv_cnn(args) -> int:
    x, y, subjects = load_image_set(args.images)
    spec, tcfg = _net_and_train(args, x.shape[-1])
    rep = run_cv(x, y, cnn_factory(spec, tcfg), args.k, _seed(args), subjects,
                 config={"network": spec.to_dict(), "train": tcfg.to_dict()})
    _write_json(Path(args.report), rep.to_dict())
    print(f"accuracy {rep.accuracy:.4f}, micro AUROC {rep.micro_auroc:.4f}")
    return 0


def cmd_classify(args) -> int:
    net, spec, manifest = load_model(args.model)
    gaf = {**DEFAULTS["gaf"], **manifest.get("classifier", {}).get("gaf", {})}
    channel = args.channel or manifest.get("classifier", {}).get("channel")
    if not channel or channel == "auto":
        raise ConfigError("model does not record its channel; pass --channel")
    epoch = read_epoch_csv(args.epoch)
    img = encode_epoch(epoch, channel, gaf["kind"], int(gaf["size"]), gaf["signal"],
                       bool(gaf["full_window"]))
    probs = net.predict_proba(img.matrix[None, None])[0]
    label = Task(int(np.argmax(probs)))
    print(json.dumps({"task": label.name,
                      "probabilities": {t.name: float(probs[t.value]) for t in Task}}))
    return 0


def cmd_pipeline_run(args) -> int:
    raw = _load_config(args)
    base_dir = Path(args.config).parent if args.config else None
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.input:
        set_key(raw, "paths.input", str(Path(args.input).resolve()))
    if args.out:
        set_key(raw, "paths.output", str(Path(args.out).resolve()))
    for item in args.set or []:
        key, _, value = item.partition("=")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        set_key(raw, key, parsed)
    cfg = PipelineConfig.from_dict(raw, base_dir)
    res = run_pipeline(cfg)
    cnn = res.report["cnn"]["metrics"]
    line = f"channel {res.channel}: CNN accuracy {cnn['accuracy']:.4f}"
    if "baseline" in res.report:
        line += f", {res.report['baseline']['model']} accuracy " \
                f"{res.report['baseline']['metrics']['accuracy']:.4f}"
    print(line)
    print(f"report: {res.output_dir / 'report.json'}")
    return 0


# ------------------------------------------------------------------- parser


def _global_flags(default) -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=default, help="64-bit seed (default 0 or config)")
    g.add_argument("--config", default=default, help="JSON config file")
    g.add_argument("--out", default=default, help="output path")
    g.add_argument("-v", "--verbose", action="store_true", default=default if default else False)
    return g


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; the subcommand
    # copies use SUPPRESS so they never overwrite a value given up front
    common = _global_flags(argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="gafnirs", parents=[_global_flags(None)],
                                description="fNIRS task classification with GAF images and a CNN")
    p.add_argument("--version", action="version", version=f"gafnirs {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write synthetic recordings")
    s.add_argument("--trials", type=int, default=None, help="trials per class (default 30)")
    s.add_argument("--subjects", type=int, default=None)
    s.add_argument("--noise", type=float, default=None, help="OD noise standard deviation")
    s.set_defaults(func=cmd_synth)

    ing = sub.add_parser("ingest", help="recording checks").add_subparsers(dest="action", required=True)
    s = ing.add_parser("validate", parents=[common], help="load and check every recording")
    s.add_argument("dir")
    s.set_defaults(func=cmd_ingest_validate)

    pre = sub.add_parser("preprocess", help="convert, filter and epoch recordings").add_subparsers(dest="action", required=True)
    s = pre.add_parser("run", parents=[common], help="OD -> Hb, filter, epoch, baseline")
    s.add_argument("--in", dest="input", required=True, help="recording directory")
    s.add_argument("--filter-low", type=float, default=None)
    s.add_argument("--filter-high", type=float, default=None)
    s.add_argument("--order", type=int, default=None)
    s.add_argument("--coeffs", default=None, help="Beer-Lambert coefficients JSON")
    s.add_argument("--identity", action="store_true", help="use identity coefficients")
    s.set_defaults(func=cmd_preprocess)

    feat = sub.add_parser("features", help="windowed-mean features and importance").add_subparsers(dest="action", required=True)
    s = feat.add_parser("extract", parents=[common], help="write a feature table")
    s.add_argument("--epochs", required=True)
    s.set_defaults(func=cmd_features_extract)
    s = feat.add_parser("importance", parents=[common], help="permutation importance and channel choice")
    s.add_argument("--features", required=True)
    s.add_argument("--model", choices=("logreg", "knn"), default="logreg")
    s.add_argument("--repeats", type=int, default=20)
    s.add_argument("--top", type=int, default=10)
    s.set_defaults(func=cmd_features_importance)

    gaf = sub.add_parser("gaf", help="encode epochs as GAF images").add_subparsers(dest="action", required=True)
    s = gaf.add_parser("encode", parents=[common], help="write GASF/GADF images")
    s.add_argument("--epochs", required=True)
    s.add_argument("--channel", required=True)
    s.add_argument("--kind", choices=("gasf", "gadf"), default="gasf")
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--signal", choices=("hbo", "hbr"), default="hbo")
    s.add_argument("--full-window", action="store_true")
    s.set_defaults(func=cmd_gaf_encode)

    def net_args(s):
        s.add_argument("--net", default=None, help="network spec JSON")
        s.add_argument("--train", default=None, help="training config JSON")
        s.add_argument("--epochs", type=int, default=None, help="override max_epochs")

    s = sub.add_parser("train", parents=[common], help="train the CNN on an image set")
    s.add_argument("--images", required=True)
    net_args(s)
    s.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="cross-validated evaluation").add_subparsers(dest="action", required=True)
    s = ev.add_parser("cv", parents=[common], help="baseline CV on a feature table")
    s.add_argument("--features", required=True)
    s.add_argument("--model", choices=("logreg", "knn"), default="logreg")
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_eval_cv)
    s = ev.add_parser("cv-cnn", parents=[common], help="CNN CV on an image set")
    s.add_argument("--images", required=True)
    net_args(s)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_eval_cv_cnn)

    s = sub.add_parser("classify", parents=[common], help="classify one epoch CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--epoch", required=True)
    s.add_argument("--channel", default=None)
    s.set_defaults(func=cmd_classify)

    pl = sub.add_parser("pipeline", help="end-to-end run").add_subparsers(dest="action", required=True)
    s = pl.add_parser("run", parents=[common], help="run every stage from one config")
    s.add_argument("--input", default=None, help="recordings directory (overrides paths.input)")
    s.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key, e.g. gaf.size=32 (value parsed as JSON)")
    s.set_defaults(func=cmd_pipeline_run)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GafnirsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
