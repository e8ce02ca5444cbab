"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line."""

from __future__ import annotations

import json
import time

import numpy as np
import pytest

from gafnirs.cli import main
from gafnirs.features import feature_names, permutation_importance, select_channel
from gafnirs.gaf import gasf, rescale
from gafnirs.metrics import binary_auroc
from gafnirs.nn import (BatchNorm, Conv2D, Dense, Dropout, Flatten, MaxPool2D, NetworkSpec,
                        Softmax, build_network, one_hot)
from gafnirs.nn.baselines import LogisticRegression
from gafnirs.preprocess import FilterSpec, butterworth_coefficients, filtfilt, frequency_response

RATE = 13.3


# ------------------------------------------------------------------ 1. GASF


def test_gasf_identities(criterion):
    with criterion(1, "GASF analytic identities on 1000 series, < 5 s") as c:
        rng = np.random.default_rng(1)
        t0 = time.perf_counter()
        worst_diag = worst_form = 0.0
        for _ in range(1000):
            n = int(rng.integers(2, 129))
            s = rescale(rng.normal(size=n) * rng.uniform(0.1, 100) + rng.normal() * 10)
            g = gasf(s).matrix
            x = s.values
            assert np.array_equal(g, g.T)
            assert g.min() >= -1 and g.max() <= 1
            worst_diag = max(worst_diag, np.abs(np.diag(g) - (2 * x * x - 1)).max())
            phi = np.arccos(x)
            worst_form = max(worst_form, np.abs(np.cos(phi[:, None] + phi[None, :]) - g).max())
        elapsed = time.perf_counter() - t0
        c.detail = f"diag err {worst_diag:.1e}, form err {worst_form:.1e}, {elapsed:.2f} s"
        assert worst_diag <= 1e-12
        assert worst_form <= 1e-12
        assert elapsed < 5.0


# ---------------------------------------------------------------- 2. filter


def test_filter_oracle_and_symmetry(criterion):
    with criterion(2, "band-pass response oracle and filtfilt reversal symmetry") as c:
        sos = butterworth_coefficients(FilterSpec(), RATE)
        h = np.abs(frequency_response(sos, [0.0, 0.05, 1.0], RATE))
        rng = np.random.default_rng(2)
        worst = 0.0
        for _ in range(100):
            x = rng.normal(size=int(rng.integers(200, 3000)))
            y = filtfilt(x, sos)
            yr = filtfilt(x[::-1], sos)[::-1]
            worst = max(worst, np.abs(y - yr).max())
        c.detail = f"|H| = {h[0]:.2e}, {h[1]:.4f}, {h[2]:.2e}; symmetry err {worst:.1e}"
        assert h[0] == 0.0
        assert h[1] >= 0.95
        assert h[2] < 0.01
        assert worst <= 1e-9


# ------------------------------------------------------------- 3. gradients

DELTA = 1e-5
FLOOR = 1e-5  # below this magnitude central differences are roundoff-limited (~4e-10)


def _rel(a, n):
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), FLOOR)))


def _pattern(layers):
    """ReLU on/off states and max-pool winners of the last forward pass."""
    out = []
    for l in layers:
        if isinstance(l, Conv2D) and l.relu:
            out.append(l._cache[2] > 0)
        elif isinstance(l, MaxPool2D):
            out.append(l._cache[1].copy())
        elif isinstance(l, Dense) and l.activation == "relu":
            out.append(l._cache[1] > 0)
    return out


def _same(a, b):
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def _compare(f, layers, arr, idx, analytic, stats):
    """Central differences at ``idx``; coordinates whose +-delta step flips a
    ReLU or a max-pool winner sit on a kink, have no derivative, and are skipped."""
    base = _pattern(layers)
    a_ok, n_ok = [], []
    for i in idx:
        old = arr[i]
        arr[i] = old + DELTA
        fp = f()
        p_plus = _pattern(layers)
        arr[i] = old - DELTA
        fm = f()
        p_minus = _pattern(layers)
        arr[i] = old
        stats["checked"] += 1
        if not (_same(base, p_plus) and _same(base, p_minus)):
            stats["kinks"] += 1
            continue
        a_ok.append(analytic[i])
        n_ok.append((fp - fm) / (2 * DELTA))
    f()
    return _rel(np.array(a_ok), np.array(n_ok)) if a_ok else 0.0


def _sample(arr, rng, k):
    flat = rng.choice(arr.size, size=min(k, arr.size), replace=False)
    return [np.unravel_index(i, arr.shape) for i in flat]


def _random_layer(rng):
    kind = rng.integers(0, 7)
    c, h, w = int(rng.integers(1, 4)), int(rng.integers(4, 9)), int(rng.integers(4, 9))
    if kind == 0:
        k = int(rng.choice([1, 3]))
        return Conv2D(int(rng.integers(1, 4)), k, int(rng.integers(1, 3)),
                      str(rng.choice(["same", "valid"])), relu=bool(rng.integers(0, 2))), (c, h, w)
    if kind == 1:
        return MaxPool2D(int(rng.integers(2, 4))), (c, h, w)
    if kind == 2:
        return BatchNorm(), ((c, h, w) if rng.integers(0, 2) else (int(rng.integers(2, 8)),))
    if kind == 3:
        return Flatten(), (c, h, w)
    if kind == 4:
        return Dense(int(rng.integers(1, 6)), str(rng.choice(["relu", "linear"]))), (int(rng.integers(2, 8)),)
    if kind == 5:
        return Dropout(float(rng.uniform(0.1, 0.7))), (int(rng.integers(2, 10)),)
    return Softmax(), (int(rng.integers(2, 6)),)


def _check_layer(layer, shape, rng, stats):
    layer.build(shape, np.random.default_rng(int(rng.integers(2**32))))
    x = rng.normal(size=(4,) + tuple(shape))
    state = layer.rng.bit_generator.state if isinstance(layer, Dropout) else None

    def fwd():
        if state is not None:
            layer.rng.bit_generator.state = state  # same dropout mask on every pass
        return layer.forward(x, True)

    r = rng.normal(size=fwd().shape)

    def loss():
        return float(np.sum(fwd() * r))

    fwd()
    dx = layer.backward(r)
    worst = _compare(loss, [layer], x, _sample(x, rng, 60), dx, stats)
    for k, p in layer.params.items():
        fwd()
        layer.backward(r)
        g = layer.grads[k].copy()
        worst = max(worst, _compare(loss, [layer], p, _sample(p, rng, 60), g, stats))
    return worst


def _check_default_network(seed, rng, stats):
    net = build_network(NetworkSpec.default(size=16), seed=seed)
    drops = [l for l in net.layers if isinstance(l, Dropout)]
    states = [d.rng.bit_generator.state for d in drops]
    x = rng.normal(size=(3, 1, 16, 16))
    y = one_hot(rng.integers(0, 3, 3))

    def fwd():
        for d, s in zip(drops, states):
            d.rng.bit_generator.state = s
        return net.forward(x, "train")

    def loss():
        return net.loss(fwd(), y)

    fwd()
    grads = {k: g.copy() for k, g in net.backward(y)}
    worst = 0.0
    for name, p in net.parameters():
        worst = max(worst, _compare(loss, net.layers, p, _sample(p, rng, 12), grads[name], stats))
    return worst


def test_gradient_checks(criterion):
    with criterion(3, "central-difference gradient checks, 20 configurations, < 60 s") as c:
        rng = np.random.default_rng(3)
        t0 = time.perf_counter()
        kinds, worst = set(), 0.0
        stats = {"checked": 0, "kinks": 0}
        for i in range(20):
            # every configuration checks three random layers and the full default network
            for _ in range(3):
                layer, shape = _random_layer(rng)
                kinds.add(layer.kind)
                worst = max(worst, _check_layer(layer, shape, rng, stats))
            worst = max(worst, _check_default_network(i, rng, stats))
        # make sure each layer type was exercised at least once
        for layer, shape in [(Conv2D(2, 3, 1, "same"), (2, 5, 5)), (MaxPool2D(2), (1, 4, 4)),
                             (BatchNorm(), (2, 3, 3)), (Flatten(), (2, 2, 2)), (Dense(3), (4,)),
                             (Dropout(0.5), (6,)), (Softmax(), (3,))]:
            kinds.add(layer.kind)
            worst = max(worst, _check_layer(layer, shape, rng, stats))
        elapsed = time.perf_counter() - t0
        c.detail = (f"max rel err {worst:.1e} over {len(kinds)} layer types, "
                    f"{stats['kinks']}/{stats['checked']} kink coordinates skipped, {elapsed:.1f} s")
        assert len(kinds) == 7
        assert stats["kinks"] <= 0.05 * stats["checked"]
        assert worst < 1e-4
        assert elapsed < 60.0


# ----------------------------------------------------------------- 4. AUROC


def _pair_count(scores, pos):
    p, n = scores[pos], scores[~pos]
    wins = (p[:, None] > n[None, :]).sum() + 0.5 * (p[:, None] == n[None, :]).sum()
    return wins / (len(p) * len(n))


def test_auroc_pair_counting(criterion):
    with criterion(4, "AUROC equals O(n^2) pair counting on 200 instances") as c:
        rng = np.random.default_rng(4)
        mismatches, ties = 0, 0
        for i in range(200):
            n = int(rng.integers(2, 101))
            pos = rng.random(n) < rng.uniform(0.1, 0.9)
            pos[0], pos[-1] = True, False
            levels = int(rng.integers(2, 6)) if i % 2 else 0
            scores = rng.integers(0, levels, n).astype(float) if levels else rng.random(n)
            ties += bool(levels)
            if binary_auroc(scores, pos) != _pair_count(scores, pos):
                mismatches += 1
        c.detail = f"{mismatches} mismatches, {ties} heavy-tie instances"
        assert mismatches == 0


# ------------------------------------------------------------ 5. end to end

ACCEPT_SYNTH = {
    "subjects": 18,
    "n_trials_per_class": 30,
    "noise_sd": 0.01,
    "gain_scale": 0.02,
    "rest_range_s": [30.0, 32.0],
}
ACCEPT_NET = {
    "input_shape": [1, 16, 16], "l2_strength": 0.001,
    "layers": [{"type": "conv2d", "out_channels": 4}, {"type": "maxpool", "window": 2},
               {"type": "conv2d", "out_channels": 8}, {"type": "maxpool", "window": 2},
               {"type": "conv2d", "out_channels": 16}, {"type": "maxpool", "window": 2},
               {"type": "conv2d", "out_channels": 32}, {"type": "maxpool", "window": 2},
               {"type": "batchnorm"}, {"type": "flatten"},
               {"type": "dense", "units": 32, "activation": "relu"},
               {"type": "dropout", "rate": 0.2},
               {"type": "dense", "units": 3}, {"type": "softmax"}],
}


def acceptance_gains():
    from gafnirs.ingest import Task, default_gains

    g = default_gains(16)
    g[Task.MI][6], g[Task.MA][6] = 0.1, 3.0
    return {t.name: v.tolist() for t, v in g.items()}


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    root = tmp_path_factory.mktemp("e2e")
    cfg = {"seed": 2024, "synth": {**ACCEPT_SYNTH, "class_response_gains": acceptance_gains()},
           "paths": {"input": str(root / "data"), "output": str(root / "run")},
           # the windowed-mean features separate this design perfectly, so every
           # single-feature permutation scores zero and "auto" would fall back to ch01
           "gaf": {"channel": "ch07", "size": 16},
           "model": {"network": ACCEPT_NET, "train": {"val_fraction": 0.0, "max_epochs": 60},
                     "fit_final": False},
           "eval": {"k": 10}}
    (root / "cfg.json").write_text(json.dumps(cfg))
    t0 = time.perf_counter()
    assert main(["synth", "--config", str(root / "cfg.json"), "--out", str(root / "data")]) == 0
    code = main(["pipeline", "run", "--config", str(root / "cfg.json")])
    elapsed = time.perf_counter() - t0
    return root, code, elapsed


@pytest.mark.slow
def test_end_to_end_benchmark(criterion, e2e):
    root, code, elapsed = e2e
    with criterion(5, "synthetic 18 x 90 benchmark: < 10 min, CNN >= 90%, logreg > 40%") as c:
        assert code == 0
        rep = json.loads((root / "run" / "report.json").read_text())
        cnn = rep["cnn"]["metrics"]["accuracy"]
        base = rep["baseline"]["metrics"]["accuracy"]
        c.detail = (f"CNN {100 * cnn:.2f}% on {rep['cnn']['channel']}, logreg {100 * base:.2f}%, "
                    f"micro AUROC {rep['cnn']['metrics']['micro_auroc']:.3f}, {elapsed:.0f} s")
        assert elapsed < 600
        assert cnn >= 0.90
        assert base > 0.40


# ----------------------------------------------------------- 6. determinism


@pytest.mark.slow
def test_determinism(criterion, e2e, tmp_path):
    root, code, _ = e2e
    with criterion(6, "identical runs give identical reports; synthesis is bit-stable") as c:
        assert code == 0
        assert main(["synth", "--config", str(root / "cfg.json"), "--subjects", "2",
                     "--out", str(tmp_path / "data")]) == 0
        for sub in ("sub01", "sub02"):
            for name in ("recording.csv", "markers.csv"):
                a = (tmp_path / "data" / sub / name).read_bytes()
                assert a == (root / "data" / sub / name).read_bytes()
        # rerun the pipeline on a two-subject slice, twice
        cfg = json.loads((root / "cfg.json").read_text())
        reports = []
        for run in ("a", "b"):
            cfg["paths"] = {"input": str(tmp_path / "data"), "output": str(tmp_path / run)}
            (tmp_path / f"{run}.json").write_text(json.dumps(cfg))
            assert main(["pipeline", "run", "--config", str(tmp_path / f"{run}.json")]) == 0
            reports.append((tmp_path / run / "report.json").read_bytes())
        c.detail = f"report {len(reports[0])} bytes"
        assert reports[0] == reports[1]


# ------------------------------------------------------------ 7. importance


def test_permutation_importance_sanity(criterion):
    with criterion(7, "single informative feature ranks first and picks its channel") as c:
        rng = np.random.default_rng(7)
        channels = [f"ch{i:02d}" for i in range(1, 17)]
        names = feature_names(channels)
        x = rng.normal(size=(270, len(names)))
        target = names.index("ch11_hbo_w2")
        y = np.digitize(x[:, target], [-0.43, 0.43])
        model = LogisticRegression().fit(x, y)
        rep = permutation_importance(model, x, y, repeats=10, seed=0, names=names)
        chosen = select_channel(rep)
        c.detail = f"top {rep.ranking[0]} ({rep.mean[target]:.3f}), selected {chosen}"
        assert rep.ranking[0] == "ch11_hbo_w2"
        assert chosen == "ch11"
