from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gafnirs.errors import InvalidBand, MarkerOutOfBounds, SeriesTooShort, SingularCoefficients
from gafnirs.ingest import ChannelSeries, Task, TrialMarker
from gafnirs.preprocess import (BeerLambertCoefficients, Epoch, FilterSpec, HbSeries,
                                baseline_correct, baseline_window, butterworth_coefficients,
                                default_coefficients, filtfilt, frequency_response, load_epochs,
                                od_to_hb, pad_length, preprocess_recording, segment_epochs,
                                write_epochs)

RATE = 13.3
# magnitudes of scipy.signal.butter(3, [0.01, 0.09], "band", fs=13.3) at 0, 0.05 and 1 Hz,
# evaluated with scipy.signal.sosfreqz and frozen here
H_FROZEN = {0.0: 0.0, 0.05: 9.97960177e-01, 1.0: 4.85364820e-04}


@pytest.fixture(scope="module")
def sos():
    return butterworth_coefficients(FilterSpec(), RATE)


# ------------------------------------------------------------------ Beer-Lambert


def test_identity_coefficients():
    hb = od_to_hb(ChannelSeries("c", [1.0], [0.0]), BeerLambertCoefficients.identity())
    assert hb.hbo.tolist() == [1.0] and hb.hbr.tolist() == [0.0]


def test_zero_od_gives_zero_hb():
    hb = od_to_hb(ChannelSeries("c", np.zeros(5), np.zeros(5)), default_coefficients())
    assert not hb.hbo.any() and not hb.hbr.any()


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**32 - 1))
def test_od_to_hb_linear(a, b, seed):
    r = np.random.default_rng(seed)
    coeff = default_coefficients()
    x = ChannelSeries("c", r.normal(size=6), r.normal(size=6))
    y = ChannelSeries("c", r.normal(size=6), r.normal(size=6))
    mix = ChannelSeries("c", a * x.od_wl1 + b * y.od_wl1, a * x.od_wl2 + b * y.od_wl2)
    hx, hy, hm = od_to_hb(x, coeff), od_to_hb(y, coeff), od_to_hb(mix, coeff)
    np.testing.assert_allclose(hm.hbo, a * hx.hbo + b * hy.hbo, atol=1e-9)
    np.testing.assert_allclose(hm.hbr, a * hx.hbr + b * hy.hbr, atol=1e-9)


def test_od_to_hb_inverts_forward_model():
    coeff = default_coefficients()
    hbo, hbr = np.array([0.3, -0.1]), np.array([-0.05, 0.2])
    od = coeff.scaled_matrix() @ np.vstack([hbo, hbr])
    hb = od_to_hb(ChannelSeries("c", od[0], od[1]), coeff)
    np.testing.assert_allclose(hb.hbo, hbo, atol=1e-12)
    np.testing.assert_allclose(hb.hbr, hbr, atol=1e-12)


def test_doubling_od_doubles_hb():
    coeff = default_coefficients()
    x = ChannelSeries("c", [0.1, 0.2], [0.3, -0.4])
    h1 = od_to_hb(x, coeff)
    h2 = od_to_hb(ChannelSeries("c", 2 * x.od_wl1, 2 * x.od_wl2), coeff)
    np.testing.assert_allclose(h2.hbo, 2 * h1.hbo, rtol=1e-14)


def test_singular_coefficients():
    with pytest.raises(SingularCoefficients):
        od_to_hb(ChannelSeries("c", [1.0], [1.0]), BeerLambertCoefficients([[1, 2], [2, 4]]))


# ------------------------------------------------------------------------ filter


def test_frequency_response_matches_frozen_oracle(sos):
    mags = np.abs(frequency_response(sos, list(H_FROZEN), RATE))
    np.testing.assert_allclose(mags, list(H_FROZEN.values()), rtol=1e-8, atol=1e-12)
    assert mags[0] == 0.0
    assert 0.95 <= mags[1] <= 1.0
    assert mags[2] < 0.01


def test_design_matches_scipy_response(sos):
    signal = pytest.importorskip("scipy.signal")
    ref = signal.butter(3, [0.01, 0.09], btype="band", fs=RATE, output="sos")
    f = np.linspace(0, RATE / 2, 301)
    _, h = signal.sosfreqz(ref, worN=f, fs=RATE)
    np.testing.assert_allclose(np.abs(frequency_response(sos, f, RATE)), np.abs(h), atol=1e-12)


@given(st.floats(0.001, 0.9), st.floats(0.05, 0.95), st.integers(1, 5))
def test_poles_inside_unit_circle(lo_frac, width_frac, order):
    nyq = RATE / 2
    lo = lo_frac * nyq * 0.5
    hi = lo + (nyq - lo) * width_frac * 0.99
    if not lo < hi:
        return
    sos = butterworth_coefficients(FilterSpec(order, lo, hi), RATE)
    assert sos.shape == (order, 6)
    for sec in sos:
        assert np.all(np.abs(np.roots(sec[3:])) < 1)


@pytest.mark.parametrize("lo,hi", [(0.0, 0.09), (0.09, 0.01), (0.01, 6.65), (-1, 0.5)])
def test_invalid_band(lo, hi):
    with pytest.raises(InvalidBand):
        butterworth_coefficients(FilterSpec(3, lo, hi), RATE)


def test_filtfilt_zero_input(sos):
    assert not filtfilt(np.zeros(200), sos).any()


def test_filtfilt_time_reversal_symmetry(sos):
    r = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        x = r.normal(size=int(r.integers(60, 600)))
        worst = max(worst, np.abs(filtfilt(x[::-1], sos) - filtfilt(x, sos)[::-1]).max())
    assert worst <= 1e-9


def test_filtfilt_too_short(sos):
    n = 3 * pad_length(sos)
    with pytest.raises(SeriesTooShort):
        filtfilt(np.ones(n), sos)
    filtfilt(np.ones(n + 1), sos)


def test_sine_passband_gain_is_squared_response(sos):
    t = np.arange(int(2000 * RATE)) / RATE
    x = np.sin(2 * np.pi * 0.05 * t)
    y = filtfilt(x, sos)
    mid = slice(len(t) // 4, 3 * len(t) // 4)
    amp = np.abs(y[mid]).max()
    expected = np.abs(frequency_response(sos, [0.05], RATE))[0] ** 2
    assert 0.90 <= amp <= 1.0
    assert amp == pytest.approx(expected, abs=2e-3)


def test_filtfilt_has_zero_lag(sos):
    r = np.random.default_rng(5)
    x = filtfilt(r.normal(size=6000), sos)  # band-limited input
    y = filtfilt(x, sos)
    lags = np.arange(-40, 41)
    xc = [np.dot(x[100:-100], np.roll(y, k)[100:-100]) for k in lags]
    assert lags[int(np.argmax(xc))] == 0


def test_filtfilt_agrees_with_scipy_away_from_edges(sos):
    signal = pytest.importorskip("scipy.signal")
    ref = signal.butter(3, [0.01, 0.09], btype="band", fs=RATE, output="sos")
    x = np.random.default_rng(1).normal(size=30000)
    d = np.abs(filtfilt(x, sos) - signal.sosfiltfilt(ref, x))[10000:-10000]
    assert d.max() < 1e-7


def test_filtfilt_rows_independent(sos):
    r = np.random.default_rng(2)
    x = r.normal(size=(3, 300))
    stacked = filtfilt(x, sos)
    for k in range(3):
        np.testing.assert_array_equal(stacked[k], filtfilt(x[k], sos))


# -------------------------------------------------------------------- epoching


def hb_ramp(n=2000, channels=("a", "b")):
    return [HbSeries(c, np.arange(n, dtype=float) + k, -np.arange(n, dtype=float)) for k, c in enumerate(channels)]


def test_segment_sample_mapping():
    hb = hb_ramp()
    (ep,) = segment_epochs(hb, [TrialMarker(500, Task.MA)], RATE, "s1")
    assert len(ep) == round(30 * RATE) + 1 == 400
    start = 500 + round(-5 * RATE)
    np.testing.assert_array_equal(ep.channels[0].hbo, np.arange(start, start + 400))
    np.testing.assert_array_equal(ep.channels[1].hbo, np.arange(start, start + 400) + 1)
    assert ep.task is Task.MA and ep.subject_id == "s1"
    assert ep.offsets()[0] == -66 and ep.offsets()[66] == 0


def test_segment_no_markers():
    assert segment_epochs(hb_ramp(), [], RATE) == []


def test_segment_out_of_bounds():
    with pytest.raises(MarkerOutOfBounds):
        segment_epochs(hb_ramp(400), [TrialMarker(100, Task.MI)], RATE)


def test_epoch_count_and_labels(small_recording):
    eps = preprocess_recording(small_recording)
    assert [e.task for e in eps] == [m.task for m in small_recording.markers]
    assert all(len(e) == 400 for e in eps)


def make_epoch(values):
    values = np.asarray(values, dtype=float)
    return Epoch(0, Task.IS, [HbSeries("a", values, 2 * values)], RATE)


def test_baseline_window_is_pre_stimulus_second():
    ep = make_epoch(np.zeros(400))
    k = ep.offsets()[baseline_window(ep)]
    assert k[0] == math.ceil(-RATE) == -13 and k[-1] == 0


def test_baseline_constant_epoch_becomes_zero():
    out = baseline_correct(make_epoch(np.full(400, 3.7)))
    assert np.abs(out.channels[0].hbo).max() < 1e-12


@given(st.integers(0, 2**32 - 1))
def test_baseline_idempotent_and_zero_mean(seed):
    ep = make_epoch(np.random.default_rng(seed).normal(size=400).cumsum())
    once = baseline_correct(ep)
    twice = baseline_correct(once)
    m = baseline_window(ep)
    for c1, c2 in zip(once.channels, twice.channels):
        assert abs(c1.hbo[m].mean()) < 1e-12 and abs(c1.hbr[m].mean()) < 1e-12
        np.testing.assert_allclose(c2.hbo, c1.hbo, atol=1e-12)


def test_epoch_io_round_trip(tmp_path, small_recording):
    eps = preprocess_recording(small_recording)[:3]
    write_epochs(eps, tmp_path)
    back = load_epochs(tmp_path)
    for a, b in zip(eps, back):
        assert a.task == b.task and a.trial_index == b.trial_index
        np.testing.assert_array_equal(a.offsets(), b.offsets())
        for ca, cb in zip(a.channels, b.channels):
            np.testing.assert_array_equal(ca.hbo, cb.hbo)
            np.testing.assert_array_equal(ca.hbr, cb.hbr)
