from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gafnirs.errors import DataError, MarkerOutOfBounds, MissingColumn, NonNumericCell
from gafnirs.ingest import (ChannelSeries, Recording, SynthesisConfig, Task, TrialMarker,
                            canonical_hrf, epoch_window, load_recording, synthesize_recording,
                            task_response, write_recording)


def write_dir(tmp_path, rows, header="t,c1_wl1,c1_wl2", markers="onset_sample,task\n1,MI\n",
              newline="\n"):
    (tmp_path / "recording.csv").write_text(header + newline + newline.join(rows) + newline)
    (tmp_path / "markers.csv").write_text(markers.replace("\n", newline))
    return tmp_path


# 25 s sample spacing keeps a 3-row file large enough for the [-5, 25] s window
THREE_ROWS = ["0,0.1,0.2", "25,0.3,0.4", "50,0.5,0.6"]


def test_three_row_csv_loads(tmp_path):
    rec = load_recording(write_dir(tmp_path, THREE_ROWS))
    assert len(rec) == 3
    assert rec.sample_rate_hz == pytest.approx(0.04)
    assert rec.channel_ids == ["c1"]
    np.testing.assert_array_equal(rec.channels[0].od_wl2, [0.2, 0.4, 0.6])
    assert rec.markers == [TrialMarker(1, Task.MI)]
    assert rec.subject_id == tmp_path.name


def test_crlf_accepted(tmp_path):
    rec = load_recording(write_dir(tmp_path, THREE_ROWS, newline="\r\n"))
    assert len(rec) == 3 and rec.markers[0].task is Task.MI


def test_marker_without_pre_trial_samples(tmp_path):
    with pytest.raises(MarkerOutOfBounds):
        load_recording(write_dir(tmp_path, THREE_ROWS, markers="onset_sample,task\n0,MA\n"))


def test_non_numeric_cell_located(tmp_path):
    rows = ["0,0.1,0.2", "25,abc,0.4", "50,0.5,0.6"]
    with pytest.raises(NonNumericCell) as exc:
        load_recording(write_dir(tmp_path, rows))
    assert exc.value.row == 2 and exc.value.col == "c1_wl1" and exc.value.value == "abc"


def test_missing_column(tmp_path):
    with pytest.raises(MissingColumn) as exc:
        load_recording(write_dir(tmp_path, ["0,1", "25,2", "50,3"], header="t,c1_wl1"))
    assert exc.value.column == "c1_wl2"


def test_unknown_task(tmp_path):
    with pytest.raises(DataError):
        load_recording(write_dir(tmp_path, THREE_ROWS, markers="onset_sample,task\n1,XX\n"))


def test_epoch_window_at_13_3_hz():
    start, stop = epoch_window(1000, 13.3)
    assert start == 1000 - 66
    assert stop - start == round(30 * 13.3) + 1 == 400


def test_synthesis_deterministic():
    a = synthesize_recording(SynthesisConfig(seed=7, n_trials_per_class=3))
    b = synthesize_recording(SynthesisConfig(seed=7, n_trials_per_class=3))
    assert a.markers == b.markers
    for ca, cb in zip(a.channels, b.channels):
        assert ca.od_wl1.tobytes() == cb.od_wl1.tobytes()
        assert ca.od_wl2.tobytes() == cb.od_wl2.tobytes()


def test_synthesis_zero_case():
    zeros = {t: np.zeros(16) for t in Task}
    rec = synthesize_recording(SynthesisConfig(noise_sd=0, drift_amplitude=0, class_response_gains=zeros,
                                               n_trials_per_class=2))
    assert all(not c.od_wl1.any() and not c.od_wl2.any() for c in rec.channels)


def test_synthesis_class_counts():
    rec = synthesize_recording(SynthesisConfig(n_trials_per_class=10, seed=1))
    assert len(rec.markers) == 30
    assert all(sum(m.task is t for m in rec.markers) == 10 for t in Task)


@given(st.integers(1, 8), st.integers(0, 2**64 - 1))
def test_marker_order_is_a_balanced_permutation(n, seed):
    rec = synthesize_recording(SynthesisConfig(n_trials_per_class=n, seed=seed, n_channels=1))
    tasks = [m.task for m in rec.markers]
    assert sorted(tasks) == sorted(list(Task) * n)
    onsets = [m.onset_sample for m in rec.markers]
    assert onsets == sorted(set(onsets))


def test_round_trip_bit_exact(tmp_path, small_recording):
    write_recording(small_recording, tmp_path)
    back = load_recording(tmp_path)
    assert back.subject_id == small_recording.subject_id
    assert back.sample_rate_hz == small_recording.sample_rate_hz
    assert back.markers == small_recording.markers
    for a, b in zip(small_recording.channels, back.channels):
        assert a.channel_id == b.channel_id
        np.testing.assert_array_equal(a.od_wl1, b.od_wl1)
        np.testing.assert_array_equal(a.od_wl2, b.od_wl2)


def test_recording_invariants():
    ch = [ChannelSeries("a", np.zeros(500), np.zeros(500)), ChannelSeries("b", np.zeros(499), np.zeros(499))]
    with pytest.raises(DataError):
        Recording("s", 13.3, ch, []).validate()
    ok = [ChannelSeries("a", np.zeros(500), np.zeros(500))]
    with pytest.raises(DataError):
        Recording("s", 13.3, ok, [TrialMarker(200, Task.MI), TrialMarker(100, Task.MA)]).validate()
    with pytest.raises(DataError):
        Recording("s", 0.0, ok, []).validate()
    # ceil(5 * 13.3) = 67 pre-trial samples and ceil(25 * 13.3) = 333 after the onset
    with pytest.raises(MarkerOutOfBounds):
        Recording("s", 13.3, ok, [TrialMarker(66, Task.MI)]).validate()
    with pytest.raises(MarkerOutOfBounds):
        Recording("s", 13.3, ok, [TrialMarker(168, Task.MI)]).validate()
    Recording("s", 13.3, ok, [TrialMarker(67, Task.MI), TrialMarker(100, Task.IS)]).validate()


def test_hrf_peak_near_six_seconds():
    t = np.arange(0, 30, 0.01)
    h = canonical_hrf(t)
    assert abs(t[np.argmax(h)] - 6.0) < 0.05
    assert h.max() == pytest.approx(1.0)
    assert h[t > 12].min() < 0  # undershoot
    r = task_response(13.3, 10.0)
    assert r.max() == pytest.approx(1.0)
