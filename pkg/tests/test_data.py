import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capfusion.data import (
    ACTIVITIES,
    PROPOSED_CHANNELS,
    WATCH_CHANNELS,
    AlignmentError,
    LabelError,
    LabelTrack,
    MergedStream,
    RecordingFormatError,
    SensorRecording,
    SyncNotFound,
    align_devices,
    apply_normalizer,
    apply_scheme,
    detect_clap_sync,
    fit_normalizer,
    get_scheme,
    load_labels,
    load_recording,
    save_labels,
    save_recording,
    segment_windows,
)
from capfusion.data.windows import DROPPED, UNLABELED, majority_labels, sample_codes


def make_rec(T=250, device="left", rate=25.0, channels=PROPOSED_CHANNELS, seed=0, session="s1"):
    x = np.random.default_rng(seed).normal(size=(T, len(channels)))
    return SensorRecording("P01", session, device, rate, channels, x)


def stream_of(samples, rate=25.0, start=0.0, channels=None):
    channels = channels or [f"c{i}" for i in range(samples.shape[1])]
    return MergedStream("s1", rate, start, samples, channels, {})


# -- recordings --------------------------------------------------------------

def test_recording_roundtrip_bit_exact(tmp_path):
    rec = make_rec(T=250)
    rec.samples[3, 2] = 1 / 3
    save_recording(rec, tmp_path / "r.csv")
    back = load_recording(tmp_path / "r.csv")
    assert back.samples.shape == (250, 10)
    np.testing.assert_array_equal(back.samples, rec.samples)
    assert (back.device_id, back.rate_hz, back.channels) == ("left", 25.0, list(PROPOSED_CHANNELS))


def test_recording_short_row_names_line(tmp_path):
    save_recording(make_rec(T=5), tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    lines[8] = ",".join(lines[8].split(",")[:9])
    (tmp_path / "r.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(RecordingFormatError) as err:
        load_recording(tmp_path / "r.csv")
    assert err.value.row == 9


def test_recording_non_numeric_cell(tmp_path):
    save_recording(make_rec(T=5), tmp_path / "r.csv")
    text = (tmp_path / "r.csv").read_text().splitlines()
    cells = text[7].split(",")
    cells[4] = "abc"
    text[7] = ",".join(cells)
    (tmp_path / "r.csv").write_text("\n".join(text) + "\n")
    with pytest.raises(RecordingFormatError) as err:
        load_recording(tmp_path / "r.csv")
    assert (err.value.row, err.value.column) == (8, 5)


def test_recording_duplicate_channel(tmp_path):
    save_recording(make_rec(T=3), tmp_path / "r.csv")
    text = (tmp_path / "r.csv").read_text().replace("gyr_x", "acc_x", 1)
    (tmp_path / "r.csv").write_text(text)
    with pytest.raises(RecordingFormatError, match="duplicate"):
        load_recording(tmp_path / "r.csv")


def test_recording_invariants():
    with pytest.raises(ValueError):
        SensorRecording("P", "s", "d", 25.0, ["a", "a"], np.zeros((3, 2)))
    with pytest.raises(ValueError):
        SensorRecording("P", "s", "d", 25.0, ["a"], np.zeros((0, 1)))


# -- labels and schemes ------------------------------------------------------

def test_label_track_rejects_overlap_and_unknown():
    with pytest.raises(LabelError):
        LabelTrack([(0, 5, "Walking"), (4, 8, "Null")])
    with pytest.raises(LabelError):
        LabelTrack([(0, 5, "Dancing")])
    with pytest.raises(LabelError):
        LabelTrack([(5, 5, "Null")])


def test_label_roundtrip(tmp_path):
    track = LabelTrack([(0.0, 1.5, "Walking"), (2.0, 3.0, "Null")])
    save_labels(track, tmp_path / "l.json")
    assert load_labels(tmp_path / "l.json").intervals == track.intervals


def test_scheme_examples():
    walk = LabelTrack([(0, 1, "Walking")])
    press = LabelTrack([(0, 1, "PressingButton")])
    null = LabelTrack([(0, 1, "Null")])
    assert apply_scheme(walk, get_scheme("Binary2")).intervals[0].activity == "Walking"
    assert apply_scheme(press, get_scheme("Binary2")).intervals[0].activity == "NonWalking"
    assert apply_scheme(null, get_scheme("NoNull11")).intervals == []


def test_scheme_definitions():
    full = get_scheme("Full12")
    assert full.labels == ACTIVITIES and all(full.mapping[a] == a for a in ACTIVITIES)
    p4, p3 = get_scheme("Posture4"), get_scheme("Posture3")
    assert p4.labels == ("Null", "UpperParts", "LowerParts", "Walking")
    assert p3.labels == ("UpperParts", "LowerParts", "Walking")
    assert p4.mapping["CheckingMachines"] == "LowerParts"
    assert sum(v == "UpperParts" for v in p4.mapping.values()) == 9
    assert get_scheme("binary2").labels == ("Walking", "NonWalking")
    with pytest.raises(LabelError):
        get_scheme("Full13")


def test_scheme_mapping_must_be_total():
    mapping = dict(get_scheme("Posture4").mapping)
    del mapping["Walking"]
    with pytest.raises(LabelError):
        get_scheme("Posture4", mapping)


# -- clap sync and alignment -------------------------------------------------

def spiky(T, rate, spikes_s, seed=0, amp=40.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=0.3, size=(T, 10))
    for t in spikes_s:
        k = int(round(t * rate))
        for off, w in ((-1, 0.5), (0, 1.0), (1, 0.5)):
            x[k + off, :3] += w * amp
    return SensorRecording("P", "s", "left", rate, PROPOSED_CHANNELS, x)


def test_sync_finds_spikes():
    rec = spiky(250, 25.0, [1, 2, 3, 4, 5])
    times = detect_clap_sync(rec)
    assert len(times) == 5
    np.testing.assert_allclose(times, [1, 2, 3, 4, 5], atol=1 / 25)


def test_sync_zero_stream():
    rec = SensorRecording("P", "s", "d", 25.0, PROPOSED_CHANNELS, np.zeros((250, 10)))
    with pytest.raises(SyncNotFound) as err:
        detect_clap_sync(rec)
    assert err.value.count == 0


def test_sync_delay_difference():
    rate = 100.0
    a = spiky(1500, rate, [1, 2, 3, 4, 5, 10, 11, 12, 13, 14], seed=1)
    b = spiky(1500, rate, [t + 0.52 for t in [1, 2, 3, 4, 5, 10, 11, 12, 13, 14]], seed=2)
    da, db = detect_clap_sync(a), detect_clap_sync(b)
    assert len(da) == 10
    assert abs((db[0] - da[0]) - 0.52) <= 1 / rate + 1e-12


def test_align_overlap_arithmetic():
    a = make_rec(250, "a", seed=1)
    b = make_rec(250, "b", seed=2)
    merged = align_devices([b, a], {"a": 1.0, "b": 1.4})  # b's clap 10 samples later
    assert merged.samples.shape == (240, 20)
    assert merged.channels[0] == "a.acc_x" and merged.channels[10] == "b.acc_x"
    np.testing.assert_array_equal(merged.samples[:, :10], a.samples[:240])
    np.testing.assert_array_equal(merged.samples[:, 10:], b.samples[10:])


def test_align_single_device_identity():
    a = make_rec(100, "a")
    merged = align_devices([a], {"a": 0.7})
    np.testing.assert_array_equal(merged.samples, a.samples)
    assert merged.start_time_s == 0.0


def test_align_three_watch_style_devices():
    recs = [make_rec(400, d, 100.0, WATCH_CHANNELS, seed=i) for i, d in enumerate(["wl", "arm", "wr"])]
    m1 = align_devices(recs, {"wl": 1.0, "arm": 1.0, "wr": 1.0})
    m2 = align_devices(recs[::-1], {"wl": 1.0, "arm": 1.0, "wr": 1.0})
    assert m1.samples.shape[1] == 27 and m1.channels == m2.channels
    np.testing.assert_array_equal(m1.samples, m2.samples)


def test_align_rejects_mixed_rates_and_empty_overlap():
    with pytest.raises(AlignmentError):
        align_devices([make_rec(100, "a"), make_rec(100, "b", rate=100.0, channels=WATCH_CHANNELS)],
                      {"a": 0.0, "b": 0.0})
    with pytest.raises(AlignmentError):
        align_devices([make_rec(100, "a"), make_rec(100, "b")], {"a": 0.0, "b": 3.9 + 1.0})


def test_align_idempotent():
    a, b = make_rec(250, "a", seed=1), make_rec(250, "b", seed=2)
    m = align_devices([a, b], {"a": 1.0, "b": 1.4})
    parts = [SensorRecording("P", "s1", d, 25.0, PROPOSED_CHANNELS, m.samples[:, i * 10:(i + 1) * 10])
             for i, d in enumerate("ab")]
    again = align_devices(parts, {"a": 0.5, "b": 0.5})
    np.testing.assert_array_equal(again.samples, m.samples)


# -- segmentation ------------------------------------------------------------

def test_window_counts_examples():
    track = LabelTrack([(0, 4.0, "Walking")])
    x = np.zeros((100, 2))
    assert len(segment_windows(stream_of(x), track, 25, 1)) == 76
    assert len(segment_windows(stream_of(x), track, 100, 4)) == 1


def test_window_too_long_warns():
    ds = segment_windows(stream_of(np.zeros((10, 2))), LabelTrack([(0, 1, "Null")]), 25, 1)
    assert len(ds) == 0 and ds.warnings


def test_majority_13_of_25():
    # 13 Walking samples then 12 Null samples
    track = LabelTrack([(0, 13 / 25, "Walking"), (13 / 25, 1.0, "Null")])
    ds = segment_windows(stream_of(np.zeros((25, 1))), track, 25, 1)
    assert [ACTIVITIES[i] for i in ds.y] == ["Walking"]


def test_tie_goes_to_earlier_interval():
    codes = np.array([3, 3, 1, 1])
    _, labels = majority_labels(codes, 4, 1)
    assert labels.tolist() == [3]


def test_unlabeled_and_dropped_windows_omitted():
    track = apply_scheme(LabelTrack([(0, 1.0, "Null"), (1.0, 2.0, "Walking")]), get_scheme("NoNull11"))
    codes = sample_codes(track, 75, 0.0, 25.0)
    assert (codes[:25] == DROPPED).all() and (codes[50:] == UNLABELED).all()
    ds = segment_windows(stream_of(np.zeros((75, 1))), track, 25, 1)
    # only windows where Walking holds the majority survive
    assert ds.start_index.min() == 13 and ds.start_index.max() == 37
    assert set(ds.y.tolist()) == {get_scheme("NoNull11").labels.index("Walking")}


@settings(max_examples=60, deadline=None)
@given(T=st.integers(1, 300), W=st.integers(1, 120), step=st.integers(1, 10))
def test_window_count_law(T, W, step):
    track = LabelTrack([(0, T / 25 + 1, "Walking")])
    ds = segment_windows(stream_of(np.zeros((T, 1))), track, W, step)
    expected = (T - W) // step + 1 if W <= T else 0
    assert len(ds) == expected
    assert all(w.shape == (W, 1) for w in ds.X)


def random_track(rng, T, rate=25.0):
    edges = np.sort(rng.choice(np.arange(1, T), size=rng.integers(2, 8), replace=False))
    edges = np.concatenate([[0], edges, [T]]) / rate
    acts = rng.choice(ACTIVITIES, size=len(edges) - 1)
    return LabelTrack([(a, b, act) for a, b, act in zip(edges[:-1], edges[1:], acts)])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_scheme_algebra(seed):
    rng = np.random.default_rng(seed)
    T = 300
    track = random_track(rng, T)
    stream = stream_of(rng.normal(size=(T, 2)))

    def windows(name):
        scheme = get_scheme(name)
        ds = segment_windows(stream, apply_scheme(track, scheme), 25, 1)
        return {s: scheme.labels[y] for s, y in zip(ds.start_index.tolist(), ds.y.tolist())}

    full, nonull = windows("Full12"), windows("NoNull11")
    assert nonull == {s: l for s, l in full.items() if l != "Null"}
    p4, p3 = windows("Posture4"), windows("Posture3")
    assert p3 == {s: l for s, l in p4.items() if l != "Null"}
    b2 = windows("Binary2")
    assert set(b2) == set(full) and set(b2.values()) <= {"Walking", "NonWalking"}


def test_window_provenance():
    rng = np.random.default_rng(3)
    stream = stream_of(rng.normal(size=(120, 3)))
    ds = segment_windows(stream, LabelTrack([(0, 5, "Walking")]), 25, 3)
    for x, _, _, start in ds.windows:
        np.testing.assert_array_equal(x, stream.samples[start:start + 25])


# -- normalization -----------------------------------------------------------

def _ds(x):
    return segment_windows(stream_of(x), LabelTrack([(0, len(x) / 25 + 1, "Walking")]), 25, 5)


def test_normalizer_on_own_training_set():
    x = np.random.default_rng(0).normal(loc=3.0, scale=2.0, size=(200, 4))
    ds = _ds(x)
    out = apply_normalizer(ds, fit_normalizer(ds))
    rows = out.X.reshape(-1, 4)
    assert np.abs(rows.mean(axis=0)).max() < 1e-9
    assert np.abs(rows.std(axis=0) - 1).max() < 1e-9


def test_normalizer_constant_channel():
    x = np.random.default_rng(1).normal(size=(100, 3))
    x[:, 1] = 0.1
    ds = _ds(x)
    out = apply_normalizer(ds, fit_normalizer(ds))
    np.testing.assert_array_equal(out.X[:, :, 1], 0.0)


def test_normalizer_uses_train_statistics():
    rng = np.random.default_rng(2)
    train = _ds(rng.normal(size=(400, 2)))
    test = _ds(rng.normal(size=(400, 2)) + np.array([2.0, -1.0]))
    stats = fit_normalizer(train)
    out = apply_normalizer(test, stats).X.reshape(-1, 2).mean(axis=0)
    expected = (test.X.reshape(-1, 2).mean(axis=0) - stats.mean) / stats.std
    np.testing.assert_allclose(out, expected, atol=1e-12)
    assert out[0] > 1.0 and out[1] < -0.5
