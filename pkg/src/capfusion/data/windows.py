"""Sliding-window segmentation and train-statistics normalization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .labels import LabelTrack

UNLABELED = -1
DROPPED = -2

# (window length, step) in samples: 1-second windows at both device rates
WINDOW_PARAMS = {25.0: (25, 1), 100.0: (100, 4)}


def window_params_for_rate(rate_hz: float) -> tuple[int, int]:
    try:
        return WINDOW_PARAMS[float(rate_hz)]
    except KeyError:
        raise ValueError(f"no default window for {rate_hz} Hz; pass window_len and step explicitly") from None


@dataclass
class WindowDataset:
    X: np.ndarray  # [N, W, C]
    y: np.ndarray  # [N] label ids
    session_ids: np.ndarray  # [N]
    start_index: np.ndarray  # [N] row of the window start in its session's merged stream
    window_len: int
    step: int
    channel_layout: list
    label_names: tuple
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.y)

    @property
    def windows(self):
        """(data, label, session_id, start_index) per window."""
        return list(zip(self.X, self.y.tolist(), self.session_ids.tolist(), self.start_index.tolist()))

    def subset(self, mask) -> "WindowDataset":
        return replace(self, X=self.X[mask], y=self.y[mask], session_ids=self.session_ids[mask],
                       start_index=self.start_index[mask], warnings=list(self.warnings))

    def for_sessions(self, sessions) -> "WindowDataset":
        return self.subset(np.isin(self.session_ids, list(sessions)))

    @classmethod
    def concat(cls, parts: list["WindowDataset"]) -> "WindowDataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        first = parts[0]
        for p in parts[1:]:
            if (p.window_len, p.step, list(p.channel_layout), tuple(p.label_names)) != \
                    (first.window_len, first.step, list(first.channel_layout), tuple(first.label_names)):
                raise ValueError("datasets differ in window shape, channel layout or labels")
        return cls(np.concatenate([p.X for p in parts]), np.concatenate([p.y for p in parts]),
                   np.concatenate([p.session_ids for p in parts]), np.concatenate([p.start_index for p in parts]),
                   first.window_len, first.step, list(first.channel_layout), tuple(first.label_names),
                   [w for p in parts for w in p.warnings])


def _sample_range(start_s, end_s, t0, rate, n):
    # sample i (time t0 + i/rate) belongs to [start_s, end_s)
    lo = math.ceil((start_s - t0) * rate - 1e-9)
    hi = math.ceil((end_s - t0) * rate - 1e-9)
    return max(lo, 0), min(hi, n)


def sample_codes(track: LabelTrack, num_samples: int, start_time_s: float, rate_hz: float) -> np.ndarray:
    """Per-sample label id, UNLABELED for unannotated time, DROPPED for scheme-dropped spans."""
    codes = np.full(num_samples, UNLABELED, dtype=np.int64)
    index = {lab: i for i, lab in enumerate(track.labels)}
    for iv in track.intervals:
        lo, hi = _sample_range(iv.start_s, iv.end_s, start_time_s, rate_hz, num_samples)
        codes[lo:hi] = index[iv.activity]
    for s, e in track.dropped:
        lo, hi = _sample_range(s, e, start_time_s, rate_hz, num_samples)
        codes[lo:hi] = DROPPED
    return codes


def majority_labels(codes: np.ndarray, window_len: int, step: int) -> tuple[np.ndarray, np.ndarray]:
    """Window starts and the majority code of each window.

    Ties go to the code whose first sample in the window comes earliest,
    i.e. the earlier interval.
    """
    T = len(codes)
    starts = np.arange(0, T - window_len + 1, step)
    if len(starts) == 0:
        return starts, np.zeros(0, dtype=np.int64)
    shifted = codes - DROPPED  # 0 = dropped, 1 = unlabeled, 2.. = labels
    n_codes = int(shifted.max()) + 1
    onehot = np.zeros((T + 1, n_codes), dtype=np.int64)
    onehot[np.arange(1, T + 1), shifted] = 1
    cum = onehot.cumsum(axis=0)
    counts = cum[starts + window_len] - cum[starts]
    best = counts.max(axis=1)
    winners = counts.argmax(axis=1)
    tied = np.flatnonzero((counts == best[:, None]).sum(axis=1) > 1)
    for n in tied:
        candidates = np.flatnonzero(counts[n] == best[n])
        window = shifted[starts[n]:starts[n] + window_len]
        first = [int(np.argmax(window == c)) for c in candidates]
        winners[n] = candidates[int(np.argmin(first))]
    return starts, winners + DROPPED


def segment_windows(stream, track: LabelTrack, window_len: int, step: int) -> WindowDataset:
    """Cut a merged stream into labeled windows.

    Windows start at 0, step, 2*step, ... while fully inside the stream; the
    label is the in-window majority; windows won by unannotated or dropped
    time are omitted.
    """
    if step < 1 or window_len < 1:
        raise ValueError("window_len and step must be >= 1")
    T, C = stream.samples.shape
    empty = WindowDataset(np.zeros((0, window_len, C)), np.zeros(0, dtype=np.int64), np.array([], dtype=object),
                          np.zeros(0, dtype=np.int64), window_len, step, list(stream.channels), tuple(track.labels))
    if window_len > T:
        empty.warnings.append(f"session {stream.session_id}: window_len {window_len} exceeds {T} samples")
        return empty
    codes = sample_codes(track, T, stream.start_time_s, stream.rate_hz)
    starts, labels = majority_labels(codes, window_len, step)
    keep = labels >= 0
    starts, labels = starts[keep], labels[keep]
    view = sliding_window_view(stream.samples, window_len, axis=0)  # [T-W+1, C, W]
    X = np.ascontiguousarray(view[starts].transpose(0, 2, 1))
    sessions = np.array([stream.session_id] * len(starts), dtype=object)
    return WindowDataset(X, labels.astype(np.int64), sessions, starts.astype(np.int64), window_len, step,
                         list(stream.channels), tuple(track.labels))


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray  # [C]
    std: np.ndarray  # [C], floored


def fit_normalizer(train: WindowDataset, floor: float = 1e-8) -> Normalizer:
    if len(train) == 0:
        raise ValueError("cannot fit a normalizer on an empty dataset")
    rows = train.X.reshape(-1, train.X.shape[2])
    mean = rows.mean(axis=0)
    # a summed mean of identical values can be off by an ulp; pin constants exactly
    const = rows.min(axis=0) == rows.max(axis=0)
    mean[const] = rows[0, const]
    return Normalizer(mean, np.maximum(rows.std(axis=0), floor))


def apply_normalizer(ds: WindowDataset, stats: Normalizer) -> WindowDataset:
    return replace(ds, X=(ds.X - stats.mean) / stats.std, warnings=list(ds.warnings))
