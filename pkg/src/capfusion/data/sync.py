"""Clap-based synchronization of several devices recorded in one session."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .recording import SensorRecording


class SyncNotFound(RuntimeError):
    def __init__(self, count: int, device: str = ""):
        who = f"device {device!r}: " if device else ""
        super().__init__(f"{who}clap sync not found ({count} qualifying peaks)")
        self.count = count


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class ClapConfig:
    threshold_sigmas: float = 4.0
    min_gap_s: float = 0.2
    accel_prefix: str = "acc"


def accel_magnitude(rec: SensorRecording, config: ClapConfig = ClapConfig()) -> np.ndarray:
    cols = [i for i, name in enumerate(rec.channels) if name.rsplit(".", 1)[-1].startswith(config.accel_prefix)]
    if len(cols) != 3:
        raise ValueError(f"recording {rec.device_id!r} needs 3 accelerometer channels, found {len(cols)}")
    return np.sqrt((rec.samples[:, cols] ** 2).sum(axis=1))


def detect_clap_sync(rec: SensorRecording, min_peaks: int = 5, config: ClapConfig = ClapConfig()) -> list[float]:
    """Clap instants (seconds, recording clock): the first and last ``min_peaks`` peaks.

    Peaks are local maxima of the accelerometer magnitude above
    mean + ``threshold_sigmas`` * std, at least ``min_gap_s`` apart.
    """
    mag = accel_magnitude(rec, config)
    threshold = mag.mean() + config.threshold_sigmas * mag.std()
    gap = max(1, int(round(config.min_gap_s * rec.rate_hz)))
    peaks, _ = find_peaks(mag, height=threshold, distance=gap) if mag.std() > 0 else (np.array([], int), None)
    if len(peaks) < min_peaks:
        raise SyncNotFound(len(peaks), rec.device_id)
    chosen = sorted(set(peaks[:min_peaks].tolist()) | set(peaks[-min_peaks:].tolist()))
    return [rec.start_time_s + i / rec.rate_hz for i in chosen]


@dataclass
class MergedStream:
    """Device streams cut to their common span and stacked channel-wise.

    ``start_time_s`` is the time of row 0 on the reference device's clock
    (the first device id in sorted order); label tracks use that clock.
    """

    session_id: str
    rate_hz: float
    start_time_s: float
    samples: np.ndarray  # [T', C_total]
    channels: list
    device_rows: dict  # device id -> index of that device's sample at merged row 0

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]


def align_devices(recordings: list[SensorRecording], sync: dict) -> MergedStream:
    """Shift devices so their first claps coincide and crop to the overlap.

    ``sync`` maps device id to that device's first clap time (own clock).
    """
    if not recordings:
        raise AlignmentError("no recordings to align")
    recs = sorted(recordings, key=lambda r: r.device_id)
    ids = [r.device_id for r in recs]
    if len(set(ids)) != len(ids):
        raise AlignmentError(f"duplicate device ids {ids}")
    rates = {r.rate_hz for r in recs}
    if len(rates) != 1:
        raise AlignmentError(f"mixed sampling rates {sorted(rates)}; resampling is not supported")
    missing = [d for d in ids if d not in sync]
    if missing:
        raise AlignmentError(f"no sync time for devices {missing}")
    rate = recs[0].rate_hz
    # sample index of each device's first clap
    clap_idx = {r.device_id: int(round((sync[r.device_id] - r.start_time_s) * rate)) for r in recs}
    lo = max(-clap_idx[r.device_id] for r in recs)
    hi = min(r.num_samples - clap_idx[r.device_id] for r in recs)
    if hi <= lo:
        raise AlignmentError(f"devices {ids} have no overlapping span after alignment")
    rows = {r.device_id: lo + clap_idx[r.device_id] for r in recs}
    blocks, channels = [], []
    for r in recs:
        first = rows[r.device_id]
        blocks.append(r.samples[first:first + hi - lo])
        channels += [f"{r.device_id}.{c}" for c in r.channels]
    ref = recs[0]
    start = ref.start_time_s + rows[ref.device_id] / rate
    return MergedStream(ref.session_id, rate, start, np.hstack(blocks), channels, rows)
