"""Per-device recordings and their CSV file format.

A recording file is UTF-8 text::

    #subject=S01
    #session=s1
    #device=left
    #rate_hz=25
    #start_time_s=0
    acc_x,acc_y,acc_z,...
    0.12,-0.5,9.81,...

Floats are written with Python's shortest round-trip repr, so a
write-then-load cycle is bit-exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HEADER_KEYS = ("subject", "session", "device", "rate_hz", "start_time_s")

PROPOSED_CHANNELS = ("acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z", "mag_x", "mag_y", "mag_z", "cap")
WATCH_CHANNELS = PROPOSED_CHANNELS[:9]
DEVICE_KINDS = {
    "proposed": (PROPOSED_CHANNELS, 25.0),
    "watch": (WATCH_CHANNELS, 100.0),
}


class RecordingFormatError(ValueError):
    def __init__(self, message: str, path=None, row: int | None = None, column: int | None = None):
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"line {row}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.path = path
        self.row = row
        self.column = column


@dataclass
class SensorRecording:
    subject_id: str
    session_id: str
    device_id: str
    rate_hz: float
    channels: list
    samples: np.ndarray  # [T, C]
    start_time_s: float = 0.0

    def __post_init__(self):
        self.channels = list(self.channels)
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if not (self.rate_hz > 0 and math.isfinite(self.rate_hz)):
            raise ValueError(f"rate_hz must be positive, got {self.rate_hz}")
        if self.samples.ndim != 2 or self.samples.shape[0] < 1:
            raise ValueError(f"samples must be [T >= 1, C], got shape {self.samples.shape}")
        if self.samples.shape[1] != len(self.channels):
            raise ValueError(f"{len(self.channels)} channel names for {self.samples.shape[1]} sample columns")
        seen = set()
        for name in self.channels:
            if name in seen:
                raise ValueError(f"duplicate channel name {name!r}")
            seen.add(name)

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_time_s + np.arange(self.num_samples) / self.rate_hz


def save_recording(rec: SensorRecording, path) -> None:
    meta = {"subject": rec.subject_id, "session": rec.session_id, "device": rec.device_id,
            "rate_hz": repr(float(rec.rate_hz)), "start_time_s": repr(float(rec.start_time_s))}
    lines = [f"#{key}={meta[key]}" for key in HEADER_KEYS]
    lines.append(",".join(rec.channels))
    lines.extend(",".join(map(repr, row)) for row in rec.samples.tolist())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_recording(path) -> SensorRecording:
    meta = {}
    rows = []
    channels = None
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            if channels is None and line.startswith("#"):
                key, sep, value = line[1:].partition("=")
                if not sep:
                    raise RecordingFormatError(f"malformed header line {line!r}", path, lineno)
                meta[key.strip()] = value.strip()
                continue
            cells = next(csv.reader([line]))
            if channels is None:
                channels = [c.strip() for c in cells]
                dupes = sorted({c for c in channels if channels.count(c) > 1})
                if dupes:
                    col = channels.index(dupes[0]) + 1
                    raise RecordingFormatError(f"duplicate channel name {dupes[0]!r}", path, lineno,
                                               channels.index(dupes[0], col) + 1)
                continue
            if len(cells) != len(channels):
                raise RecordingFormatError(f"expected {len(channels)} values, found {len(cells)}", path, lineno)
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                for col, c in enumerate(cells, start=1):
                    try:
                        float(c)
                    except ValueError:
                        raise RecordingFormatError(f"non-numeric value {c!r}", path, lineno, col) from None
    missing = [k for k in HEADER_KEYS if k not in meta]
    if missing:
        raise RecordingFormatError(f"missing header fields {missing}", path)
    if channels is None:
        raise RecordingFormatError("no channel header row", path)
    if not rows:
        raise RecordingFormatError("no sample rows", path)
    try:
        rate = float(meta["rate_hz"])
        start = float(meta["start_time_s"])
    except ValueError as exc:
        raise RecordingFormatError(f"bad numeric header: {exc}", path) from None
    return SensorRecording(meta["subject"], meta["session"], meta["device"], rate, channels,
                           np.array(rows, dtype=np.float64), start)
