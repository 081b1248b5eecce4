"""Synthetic multi-device corpora with known labels, claps and clock offsets.

Time bookkeeping: the reference device (first device id in sorted order)
defines the label clock.  Script segments and claps live on integer sample
positions of that clock, so label boundaries fall exactly on samples and the
window-label oracle can work in integer arithmetic.  A device with clock
offset ``o`` sees reference time ``t`` at its own time ``t + o - o_ref``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data.labels import ACTIVITIES, Interval, LabelTrack, save_labels
from .data.recording import DEVICE_KINDS, SensorRecording, save_recording
from .models import modality_of

MODES = ("ImuDiscriminative", "BcsDiscriminative", "Both")


class SynthConfigError(ValueError):
    pass


@dataclass
class Signature:
    freq_hz: float
    amplitude: float = 1.0


@dataclass
class ActivityConfig:
    name: str
    imu: Signature | None = None
    bcs: Signature | None = None
    noise_std: float = 0.3


@dataclass
class DeviceConfig:
    device_id: str
    kind: str = "proposed"
    clock_offset_s: float = 0.0


def _default_devices():
    return [DeviceConfig("left", "proposed", 0.0), DeviceConfig("right", "proposed", 0.52)]


def _default_activities():
    return [
        ActivityConfig("Null", Signature(0.5, 1.0), Signature(0.6, 1.0)),
        ActivityConfig("PressingButton", Signature(1.5, 1.0), Signature(1.8, 1.0)),
        ActivityConfig("CheckingMachines", Signature(3.0, 1.0), Signature(3.3, 1.0)),
        ActivityConfig("Walking", Signature(5.0, 1.0), Signature(5.2, 1.0)),
    ]


@dataclass
class SynthConfig:
    seed: int = 0
    num_sessions: int = 5
    duration_s: float = 60.0
    rate_hz: float = 25.0
    devices: list = field(default_factory=_default_devices)
    activities: list = field(default_factory=_default_activities)
    separability_mode: str = "ImuDiscriminative"
    # fixed script shared by every session; None draws a balanced random one per session
    script: list | None = None
    segment_s: float = 6.0
    script_start_s: float = 6.0
    # noise on channels that carry no class signal
    noise_std: float = 0.3
    # per-session offset drawn from U(-jitter, jitter), added to every non-reference device
    offset_jitter_s: float = 0.0
    # reference-clock instants of the start claps; end claps mirror them
    clap_times_s: list = field(default_factory=lambda: [2.5, 3.0, 3.5, 4.0, 4.5])
    clap_amplitude: float | None = None

    def __post_init__(self):
        self.devices = [d if isinstance(d, DeviceConfig) else DeviceConfig(**d) for d in self.devices]
        acts = []
        for a in self.activities:
            if not isinstance(a, ActivityConfig):
                a = dict(a)
                for key in ("imu", "bcs"):
                    if isinstance(a.get(key), dict):
                        a[key] = Signature(**a[key])
                a = ActivityConfig(**a)
            acts.append(a)
        self.activities = acts
        if self.script is not None:
            self.script = [(str(name), float(d)) for name, d in self.script]
        self.validate()

    # -- validation -----------------------------------------------------
    def validate(self):
        if self.num_sessions < 1:
            raise SynthConfigError("num_sessions must be >= 1")
        if not self.duration_s > 0:
            raise SynthConfigError("duration_s must be > 0")
        if self.separability_mode not in MODES:
            raise SynthConfigError(f"separability_mode must be one of {MODES}")
        if not self.devices:
            raise SynthConfigError("at least one device is required")
        ids = [d.device_id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise SynthConfigError(f"duplicate device ids {ids}")
        for d in self.devices:
            if d.kind not in DEVICE_KINDS:
                raise SynthConfigError(f"device {d.device_id}: unknown kind {d.kind!r}")
            if DEVICE_KINDS[d.kind][1] != self.rate_hz:
                raise SynthConfigError(f"device {d.device_id}: {d.kind} devices sample at "
                                       f"{DEVICE_KINDS[d.kind][1]} Hz, corpus rate is {self.rate_hz}")
        if not self.activities:
            raise SynthConfigError("at least one activity is required")
        names = [a.name for a in self.activities]
        if len(set(names)) != len(names):
            raise SynthConfigError(f"duplicate activities {names}")
        nyquist = self.rate_hz / 2
        for a in self.activities:
            if a.name not in ACTIVITIES:
                raise SynthConfigError(f"activity {a.name!r} is not one of the 12 base activities")
            if a.noise_std < 0:
                raise SynthConfigError(f"activity {a.name}: noise_std must be >= 0")
            for sig in (a.imu, a.bcs):
                if sig is not None and not 0 <= sig.freq_hz < nyquist:
                    raise SynthConfigError(f"activity {a.name}: frequency {sig.freq_hz} Hz not below "
                                           f"Nyquist ({nyquist} Hz)")
        if self.script is not None:
            for name, d in self.script:
                if name not in names:
                    raise SynthConfigError(f"script activity {name!r} has no signature")
                if not d > 0:
                    raise SynthConfigError(f"script duration for {name} must be > 0")
                if round(d * self.rate_hz) < 1:
                    raise SynthConfigError(f"script duration {d} s is shorter than one sample")
            end = self.script_start_s + sum(d for _, d in self.script)
            if end > self.duration_s + 1e-9:
                raise SynthConfigError(f"script ends at {end:.3f} s, after the {self.duration_s} s session")
        elif not self.segment_s > 0:
            raise SynthConfigError("segment_s must be > 0")

    # -- io -------------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        if self.script is not None:
            d["script"] = [list(s) for s in self.script]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise SynthConfigError(f"unknown config keys {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise SynthConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "SynthConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SynthConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise SynthConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(raw)

    # -- derived --------------------------------------------------------
    @property
    def num_samples(self) -> int:
        return int(round(self.duration_s * self.rate_hz))

    @property
    def reference_device(self) -> str:
        return min(d.device_id for d in self.devices)

    def session_ids(self) -> list[str]:
        return [f"S{i + 1:02d}" for i in range(self.num_sessions)]

    def activity(self, name) -> ActivityConfig:
        return next(a for a in self.activities if a.name == name)


@dataclass
class SynthSession:
    session_id: str
    recordings: list  # SensorRecording per device, sorted by id
    labels: LabelTrack
    offsets_s: dict  # device id -> injected clock offset
    script: list  # (activity, start_sample, end_sample) on the reference clock
    clap_samples: list  # reference-clock sample indices of the claps


@dataclass
class SynthCorpus:
    config: SynthConfig
    sessions: list

    def ground_truth_offsets(self) -> dict:
        return {s.session_id: dict(s.offsets_s) for s in self.sessions}


def session_script(config: SynthConfig, session: int) -> list[tuple[str, int, int]]:
    """(activity, start, end) in reference-clock samples, end exclusive."""
    rate = config.rate_hz
    pos = int(round(config.script_start_s * rate))
    if config.script is not None:
        durations = [(name, int(round(d * rate))) for name, d in config.script]
    else:
        rng = np.random.default_rng([config.seed, session, 1])
        seg = int(round(config.segment_s * rate))
        # leave the same margin at the end as at the start so end claps stay clear
        n = max(0, (config.num_samples - 2 * pos) // seg) if seg > 0 else 0
        names = [a.name for a in config.activities]
        order = []
        while len(order) < n:
            order += [names[i] for i in rng.permutation(len(names))]
        durations = [(name, seg) for name in order[:n]]
    out = []
    for name, n in durations:
        out.append((name, pos, pos + n))
        pos += n
    if pos > config.num_samples:
        raise SynthConfigError(f"script needs {pos} samples, session has {config.num_samples}")
    return out


def _clap_samples(config: SynthConfig) -> list[int]:
    rate, T = config.rate_hz, config.num_samples
    start = [int(round(t * rate)) for t in config.clap_times_s]
    end = [T - 1 - int(round(t * rate)) for t in reversed(config.clap_times_s)]
    return start + end


def _signal_peak(config: SynthConfig) -> float:
    peak = config.noise_std
    for a in config.activities:
        for sig in (a.imu, a.bcs):
            if sig is not None:
                peak = max(peak, sig.amplitude + 3 * a.noise_std)
    return 3 * config.noise_std + peak


def _generate_session(config: SynthConfig, index: int) -> SynthSession:
    rng = np.random.default_rng([config.seed, index, 0])
    sid = config.session_ids()[index]
    rate, T = config.rate_hz, config.num_samples
    ref = config.reference_device
    devices = sorted(config.devices, key=lambda d: d.device_id)
    offsets = {}
    for d in devices:
        jitter = 0.0
        if config.offset_jitter_s > 0 and d.device_id != ref:
            jitter = rng.uniform(-config.offset_jitter_s, config.offset_jitter_s)
        offsets[d.device_id] = d.clock_offset_s + jitter
    script = session_script(config, index)
    claps = _clap_samples(config)
    clap_amp = config.clap_amplitude or 10.0 * _signal_peak(config)
    use_imu = config.separability_mode in ("ImuDiscriminative", "Both")
    use_bcs = config.separability_mode in ("BcsDiscriminative", "Both")

    # one phase per segment and modality: every sensor sees the same underlying motion,
    # so channels carry no segment-specific cross-channel pattern to memorize
    phases = rng.uniform(0, 2 * math.pi, size=(len(script), 2))

    recordings = []
    for dev in devices:
        channels, _ = DEVICE_KINDS[dev.kind]
        shift = (offsets[dev.device_id] - offsets[ref]) * rate  # own sample = ref sample + shift
        pos = np.arange(T) - shift  # reference-clock position of each own sample
        x = rng.normal(0.0, config.noise_std, size=(T, len(channels)))
        for k, (name, a, b) in enumerate(script):
            act = config.activity(name)
            idx = np.flatnonzero((pos >= a) & (pos < b))
            if len(idx) == 0:
                continue
            t = pos[idx] / rate
            for c, ch in enumerate(channels):
                sig = act.imu if modality_of(ch) == "IMU" else act.bcs
                if sig is None or not (use_imu if modality_of(ch) == "IMU" else use_bcs):
                    continue
                phase = phases[k, 0 if modality_of(ch) == "IMU" else 1]
                x[idx, c] = sig.amplitude * np.sin(2 * math.pi * sig.freq_hz * t + phase) \
                    + rng.normal(0.0, act.noise_std, size=len(idx))
        acc = [c for c, ch in enumerate(channels) if ch.startswith("acc")]
        for k in claps:
            centre = int(round(k + shift))
            for off, w in ((-1, 0.5), (0, 1.0), (1, 0.5)):  # half-cosine, 3 samples
                j = centre + off
                if 0 <= j < T:
                    x[j, acc] += w * clap_amp
        recordings.append(SensorRecording(f"P{index + 1:02d}", sid, dev.device_id, rate, list(channels), x, 0.0))

    track = LabelTrack([Interval(a / rate, b / rate, name) for name, a, b in script])
    return SynthSession(sid, recordings, track, offsets, script, claps)


def generate_corpus(config: SynthConfig) -> SynthCorpus:
    return SynthCorpus(config, [_generate_session(config, i) for i in range(config.num_sessions)])


def write_corpus(corpus: SynthCorpus, out_dir) -> Path:
    """Lay out sessions/<id>/<device>.csv, sessions/<id>/labels.json and manifest.json."""
    root = Path(out_dir)
    for s in corpus.sessions:
        d = root / "sessions" / s.session_id
        d.mkdir(parents=True, exist_ok=True)
        for rec in s.recordings:
            save_recording(rec, d / f"{rec.device_id}.csv")
        save_labels(s.labels, d / "labels.json")
    manifest = {
        "config": corpus.config.to_dict(),
        "reference_device": corpus.config.reference_device,
        "clock_offsets_s": corpus.ground_truth_offsets(),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return root


def expected_majority_labels(config: SynthConfig, window_len: int, step: int,
                             session: int = 0) -> tuple[list[int], list[str]]:
    """Window starts and labels over the reference device's samples, from the script alone.

    Counts samples per activity in each window; ties go to the activity met
    first; windows where unscripted samples win are left out.
    """
    script = session_script(config, session)
    T = config.num_samples
    starts, labels = [], []
    for w0 in range(0, T - window_len + 1, step):
        w1 = w0 + window_len
        counts, first = {}, {}
        covered = 0
        for name, a, b in script:
            n = min(b, w1) - max(a, w0)
            if n <= 0:
                continue
            covered += n
            counts[name] = counts.get(name, 0) + n
            first.setdefault(name, max(a, w0))
        gaps = window_len - covered
        if gaps:
            # first unscripted sample in the window
            edges = sorted((max(a, w0), min(b, w1)) for _, a, b in script if min(b, w1) > max(a, w0))
            pos = w0
            for a, b in edges:
                if a > pos:
                    break
                pos = max(pos, b)
            counts[None], first[None] = gaps, pos
        best = max(counts.values())
        winner = min((k for k in counts if counts[k] == best), key=lambda k: first[k])
        if winner is not None:
            starts.append(w0)
            labels.append(winner)
    return starts, labels
