"""Activity vocabulary, label tracks and the five annotation schemes."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

ACTIVITIES = (
    "Null",
    "PressingButton",
    "SlidingDoorlock",
    "OpeningDoor",
    "ClosingDoor",
    "CheckingMachines",
    "Walking",
    "TakingKey",
    "RotatingKey",
    "PlacingKeyBack",
    "CheckingDoorlock",
    "TouchingScreen",
)
DROP = "DROP"
SCHEMES = ("Full12", "NoNull11", "Posture4", "Posture3", "Binary2")
_ALIASES = {name.lower(): name for name in SCHEMES}


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class Interval:
    start_s: float
    end_s: float
    activity: str


@dataclass
class LabelTrack:
    """Sorted, non-overlapping activity intervals.

    ``labels`` is the ordered label vocabulary (ids are indices into it).
    After a scheme is applied, intervals mapped to DROP move to ``dropped`` so
    segmentation can still tell them apart from unannotated time.
    """

    intervals: list
    labels: tuple = ACTIVITIES
    dropped: list = field(default_factory=list)

    def __post_init__(self):
        self.intervals = [iv if isinstance(iv, Interval) else Interval(*iv) for iv in self.intervals]
        self.labels = tuple(self.labels)
        self.dropped = [tuple(span) for span in self.dropped]
        self.validate()

    def validate(self):
        spans = [(iv.start_s, iv.end_s, iv.activity) for iv in self.intervals]
        spans += [(s, e, DROP) for s, e in self.dropped]
        for s, e, act in spans:
            if not (math.isfinite(s) and math.isfinite(e)) or s >= e:
                raise LabelError(f"interval ({s}, {e}, {act}) must satisfy start_s < end_s")
        for iv in self.intervals:
            if iv.activity not in self.labels:
                raise LabelError(f"unknown activity {iv.activity!r}; expected one of {list(self.labels)}")
        for a, b in zip(self.intervals, self.intervals[1:]):
            if b.start_s < a.start_s:
                raise LabelError(f"intervals not sorted: {a} before {b}")
        spans.sort()
        for a, b in zip(spans, spans[1:]):
            if b[0] < a[1]:
                raise LabelError(f"intervals overlap: {a} and {b}")

    def to_json(self) -> list:
        return [{"start_s": iv.start_s, "end_s": iv.end_s, "activity": iv.activity} for iv in self.intervals]


def load_labels(path) -> LabelTrack:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise LabelError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise LabelError(f"{path}: expected a JSON array of intervals")
    intervals = []
    for i, item in enumerate(raw):
        try:
            intervals.append(Interval(float(item["start_s"]), float(item["end_s"]), str(item["activity"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise LabelError(f"{path}: entry {i} malformed: {item!r}") from exc
    intervals.sort(key=lambda iv: iv.start_s)
    return LabelTrack(intervals)


def save_labels(track: LabelTrack, path) -> None:
    Path(path).write_text(json.dumps(track.to_json(), indent=1) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class ActivityScheme:
    name: str
    labels: tuple
    mapping: dict  # base activity -> scheme label or DROP

    def __post_init__(self):
        missing = [a for a in ACTIVITIES if a not in self.mapping]
        if missing:
            raise LabelError(f"scheme {self.name}: mapping is not total, missing {missing}")
        stray = {v for v in self.mapping.values() if v != DROP} - set(self.labels)
        if stray:
            raise LabelError(f"scheme {self.name}: mapping targets {sorted(stray)} not among labels")

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    @property
    def walking_id(self) -> int | None:
        return self.labels.index("Walking") if "Walking" in self.labels else None


def _labels_in_order(mapping: dict) -> tuple:
    missing = [a for a in ACTIVITIES if a not in mapping]
    if missing:
        raise LabelError(f"mapping is not total, missing {missing}")
    out = []
    for act in ACTIVITIES:
        lab = mapping[act]
        if lab != DROP and lab not in out:
            out.append(lab)
    return tuple(out)


def default_posture_mapping() -> dict:
    text = resources.files("capfusion.data").joinpath("posture4.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_scheme_mapping(path) -> dict:
    mapping = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(mapping, dict):
        raise LabelError(f"{path}: expected a JSON object activity -> label")
    return {str(k): str(v) for k, v in mapping.items()}


def get_scheme(name: str, posture_mapping: dict | None = None) -> ActivityScheme:
    """Build one of the five schemes; ``posture_mapping`` overrides the shipped 12->4 map."""
    canonical = _ALIASES.get(name.lower())
    if canonical is None:
        raise LabelError(f"unknown scheme {name!r}; expected one of {list(SCHEMES)}")
    if canonical == "Full12":
        return ActivityScheme("Full12", ACTIVITIES, {a: a for a in ACTIVITIES})
    if canonical == "NoNull11":
        mapping = {a: (DROP if a == "Null" else a) for a in ACTIVITIES}
        return ActivityScheme("NoNull11", ACTIVITIES[1:], mapping)
    if canonical == "Binary2":
        mapping = {a: ("Walking" if a == "Walking" else "NonWalking") for a in ACTIVITIES}
        return ActivityScheme("Binary2", ("Walking", "NonWalking"), mapping)
    posture = dict(posture_mapping) if posture_mapping is not None else default_posture_mapping()
    if canonical == "Posture4":
        return ActivityScheme("Posture4", _labels_in_order(posture), posture)
    labels = tuple(lab for lab in _labels_in_order(posture) if lab != posture["Null"])
    mapping = {a: (DROP if lab == posture["Null"] else lab) for a, lab in posture.items()}
    return ActivityScheme("Posture3", labels, mapping)


def apply_scheme(track: LabelTrack, scheme: ActivityScheme) -> LabelTrack:
    if tuple(track.labels) != ACTIVITIES:
        raise LabelError("apply_scheme expects a track over the 12 base activities")
    kept, dropped = [], list(track.dropped)
    for iv in track.intervals:
        lab = scheme.mapping[iv.activity]
        if lab == DROP:
            dropped.append((iv.start_s, iv.end_s))
        else:
            kept.append(Interval(iv.start_s, iv.end_s, lab))
    return LabelTrack(kept, labels=scheme.labels, dropped=sorted(dropped))
