"""Recording/label formats, clap synchronization, schemes and windowing."""

from .labels import (
    ACTIVITIES,
    DROP,
    SCHEMES,
    ActivityScheme,
    Interval,
    LabelError,
    LabelTrack,
    apply_scheme,
    get_scheme,
    load_labels,
    load_scheme_mapping,
    save_labels,
)
from .recording import (
    DEVICE_KINDS,
    PROPOSED_CHANNELS,
    WATCH_CHANNELS,
    RecordingFormatError,
    SensorRecording,
    load_recording,
    save_recording,
)
from .sync import AlignmentError, ClapConfig, MergedStream, SyncNotFound, align_devices, detect_clap_sync
from .windows import (
    Normalizer,
    WindowDataset,
    apply_normalizer,
    fit_normalizer,
    majority_labels,
    segment_windows,
    window_params_for_rate,
)
