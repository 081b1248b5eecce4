"""Corpus -> sync -> scheme -> windows -> LOSO train/evaluate -> report."""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .data import (
    WindowDataset,
    align_devices,
    apply_normalizer,
    apply_scheme,
    detect_clap_sync,
    fit_normalizer,
    get_scheme,
    load_labels,
    load_recording,
    load_scheme_mapping,
    segment_windows,
    window_params_for_rate,
)
from .harness.folds import make_loso_folds
from .harness.metrics import evaluate
from .harness.report import ExperimentReport, FoldResult, aggregate
from .harness.training import Hyper, train
from .models import ModelSpec, build_model, tag_layout

ARCH_NAMES = {"mccnn": "MCCNN", "mc-cnn": "MCCNN", "deepconvlstm": "DeepConvLSTM", "dcl": "DeepConvLSTM"}
FUSION_NAMES = {"early": "EarlyData", "earlydata": "EarlyData", "late": "LateFeature",
                "latefeature": "LateFeature", "imu-only": "ImuOnly", "imuonly": "ImuOnly", "imu_only": "ImuOnly"}
MODEL_KEYS = ("filters", "bcs_filters", "kernel_length", "lstm_hidden", "dense_hidden", "dropout", "pool_after")


class PipelineError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


def canonical_arch(name: str) -> str:
    try:
        return ARCH_NAMES[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown architecture {name!r}; expected mccnn or deepconvlstm") from None


def canonical_fusion(name: str) -> str:
    try:
        return FUSION_NAMES[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown fusion {name!r}; expected early, late or imu-only") from None


@dataclass
class ExperimentConfig:
    data: str
    scheme: str = "Full12"
    architecture: str = "MCCNN"
    fusion: str = "EarlyData"
    seed: int = 0
    out: str | None = None
    hyper: dict = field(default_factory=dict)  # overrides of Hyper fields
    model: dict = field(default_factory=dict)  # overrides of ModelSpec layer fields
    window_len: int | None = None
    step: int | None = None
    posture_mapping: str | None = None
    jobs: int = 1

    def __post_init__(self):
        self.architecture = canonical_arch(self.architecture)
        self.fusion = canonical_fusion(self.fusion)
        try:
            self.scheme = self.get_scheme().name
        except (ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from None
        stray = sorted(set(self.model) - set(MODEL_KEYS))
        if stray:
            raise ConfigError(f"unknown model overrides {stray}")
        try:
            Hyper.from_dict({**self.hyper, "seed": self.seed})
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = sorted(set(d) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigError(f"unknown experiment config keys {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def fingerprint(self) -> dict:
        return {"scheme": self.scheme, "architecture": self.architecture, "fusion": self.fusion, "seed": self.seed}

    def get_scheme(self):
        mapping = load_scheme_mapping(self.posture_mapping) if self.posture_mapping else None
        return get_scheme(self.scheme, mapping)


@dataclass
class SessionData:
    session_id: str
    stream: object  # MergedStream
    track: object  # LabelTrack over base activities


def load_session(session_dir) -> SessionData:
    d = Path(session_dir)
    csvs = sorted(d.glob("*.csv"))
    if not csvs:
        raise PipelineError(f"{d}: no device recordings")
    recordings = [load_recording(p) for p in csvs]
    sync = {r.device_id: detect_clap_sync(r)[0] for r in recordings}
    stream = align_devices(recordings, sync)
    return SessionData(stream.session_id, stream, load_labels(d / "labels.json"))


def load_corpus(root) -> list[SessionData]:
    sessions_dir = Path(root) / "sessions"
    if not sessions_dir.is_dir():
        raise PipelineError(f"{root}: no sessions/ directory")
    dirs = sorted(p for p in sessions_dir.iterdir() if p.is_dir())
    if not dirs:
        raise PipelineError(f"{sessions_dir}: no sessions")
    out = []
    for p in dirs:
        try:
            out.append(load_session(p))
        except Exception as exc:
            raise PipelineError(f"session {p.name}: {exc}") from exc
    return out


def build_windows(sessions: list[SessionData], scheme, window_len: int | None = None,
                  step: int | None = None) -> WindowDataset:
    rates = {s.stream.rate_hz for s in sessions}
    if len(rates) != 1:
        raise PipelineError(f"sessions mix sampling rates {sorted(rates)}")
    if window_len is None or step is None:
        default_len, default_step = window_params_for_rate(rates.pop())
        window_len = window_len or default_len
        step = step or default_step
    parts = [segment_windows(s.stream, apply_scheme(s.track, scheme), window_len, step) for s in sessions]
    try:
        return WindowDataset.concat(parts)
    except ValueError as exc:
        raise PipelineError(str(exc)) from None


def _fold_seed(seed: int, fold: int) -> int:
    return seed * 1000 + fold


def fit_fold(spec: ModelSpec, ds: WindowDataset, fold, hyper: Hyper):
    """Train one fold; only train/val windows influence the returned model."""
    train_ds = ds.for_sessions(fold.train)
    val_ds = ds.for_sessions([fold.val])
    test_ds = ds.for_sessions([fold.test])
    for name, part in (("train", train_ds), ("validation", val_ds), ("test", test_ds)):
        if len(part) == 0:
            raise PipelineError(f"{name} split has no windows")
    stats = fit_normalizer(train_ds)
    train_ds, val_ds, test_ds = (apply_normalizer(p, stats) for p in (train_ds, val_ds, test_ds))
    seed = _fold_seed(hyper.seed, fold.index)
    model = build_model(spec, seed=seed)
    result = train(model, train_ds, val_ds, Hyper(**{**hyper.to_dict(), "seed": seed}))
    return model, result, test_ds


def run_fold(spec: ModelSpec, ds: WindowDataset, fold, hyper: Hyper, scheme, fingerprint) -> FoldResult:
    model, result, test_ds = fit_fold(spec, ds, fold, hyper)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        metrics, cm = evaluate(model, test_ds, scheme, warn=False)
    return FoldResult(dict(fingerprint), fold.index, fold.test, fold.val, metrics.as_dict(), cm.tolist(),
                      result.best_epoch, len(result.history))


def _run_fold_job(args):
    spec, ds, fold, hyper, scheme, fingerprint = args
    try:
        return run_fold(spec, ds, fold, hyper, scheme, fingerprint)
    except Exception as exc:
        raise PipelineError(f"fold {fold.index} (test session {fold.test}): {exc}") from None


def run_experiment(cfg: ExperimentConfig, sessions: list[SessionData] | None = None) -> ExperimentReport:
    scheme = cfg.get_scheme()
    if sessions is None:
        sessions = load_corpus(cfg.data)
    layouts = {tuple(s.stream.channels) for s in sessions}
    if len(layouts) != 1:
        raise PipelineError("sessions have different channel layouts")
    ds = build_windows(sessions, scheme, cfg.window_len, cfg.step)
    spec = ModelSpec(cfg.architecture, cfg.fusion, scheme.num_labels, tag_layout(ds.channel_layout),
                     window_len=ds.window_len, **cfg.model)
    # fail on fusion/layout preconditions before any training
    build_model(spec, seed=0)
    hyper = Hyper.from_dict({**cfg.hyper, "seed": cfg.seed})
    plan = make_loso_folds([s.session_id for s in sessions])
    jobs = [(spec, ds, fold, hyper, scheme, cfg.fingerprint) for fold in plan]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_fold_job, jobs))
    else:
        results = [_run_fold_job(j) for j in jobs]
    extra = {"hyper": hyper.to_dict(), "model": {k: v for k, v in spec.to_dict().items() if k != "input_layout"},
             "labels": list(scheme.labels), "window_len": ds.window_len, "step": ds.step,
             "sessions": list(plan.sessions), "channels": list(ds.channel_layout)}
    return aggregate(results, extra)


def write_report(report: ExperimentReport, out) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json(), encoding="utf-8")
    return out


def load_experiment_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return raw
