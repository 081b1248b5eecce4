"""Fold aggregation (mean and sample std) and table rendering."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

METRICS = ("accuracy", "macro_f1", "walking_recall")
METRIC_TITLES = {"accuracy": "Accuracy", "macro_f1": "Macro F1", "walking_recall": "Walking Accuracy"}
SCHEME_ROWS = {"Full12": "12 Classes", "NoNull11": "11 Classes", "Posture4": "4 Classes",
               "Posture3": "3 Classes", "Binary2": "2 Classes"}
# (architecture, fusion) per column, left to right
COLUMNS = (("DeepConvLSTM", "EarlyData"), ("DeepConvLSTM", "LateFeature"),
           ("MCCNN", "EarlyData"), ("MCCNN", "LateFeature"),
           ("DeepConvLSTM", "ImuOnly"), ("MCCNN", "ImuOnly"))
ARCH_TITLES = {"DeepConvLSTM": "DeepConvLSTM", "MCCNN": "MC-CNN"}
FUSION_TITLES = {"EarlyData": "Data Fusion", "LateFeature": "Feature Fusion", "ImuOnly": ""}


class ReportError(ValueError):
    pass


@dataclass
class FoldResult:
    fingerprint: dict  # scheme, architecture, fusion, seed
    fold: int
    test_session: str
    val_session: str
    metrics: dict  # metric name -> fraction or None
    confusion: list
    best_epoch: int = 0
    epochs_run: int = 0

    def to_dict(self) -> dict:
        return {"fold": self.fold, "test_session": self.test_session, "val_session": self.val_session,
                "metrics": dict(self.metrics), "confusion": self.confusion,
                "best_epoch": self.best_epoch, "epochs_run": self.epochs_run}


@dataclass
class ExperimentReport:
    fingerprint: dict
    per_fold: list
    mean: dict
    std: dict
    extra: dict = field(default_factory=dict)

    @property
    def key(self) -> tuple:
        f = self.fingerprint
        return f["scheme"], f["architecture"], f["fusion"]

    def to_dict(self) -> dict:
        d = {"fingerprint": self.fingerprint, "per_fold": self.per_fold, "mean": self.mean, "std": self.std}
        if self.extra:
            d["extra"] = self.extra
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        try:
            return cls(dict(d["fingerprint"]), list(d["per_fold"]), dict(d["mean"]), dict(d["std"]),
                       dict(d.get("extra", {})))
        except (KeyError, TypeError) as exc:
            raise ReportError(f"malformed report: {exc}") from None

    @classmethod
    def load(cls, path) -> "ExperimentReport":
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ReportError(f"{path}: invalid JSON: {exc}") from None


def mean_std(values) -> tuple[float, float]:
    n = len(values)
    if n < 2:
        raise ReportError(f"need at least 2 values for a sample std, got {n}")
    m = math.fsum(values) / n
    return m, math.sqrt(math.fsum((v - m) ** 2 for v in values) / (n - 1))


def aggregate(fold_results: list[FoldResult], extra: dict | None = None) -> ExperimentReport:
    if len(fold_results) < 2:
        raise ReportError(f"need at least 2 folds, got {len(fold_results)}")
    fp = fold_results[0].fingerprint
    for r in fold_results[1:]:
        if r.fingerprint != fp:
            raise ReportError(f"inconsistent fingerprints: {fp} vs {r.fingerprint}")
    mean, std = {}, {}
    for m in METRICS:
        vals = [r.metrics[m] for r in fold_results if r.metrics.get(m) is not None]
        if len(vals) >= 2:
            mean[m], std[m] = mean_std(vals)
        else:
            # walking recall can be absent from most folds (or the scheme)
            mean[m] = vals[0] if vals else None
            std[m] = None
    return ExperimentReport(dict(fp), [r.to_dict() for r in sorted(fold_results, key=lambda r: r.fold)],
                            mean, std, dict(extra or {}))


def format_cell(mean, std) -> str:
    if mean is None:
        return "n/a"
    if std is None:
        return f"{100 * mean:.2f}"
    return f"{100 * mean:.2f} ± {100 * std:.2f}"


def _line(row, widths) -> str:
    return "| " + " | ".join(c.ljust(w) for c, w in zip(row, widths)) + " |"


def _grid(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join(_line(r, widths) for r in rows)


def render_report(reports: list[ExperimentReport]) -> str:
    """Text table: rows scheme x metric, columns (architecture, fusion) with and without BCS."""
    cells = {}
    for rep in reports:
        scheme, arch, fusion = rep.key
        if scheme not in SCHEME_ROWS or (arch, fusion) not in COLUMNS:
            raise ReportError(f"no table slot for {rep.key}")
        if rep.key in cells:
            raise ReportError(f"two reports for {rep.key}")
        cells[rep.key] = rep
    header = [
        ["# of Classes", "Metrics"] + ["With Capacitive Sensors"] * 4 + ["Without Capacitive Sensors"] * 2,
        ["", ""] + [ARCH_TITLES[a] for a, _ in COLUMNS],
        ["", ""] + [FUSION_TITLES[f] for _, f in COLUMNS],
    ]
    body = []
    for scheme, title in SCHEME_ROWS.items():
        if not any(k[0] == scheme for k in cells):
            continue
        for i, m in enumerate(METRICS):
            row = [title if i == 0 else "", METRIC_TITLES[m]]
            for arch, fusion in COLUMNS:
                rep = cells.get((scheme, arch, fusion))
                row.append("-" if rep is None else format_cell(rep.mean.get(m), rep.std.get(m)))
            body.append(row)
    widths = [max(len(r[i]) for r in header + body) for i in range(len(header[0]))]
    rule = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    lines = [rule] + [_line(r, widths) for r in header] + [rule]
    for k in range(0, len(body), len(METRICS)):
        lines += [_line(r, widths) for r in body[k:k + len(METRICS)]] + [rule]
    return "\n".join(lines) + "\n"


def compare_reports(reports: list[ExperimentReport]) -> str:
    """Side-by-side mean ± std, one column per fingerprint, for reports on one scheme."""
    if len(reports) < 2:
        raise ReportError("compare needs at least 2 reports")
    schemes = {r.fingerprint["scheme"] for r in reports}
    if len(schemes) != 1:
        raise ReportError(f"reports use different schemes {sorted(schemes)}")
    keys = [json.dumps(r.fingerprint, sort_keys=True) for r in reports]
    if len(set(keys)) != len(keys):
        raise ReportError("compare needs reports with distinct fingerprints")
    cols = [f"{ARCH_TITLES.get(r.fingerprint['architecture'], r.fingerprint['architecture'])} "
            f"{r.fingerprint['fusion']} (seed {r.fingerprint['seed']})" for r in reports]
    rows = [[f"{schemes.pop()}", *cols]]
    for m in METRICS:
        rows.append([METRIC_TITLES[m]] + [format_cell(r.mean.get(m), r.std.get(m)) for r in reports])
    return _grid(rows) + "\n"
