"""LOSO folds, training loop, metrics and reports."""

from .folds import Fold, FoldPlan, make_loso_folds
from .metrics import (
    EmptyEvaluationError,
    MetricTriplet,
    accuracy,
    confusion_matrix,
    evaluate,
    macro_f1,
    metrics_from_confusion,
    per_class_f1,
    walking_recall,
)
from .report import ExperimentReport, FoldResult, ReportError, aggregate, compare_reports, format_cell, render_report
from .training import Hyper, TrainingDiverged, TrainResult, train
