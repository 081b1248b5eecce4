import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capfusion.data import WindowDataset, get_scheme
from capfusion.harness import (
    EmptyEvaluationError,
    ExperimentReport,
    FoldResult,
    Hyper,
    ReportError,
    TrainingDiverged,
    accuracy,
    aggregate,
    compare_reports,
    confusion_matrix,
    evaluate,
    macro_f1,
    make_loso_folds,
    render_report,
    train,
    walking_recall,
)
from capfusion.models import ModelSpec, build_model

# -- folds -------------------------------------------------------------------


def test_five_sessions():
    plan = make_loso_folds(["S1", "S2", "S3", "S4", "S5"])
    assert len(plan) == 5
    first = plan.folds[0]
    assert (first.test, first.val, set(first.train)) == ("S1", "S2", {"S3", "S4", "S5"})
    assert plan.folds[4].val == "S1"


def test_three_sessions_minimal():
    for fold in make_loso_folds(["a", "b", "c"]):
        assert len(fold.train) == 1


def test_too_few_sessions():
    with pytest.raises(ValueError):
        make_loso_folds(["a", "b"])


@settings(max_examples=30, deadline=None)
@given(n=st.integers(3, 12))
def test_fold_partition(n):
    sessions = [f"s{i}" for i in range(n)]
    plan = make_loso_folds(sessions)
    assert sorted(f.test for f in plan) == sorted(sessions)
    for f in plan:
        roles = [f.test, f.val, *f.train]
        assert sorted(roles) == sorted(sessions)


# -- metrics -----------------------------------------------------------------


def test_worked_two_label_example():
    cm = np.array([[8, 2], [3, 7]])
    assert accuracy(cm) == 0.75
    assert abs(macro_f1(cm) - 0.7494) < 1e-4
    assert abs(macro_f1(cm) - (8 / 10.5 + 7 / 9.5) / 2) < 1e-15
    assert walking_recall(cm, 0) == 0.8


def test_perfect_predictions():
    cm = confusion_matrix([0, 1, 2, 1], [0, 1, 2, 1], 3)
    assert accuracy(cm) == macro_f1(cm) == walking_recall(cm, 1) == 1.0


def test_single_label_predictor():
    cm = confusion_matrix([0, 1, 2, 2], [2, 2, 2, 2], 3)
    assert abs(macro_f1(cm) - (2 * 2 / (2 * 2 + 2)) / 3) < 1e-15


def test_absent_label_warns():
    cm = confusion_matrix([0, 1], [0, 1], 3)
    with pytest.warns(RuntimeWarning):
        assert abs(macro_f1(cm) - 2 / 3) < 1e-15


def test_walking_recall_absent():
    assert walking_recall(np.eye(2, dtype=int), None) is None
    assert walking_recall(np.array([[0, 0], [1, 3]]), 0) is None


def brute(cm, walking):
    K = len(cm)
    pairs = [(i, j) for i in range(K) for j in range(K) for _ in range(int(cm[i][j]))]
    total = len(pairs)
    acc = sum(i == j for i, j in pairs) / total
    f1s = []
    for k in range(K):
        tp = sum(1 for i, j in pairs if i == k and j == k)
        pred = sum(1 for _, j in pairs if j == k)
        true = sum(1 for i, _ in pairs if i == k)
        p = tp / pred if pred else 0.0
        r = tp / true if true else 0.0
        f1s.append(2 * p * r / (p + r) if p + r else 0.0)
    wt = sum(1 for i, _ in pairs if i == walking)
    rec = sum(1 for i, j in pairs if i == walking and j == walking) / wt if wt else None
    return acc, sum(f1s) / K, rec


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), K=st.integers(2, 6))
def test_metrics_match_brute_force(seed, K):
    rng = np.random.default_rng(seed)
    cm = rng.integers(0, 6, size=(K, K))
    cm[0, 0] += 1
    w = int(rng.integers(0, K))
    acc, f1, rec = brute(cm, w)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert abs(accuracy(cm) - acc) < 1e-12
        assert abs(macro_f1(cm) - f1) < 1e-12
    got = walking_recall(cm, w)
    assert (got is None and rec is None) or abs(got - rec) < 1e-12


class FixedModel:
    def __init__(self, logits):
        self.logits = np.asarray(logits, dtype=float)

    def predict_logits(self, X):
        return self.logits[: len(X)]


def tiny_ds(y, C=2, W=4):
    y = np.asarray(y)
    return WindowDataset(np.zeros((len(y), W, C)), y, np.array(["s"] * len(y), dtype=object),
                         np.arange(len(y)), W, 1, [f"c{i}" for i in range(C)], ("Walking", "NonWalking"))


def test_evaluate_ties_go_to_lowest_index():
    metrics, cm = evaluate(FixedModel([[0.5, 0.5], [0.5, 0.5]]), tiny_ds([0, 1]), get_scheme("Binary2"))
    assert cm.tolist() == [[1, 0], [1, 0]]
    assert metrics.walking_recall == 1.0


def test_evaluate_empty_rejected():
    with pytest.raises(EmptyEvaluationError):
        evaluate(FixedModel(np.zeros((0, 2))), tiny_ds([]), get_scheme("Binary2"))


# -- aggregation and reports -------------------------------------------------

FP = {"scheme": "Full12", "architecture": "MCCNN", "fusion": "LateFeature", "seed": 0}


def fold(i, acc, f1=0.5, walk=0.5, fp=FP):
    return FoldResult(dict(fp), i, f"S{i}", f"S{i + 1}", {"accuracy": acc, "macro_f1": f1, "walking_recall": walk},
                      [[1]])


def test_two_point_mean_std():
    rep = aggregate([fold(0, 0.60), fold(1, 0.70)])
    from capfusion.harness import format_cell
    assert format_cell(rep.mean["accuracy"], rep.std["accuracy"]) == "65.00 ± 7.07"


def test_identical_folds_zero_std():
    rep = aggregate([fold(i, 0.8) for i in range(4)])
    assert rep.std["accuracy"] == 0.0


def test_five_folds_match_spreadsheet_oracle():
    vals = [0.61, 0.574, 0.7021, 0.66, 0.5999]
    rep = aggregate([fold(i, v) for i, v in enumerate(vals)])
    # spreadsheet style: AVERAGE then STDEV.S by explicit sums
    n = len(vals)
    mean = sum(vals) / n
    std = (sum((v - mean) ** 2 for v in vals) / (n - 1)) ** 0.5
    assert abs(rep.mean["accuracy"] - mean) < 1e-9
    assert abs(rep.std["accuracy"] - std) < 1e-9


def test_aggregate_rejects_mixed_fingerprints_and_single_fold():
    with pytest.raises(ReportError):
        aggregate([fold(0, 0.5), fold(1, 0.5, fp={**FP, "seed": 1})])
    with pytest.raises(ReportError):
        aggregate([fold(0, 0.5)])


def test_report_json_shape():
    rep = aggregate([fold(0, 0.6), fold(1, 0.7)])
    d = json.loads(rep.to_json())
    assert {"fingerprint", "per_fold", "mean", "std"} <= set(d)
    assert ExperimentReport.from_dict(d).to_json() == rep.to_json()


def test_render_cells():
    rep = aggregate([fold(0, 0.6), fold(1, 0.7)])
    text = render_report([rep])
    assert "12 Classes" in text and "65.00 ± 7.07" in text
    assert text.count("|") > 0 and "Feature Fusion" in text


def test_compare_reports():
    a = aggregate([fold(0, 0.6), fold(1, 0.7)])
    b = aggregate([fold(0, 0.5, fp={**FP, "fusion": "ImuOnly"}), fold(1, 0.5, fp={**FP, "fusion": "ImuOnly"})])
    text = compare_reports([a, b])
    assert "65.00 ± 7.07" in text and "50.00 ± 0.00" in text
    c = aggregate([fold(0, 0.6, fp={**FP, "scheme": "Binary2"}), fold(1, 0.6, fp={**FP, "scheme": "Binary2"})])
    with pytest.raises(ReportError):
        compare_reports([a, c])


# -- training ----------------------------------------------------------------


def separable(n, seed, W=16, C=3):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    t = np.arange(W)
    X = rng.normal(scale=0.3, size=(n, W, C))
    X[:, :, 0] += np.where(y[:, None] == 1, np.sin(t), -np.sin(t))
    return WindowDataset(X, y, np.array(["s"] * n, dtype=object), np.arange(n), W, 1,
                         ["a.acc_x", "a.acc_y", "a.cap"], ("Walking", "NonWalking"))


def small_model(seed=0, K=2):
    spec = ModelSpec("MCCNN", "EarlyData", K, [("a.acc_x", "IMU"), ("a.acc_y", "IMU"), ("a.cap", "BCS")],
                     window_len=16, filters=[8, 8, 8], kernel_length=3, dense_hidden=16)
    return build_model(spec, seed=seed)


def test_separable_set_trains():
    tr, va = separable(200, 0), separable(60, 1)
    model = small_model()
    res = train(model, tr, va, Hyper(learning_rate=1e-2, batch_size=32, max_epochs=30, patience=30))
    assert (model.predict(tr.X) == tr.y).mean() >= 0.99
    assert len(res.history) <= 30


def test_patience_one_stops_after_first_flat_epoch():
    tr, va = separable(64, 0), separable(20, 1)
    res = train(small_model(), tr, va, Hyper(learning_rate=1e-9, batch_size=32, max_epochs=50, patience=1))
    # the first epoch always improves on -inf; tiny steps leave the second flat
    assert len(res.history) == 2 and res.best_epoch == 1


def test_patience_must_be_positive():
    with pytest.raises(ValueError):
        Hyper(patience=0)


def test_training_is_deterministic():
    tr, va = separable(100, 0), separable(30, 1)
    runs = []
    for _ in range(2):
        model = small_model(seed=3)
        res = train(model, tr, va, Hyper(learning_rate=1e-3, batch_size=16, max_epochs=4, patience=4, seed=9))
        runs.append((res.history, model.state_dict()))
    assert runs[0][0] == runs[1][0]
    for k in runs[0][1]:
        np.testing.assert_array_equal(runs[0][1][k], runs[1][1][k])


def test_best_checkpoint_not_worse_than_last_epoch():
    tr, va = separable(120, 0), separable(40, 2)
    model = small_model()
    res = train(model, tr, va, Hyper(learning_rate=5e-3, batch_size=16, max_epochs=8, patience=8))
    from capfusion.harness.training import _val_scores
    assert _val_scores(model, va)[1] >= res.history[-1]["val_macro_f1"] - 1e-12
    assert res.best_val_f1 == max(h["val_macro_f1"] for h in res.history)


def test_non_finite_loss_reports_location():
    tr, va = separable(40, 0), separable(10, 1)
    tr.X[5, 0, 0] = np.inf
    with pytest.raises(TrainingDiverged) as err:
        train(small_model(), tr, va, Hyper(batch_size=64, max_epochs=2))
    assert err.value.epoch == 1 and err.value.batch == 0


def test_train_rejects_out_of_range_labels():
    tr = separable(20, 0)
    tr.y[0] = 5
    with pytest.raises(ValueError):
        train(small_model(), tr, separable(10, 1), Hyper(max_epochs=1))


def test_test_windows_do_not_leak_into_training():
    from capfusion.harness import make_loso_folds
    from capfusion.pipeline import fit_fold

    parts = []
    for i, sid in enumerate(("A", "B", "C")):
        ds = separable(40, i)
        ds.session_ids = np.array([sid] * 40, dtype=object)
        parts.append(ds)
    ds = WindowDataset.concat(parts)
    fold = make_loso_folds(["A", "B", "C"]).folds[0]
    spec = small_model().spec
    hyper = Hyper(learning_rate=1e-3, batch_size=16, max_epochs=3, patience=3, seed=2)
    ref, _, _ = fit_fold(spec, ds, fold, hyper)

    poisoned = WindowDataset.concat(parts)
    test = poisoned.session_ids == fold.test
    poisoned.X[test] = 1e3 * np.random.default_rng(0).normal(size=poisoned.X[test].shape)
    poisoned.y[test] = 1 - poisoned.y[test]
    got, _, _ = fit_fold(spec, poisoned, fold, hyper)
    a, b = ref.state_dict(), got.state_dict()
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
