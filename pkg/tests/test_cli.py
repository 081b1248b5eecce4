import json

import pytest

from capfusion.cli import main

TINY = {"hyper": {"max_epochs": 1, "batch_size": 64, "patience": 1},
        "model": {"filters": [4, 4, 4], "bcs_filters": 2, "dense_hidden": 8}, "step": 5}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "synth.json").write_text(json.dumps({"seed": 3, "num_sessions": 5, "duration_s": 40.0}))
    assert main(["synth", "--config", str(root / "synth.json"), "--out", str(root / "corpus")]) == 0
    (root / "exp.json").write_text(json.dumps(TINY))
    return root


def test_missing_config_is_usage_error(tmp_path, capsys):
    assert main(["synth", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2
    assert "nope.json" in capsys.readouterr().err


def test_no_subcommand_is_usage_error():
    assert main([]) == 2


def test_unknown_flag_is_usage_error():
    assert main(["run", "--bogus"]) == 2


def test_synth_rerun_is_byte_identical(corpus, tmp_path):
    assert main(["synth", "--config", str(corpus / "synth.json"), "--out", str(tmp_path / "again")]) == 0
    for p in (corpus / "corpus").rglob("*"):
        if p.is_file():
            assert (tmp_path / "again" / p.relative_to(corpus / "corpus")).read_bytes() == p.read_bytes()


def test_run_writes_five_fold_report(corpus, tmp_path, capsys):
    out = tmp_path / "r.json"
    code = main(["run", "--config", str(corpus / "exp.json"), "--data", str(corpus / "corpus"),
                 "--scheme", "Posture4", "--arch", "mccnn", "--fusion", "late", "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert len(rep["per_fold"]) == 5
    for f in rep["per_fold"]:
        assert set(f["metrics"]) == {"accuracy", "macro_f1", "walking_recall"}
    assert rep["fingerprint"]["fusion"] == "LateFeature"
    assert out.with_suffix(".txt").exists()
    assert "4 Classes" in capsys.readouterr().out


def test_run_missing_data_dir(tmp_path):
    assert main(["run", "--data", str(tmp_path / "missing")]) == 2


def test_run_bad_scheme(corpus):
    assert main(["run", "--data", str(corpus / "corpus"), "--scheme", "Seven"]) == 2


def test_late_fusion_without_bcs_fails_before_training(tmp_path, capsys):
    cfg = {"num_sessions": 3, "duration_s": 40.0, "rate_hz": 100.0,
           "devices": [{"device_id": "arm", "kind": "watch"}, {"device_id": "wrist", "kind": "watch",
                                                                "clock_offset_s": 0.3}]}
    (tmp_path / "w.json").write_text(json.dumps(cfg))
    assert main(["synth", "--config", str(tmp_path / "w.json"), "--out", str(tmp_path / "w")]) == 0
    # a huge epoch budget would take minutes if training started
    (tmp_path / "e.json").write_text(json.dumps({"hyper": {"max_epochs": 10_000}}))
    code = main(["run", "--config", str(tmp_path / "e.json"), "--data", str(tmp_path / "w"),
                 "--fusion", "late", "--out", str(tmp_path / "r.json")])
    assert code == 1
    assert "BCS" in capsys.readouterr().err
    assert not (tmp_path / "r.json").exists()


def _report(corpus, tmp_path, fusion, scheme="Posture4"):
    out = tmp_path / f"{fusion}-{scheme}.json"
    assert main(["run", "--config", str(corpus / "exp.json"), "--data", str(corpus / "corpus"),
                 "--scheme", scheme, "--fusion", fusion, "--out", str(out)]) == 0
    return out


def test_compare_two_reports(corpus, tmp_path, capsys):
    a = _report(corpus, tmp_path, "early")
    b = _report(corpus, tmp_path, "imu-only")
    capsys.readouterr()
    assert main(["compare", str(a), str(b)]) == 0
    text = capsys.readouterr().out
    header = text.splitlines()[0]
    assert "EarlyData" in header and "ImuOnly" in header and header.count("|") == 4
    c = _report(corpus, tmp_path, "early", scheme="Binary2")
    assert main(["compare", str(a), str(c)]) == 2


def test_compare_missing_file(tmp_path):
    assert main(["compare", str(tmp_path / "a.json"), str(tmp_path / "b.json")]) == 2


def test_gradcheck_quick(capsys):
    assert main(["gradcheck", "--seeds", "2", "--quick"]) == 0
    assert "worst" in capsys.readouterr().out.lower()
