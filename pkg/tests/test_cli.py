import csv
import filecmp
import json

import pytest

from pcgkit.cli import main
from pcgkit.evaluation import MetricsReport, recompute_ok


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "corpus"
    assert main(["synth", "--out", str(d), "--n-per-class", "6", "--seed", "7"]) == 0
    return d


@pytest.fixture(scope="module")
def report(corpus):
    out = corpus.parent / "report"
    assert main(["pipeline", "--in", str(corpus), "--out", str(out), "--seed", "7",
                 "--jobs", "1"]) == 0
    return out


def test_usage_errors(capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main([]) == 1
    assert main(["train", "--features", "x.csv"]) == 1
    assert main(["train", "--features", "f", "--classifier", "svm", "--level", "3",
                 "--out", "m"]) == 1


def test_version(capsys):
    assert main(["--version"]) == 0
    assert "pcgkit" in capsys.readouterr().out


def test_pipeline_report(report):
    names = {p.name for p in report.iterdir()}
    assert {"tables_td40.txt", "tables_full100.txt", "metrics.json", "segmentation.txt",
            "summary.json", "features.csv", "config.json"} <= names
    text = (report / "tables_full100.txt").read_text()
    for kind in ("KNN", "SVM", "MLP", "MAHALANOBIS"):
        assert f"{kind} | full100 features | cycle-level | levels 1, 2" in text
    assert "1st level" in text and "2nd level" in text
    assert "classifiers.knn_k = 5" in text
    metrics = json.loads((report / "metrics.json").read_text())
    assert len(metrics["cycle"]) == 16
    for unit in ("cycle", "recording"):
        assert all(recompute_ok(MetricsReport.from_dict(d)) for d in metrics[unit])


def test_pipeline_deterministic_across_jobs(corpus, report):
    other = corpus.parent / "report_jobs2"
    assert main(["pipeline", "--in", str(corpus), "--out", str(other), "--seed", "7",
                 "--jobs", "2"]) == 0
    cmp = filecmp.dircmp(report, other)
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for sub in ("segmentation", "predictions"):
        m, mis, err = filecmp.cmpfiles(report / sub, other / sub,
                                       [p.name for p in (report / sub).iterdir()], shallow=False)
        assert not mis and not err


def test_stagewise_commands(corpus, tmp_path, capsys):
    seg, feats = tmp_path / "seg", tmp_path / "f.csv"
    assert main(["segment", "--in", str(corpus), "--out", str(seg), "--jobs", "1"]) == 0
    assert any(p.name.endswith(".plot.csv") for p in seg.iterdir())
    assert main(["features", "--in", str(corpus), "--seg", str(seg), "--out", str(feats),
                 "--layout", "td40"]) == 0
    with open(feats) as f:
        header = next(csv.reader(f))
    assert header[:3] == ["id", "cycle_index", "label"] and len(header) == 43
    model, preds = tmp_path / "m.json", tmp_path / "p.csv"
    assert main(["train", "--features", str(feats), "--classifier", "svm", "--level", "1",
                 "--seed", "3", "--out", str(model)]) == 0
    assert main(["predict", "--model", str(model), "--features", str(feats),
                 "--out", str(preds)]) == 0
    rows = list(csv.DictReader(open(preds)))
    assert rows and {r["predicted"] for r in rows} <= {"N", "abN"}
    truth = tmp_path / "truth.csv"
    with open(truth, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["filename", "kind", "time_s"])
        for t in sorted(corpus.glob("*.truth.json")):
            for e in json.loads(t.read_text())["events"]:
                w.writerow([t.name.replace(".truth.json", ".wav"), e["kind"], e["center_t"]])
    ev = tmp_path / "ev"
    assert main(["evaluate", "--features", str(feats), "--level", "2", "--classifier", "knn",
                 "--seed", "1", "--out", str(ev), "--truth", str(truth), "--seg", str(seg),
                 "--manifest", str(corpus / "manifest.csv")]) == 0
    assert (ev / "tables_td40.txt").exists()
    seg_json = json.loads((ev / "segmentation.json").read_text())
    assert {"N", "AS", "MI"} <= set(seg_json)
    assert seg_json["N"]["sensitivity"]["S1"] >= 90


def test_train_single_class_level2(tmp_path, report, capsys):
    src = report / "features.csv"
    rows = list(csv.reader(open(src)))
    col = rows[0].index("label")
    keep = [rows[0]] + [r for r in rows[1:] if r[col] != "MI"]
    f = tmp_path / "noMI.csv"
    with open(f, "w", newline="") as fh:
        csv.writer(fh).writerows(keep)
    capsys.readouterr()
    code = main(["train", "--features", str(f), "--classifier", "mlp", "--level", "2",
                 "--out", str(tmp_path / "m.json")])
    err = capsys.readouterr().err
    assert code == 2
    assert "MI" in err and "level 2" in err


def test_data_errors(tmp_path, capsys):
    assert main(["features", "--in", str(tmp_path / "nope"), "--seg", str(tmp_path),
                 "--out", str(tmp_path / "f.csv")]) == 2
    assert main(["predict", "--model", str(tmp_path / "none.json"), "--features", "x",
                 "--out", "y"]) == 2
    bad = tmp_path / "cfg.json"
    bad.write_text('{"classifiers": {"knn_k": -1}}')
    assert main(["synth", "--out", str(tmp_path / "c"), "--config", str(bad)]) == 2
    assert "knn_k" in capsys.readouterr().err


def test_internal_error_exit_code(report, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"classifiers": {"svm_max_iter": 1}}')
    code = main(["train", "--features", str(report / "features.csv"), "--classifier", "svm",
                 "--level", "1", "--out", str(tmp_path / "m.json"), "--config", str(cfg)])
    assert code == 3
    assert "NonConvergence" in capsys.readouterr().err


def test_config_env(tmp_path, monkeypatch, corpus):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"synth": {"n_per_class": 2}}')
    monkeypatch.setenv("PCGKIT_CONFIG", str(cfg))
    out = tmp_path / "c"
    assert main(["synth", "--out", str(out)]) == 0
    assert len(list(out.glob("*.wav"))) == 6
