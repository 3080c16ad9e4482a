import json

import pytest

from leafnet.checkpoint import load_checkpoint
from leafnet.cli import main
from leafnet.data.manifest import DatasetManifest
from leafnet.metrics import ConfusionMatrix, compute_metrics
from leafnet.synthetic import make_blob_dataset

SMALL = ["--image-size", "16", "--filters", "4,8", "--dense-units", "16"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    """Prepared and trained toy project shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    make_blob_dataset(root / "data", num_classes=2, per_class=20, size=16)
    assert main(["prepare", str(root / "data"), "--out", str(root), "--no-augment"]) == 0
    assert main(["train", str(root / "manifest.json"), "--out", str(root / "run"),
                 "--epochs", "60", "--track-best", *SMALL]) == 0
    return root


def test_prepare_ten_by_twenty(tmp_path, capsys):
    make_blob_dataset(tmp_path / "d", num_classes=10, per_class=20, size=8)
    code, out, _ = run(capsys, "prepare", tmp_path / "d", "--out", tmp_path)
    assert code == 0
    m = DatasetManifest.load(tmp_path / "manifest.json")
    orig = [r for r in m.records if r.provenance == "original"]
    assert [sum(r.split == s for r in orig) for s in ("train", "val", "test")] == [160, 20, 20]
    assert m.counts()["train"] == 800
    assert "class_9" in out and "160" in out


def test_prepare_empty_class_exit_2(tmp_path, capsys):
    make_blob_dataset(tmp_path / "d", num_classes=2, per_class=12, size=8)
    (tmp_path / "d" / "hollow").mkdir()
    code, _, err = run(capsys, "prepare", tmp_path / "d", "--out", tmp_path)
    assert code == 2 and "hollow" in err
    code, _, _ = run(capsys, "prepare", tmp_path / "missing", "--out", tmp_path)
    assert code == 2


def test_prepare_export_augmented(tmp_path, capsys):
    make_blob_dataset(tmp_path / "d", num_classes=2, per_class=10, size=8)
    code, _, _ = run(capsys, "prepare", tmp_path / "d", "--out", tmp_path,
                     "--export-augmented", tmp_path / "aug", "--image-size", "8")
    assert code == 0
    assert len(list((tmp_path / "aug").rglob("*.png"))) == 2 * 8 * 4


def test_unknown_optimizer_exit_2(toy, capsys):
    with pytest.raises(SystemExit) as info:
        main(["train", str(toy / "manifest.json"), "--optimizer", "lbfgs"])
    assert info.value.code == 2
    err = capsys.readouterr().err
    assert "sgd-momentum" in err and "rmsprop" in err and "adam" in err


def test_config_file_precedence(toy, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"epochs": 1, "lr": 0.5, "optimizer": "sgd-momentum"}))
    code, _, _ = run(capsys, "train", toy / "manifest.json", "--config", cfg, "--lr", "0.001",
                     "--out", tmp_path / "r", *SMALL)
    assert code == 0
    assert len((tmp_path / "r" / "epochs.csv").read_text().splitlines()) == 2
    ck = load_checkpoint(tmp_path / "r" / "final.lfnt")
    assert ck.optimizer_config.family == "sgd-momentum"
    assert ck.optimizer_config.learning_rate == 0.001
    cfg.write_text(json.dumps({"epochz": 1}))
    code, _, err = run(capsys, "train", toy / "manifest.json", "--config", cfg)
    assert code == 2 and "epochz" in err


def test_same_seed_byte_identical_logs(toy, tmp_path, capsys):
    for name in ("a", "b"):
        assert run(capsys, "train", toy / "manifest.json", "--out", tmp_path / name,
                   "--epochs", "2", "--seed", "5", *SMALL)[0] == 0
    a = (tmp_path / "a" / "epochs.csv").read_bytes()
    assert a == (tmp_path / "b" / "epochs.csv").read_bytes()
    assert a.splitlines()[0] == b"epoch,train_loss,train_acc,val_loss,val_acc,seconds"
    assert (tmp_path / "a" / "final.lfnt").read_bytes() == (tmp_path / "b" / "final.lfnt").read_bytes()


def test_resume_continues_log(toy, tmp_path, capsys):
    m = toy / "manifest.json"
    run(capsys, "train", m, "--out", tmp_path / "full", "--epochs", "3", *SMALL)
    run(capsys, "train", m, "--out", tmp_path / "part", "--epochs", "1", *SMALL)
    code, _, _ = run(capsys, "train", m, "--out", tmp_path / "part", "--epochs", "3",
                     "--resume", tmp_path / "part" / "final.lfnt")
    assert code == 0
    assert (tmp_path / "full" / "epochs.csv").read_bytes() == \
        (tmp_path / "part" / "epochs.csv").read_bytes()


def test_evaluate_outputs(toy, tmp_path, capsys):
    code, out, _ = run(capsys, "evaluate", toy / "manifest.json", toy / "run" / "final.lfnt",
                       "--split", "train", "--dataset", "blobs", "--out", tmp_path)
    assert code == 0
    header, row = (tmp_path / "metrics.csv").read_text().strip().split("\n")
    assert header.split(",")[2:] == ["accuracy", "precision", "recall", "f1"]
    assert row.split(",")[:2] == ["blobs", "train"]
    values = [float(v) for v in row.split(",")[2:]]
    assert values == [1.0, 1.0, 1.0, 1.0]
    cm = ConfusionMatrix.from_csv((tmp_path / "confusion.csv").read_text())
    assert cm.counts.shape == (2, 2)
    r = compute_metrics(cm)
    assert [float(f"{v:.6f}") for v in (r.accuracy, r.precision, r.recall, r.f1)] == values


def test_evaluate_consistent_with_confusion_on_test(toy, tmp_path, capsys):
    code, _, _ = run(capsys, "evaluate", toy / "manifest.json", toy / "run" / "best.lfnt",
                     "--out", tmp_path)
    assert code == 0
    row = (tmp_path / "metrics.csv").read_text().strip().split("\n")[1].split(",")
    r = compute_metrics(ConfusionMatrix.from_csv((tmp_path / "confusion.csv").read_text()))
    assert row[2:] == [f"{v:.6f}" for v in (r.accuracy, r.precision, r.recall, r.f1)]


def test_evaluate_class_mismatch_exit_2(toy, tmp_path, capsys):
    m = DatasetManifest.load(toy / "manifest.json")
    m.class_names = ["x", "y"]
    m.save(tmp_path / "other.json")
    code, _, _ = run(capsys, "evaluate", tmp_path / "other.json", toy / "run" / "final.lfnt")
    assert code == 2


def parse_tables(out):
    tables, current = {}, None
    for line in out.splitlines():
        if not line.startswith("  "):
            current = line
            tables[current] = []
        else:
            _, name, p = line.split()
            tables[current].append((name, float(p)))
    return tables


def test_predict_top_k(toy, capsys):
    m = DatasetManifest.load(toy / "manifest.json")
    paths = [r.path for r in m.split("train")[:4]]
    code, out, _ = run(capsys, "predict", toy / "run" / "final.lfnt", *paths, "-k", "10")
    assert code == 0
    tables = parse_tables(out)
    assert list(tables) == paths
    labels = {r.path: m.class_names[r.label] for r in m.split("train")}
    for path, rows in tables.items():
        assert len(rows) == 2  # clipped to C
        assert sum(p for _, p in rows) == pytest.approx(1, abs=1e-5)
        assert rows[0][0] == labels[path]


def test_predict_failures(toy, tmp_path, capsys):
    good = DatasetManifest.load(toy / "manifest.json").records[0].path
    (tmp_path / "bad.png").write_bytes(b"nope")
    code, out, err = run(capsys, "predict", toy / "run" / "final.lfnt", tmp_path / "bad.png", good)
    assert code == 0 and "bad.png" in err and good in out
    code, _, _ = run(capsys, "predict", toy / "run" / "final.lfnt", tmp_path / "bad.png")
    assert code == 1


def test_predict_bad_checkpoint(tmp_path, capsys):
    (tmp_path / "x.lfnt").write_bytes(b"JUNKJUNKJUNK")
    code, _, _ = run(capsys, "predict", tmp_path / "x.lfnt", tmp_path / "a.png")
    assert code in (1, 2)


def test_report_three_runs(toy, tmp_path, capsys):
    csvs = []
    for i, accs in enumerate([(0.5, 0.7, 0.7), (0.4,), (0.9, 0.6, 0.95, 0.8)]):
        lines = ["epoch,train_loss,train_acc,val_loss,val_acc,seconds"]
        lines += [f"{e + 1},1.0,0.5,1.0,{a}," for e, a in enumerate(accs)]
        p = tmp_path / f"r{i}.csv"
        p.write_text("\n".join(lines) + "\n")
        csvs.append(p)
    code, out, _ = run(capsys, "report", *csvs, "--out", tmp_path / "rep")
    assert code == 0
    svg = (tmp_path / "rep" / "report.svg").read_text()
    assert svg.count("<path") == 6
    assert "epoch" in svg and "accuracy" in svg
    assert "r0: best epoch 2" in out
    assert "r1: best epoch 1" in out
    assert "r2: best epoch 3" in out


def test_report_malformed_csv(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("epoch,train_loss,train_acc,val_loss,val_acc,seconds\n1,0.5,0.5,0.5,oops,\n")
    code, _, err = run(capsys, "report", p, "--out", tmp_path)
    assert code == 2 and "line 2" in err


def test_inputs_not_mutated(toy, tmp_path, capsys):
    before = (toy / "manifest.json").read_bytes(), (toy / "run" / "final.lfnt").read_bytes()
    run(capsys, "evaluate", toy / "manifest.json", toy / "run" / "final.lfnt", "--out", tmp_path)
    after = (toy / "manifest.json").read_bytes(), (toy / "run" / "final.lfnt").read_bytes()
    assert before == after
