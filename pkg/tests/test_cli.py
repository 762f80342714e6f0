import json
import os

import numpy as np
import pytest

from audiobank.cli import main
from audiobank.spectrogram import read_binary, read_csv


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "corpus"), "--seed", "7", "--counts", "4"]) == 0
    assert main(["bank", "build", "--manifest", str(root / "corpus/manifest.json"), "--out", str(root / "bank"),
                 "--seed", "1", "--nd", "1"]) == 0
    return root


def test_synth_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--out", str(tmp_path / name), "--seed", "7", "--counts", "2"]) == 0
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a == b
    assert len([k for k in a if k.endswith(".wav")]) == 24
    manifest = json.loads((tmp_path / "a/manifest.json").read_text())
    assert {e["class_id"] for e in manifest} == set(range(12))


def test_bank_build_deterministic_and_inspect(corpus, tmp_path, capsys):
    assert main(["bank", "build", "--manifest", str(corpus / "corpus/manifest.json"), "--out", str(tmp_path / "b2"),
                 "--seed", "1", "--nd", "1"]) == 0
    assert tree_bytes(corpus / "bank") == tree_bytes(tmp_path / "b2")
    capsys.readouterr()
    assert main(["bank", "inspect", str(corpus / "bank")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["N_D"] == 12 and info["N_c"] == 12


def test_featurize_and_fingerprint_mismatch(corpus, tmp_path, capsys):
    out = tmp_path / "f.csv"
    assert main(["featurize", "--manifest", str(corpus / "corpus/manifest.json"), "--bank", str(corpus / "bank"),
                 "--out", str(out)]) == 0
    header = out.read_text().splitlines()[0].split(",")
    assert len(header) == 2 + 12 * 21
    capsys.readouterr()
    code = main(["featurize", "--manifest", str(corpus / "corpus/manifest.json"), "--bank", str(corpus / "bank"),
                 "--out", str(tmp_path / "g.csv"), "--set", "spectrogram.M=64"])
    assert code == 2
    err = capsys.readouterr().err
    assert "fingerprint" in err and len(err.strip().splitlines()) == 1
    assert not (tmp_path / "g.csv").exists()


def test_nmf_and_train(corpus, tmp_path):
    feats = tmp_path / "f.csv"
    assert main(["featurize", "--manifest", str(corpus / "corpus/manifest.json"), "--bank", str(corpus / "bank"),
                 "--out", str(feats)]) == 0
    assert main(["nmf", "fit", "--features", str(feats), "--out", str(tmp_path / "nmf/model"), "--seed", "2",
                 "--rank", "6", "--codes", str(tmp_path / "nmf/codes.csv")]) == 0
    assert (tmp_path / "nmf/model.bin").exists() and (tmp_path / "nmf/model.json").exists()
    assert main(["nmf", "encode", "--features", str(feats), "--model", str(tmp_path / "nmf/model"),
                 "--out", str(tmp_path / "enc.csv"), "--seed", "2"]) == 0
    assert len((tmp_path / "enc.csv").read_text().splitlines()) == 1 + 48
    for clf in ("svm-a", "svm-o", "knn"):
        assert main(["train", "--features", str(feats), "--out", str(tmp_path / clf), "--seed", "3",
                     "--classifier", clf]) == 0
        assert (tmp_path / clf / "model.json").exists()


def test_evaluate_report_and_determinism(corpus, tmp_path):
    args = ["evaluate", "--manifest", str(corpus / "corpus/manifest.json"), "--runs", "5", "--classifier", "svm-a",
            "--seed", "4", "--set", "bank.n_per_class=1"]
    assert main(args + ["--out", str(tmp_path / "r1.json")]) == 0
    assert main(args + ["--out", str(tmp_path / "r2.json")]) == 0
    assert (tmp_path / "r1.json").read_bytes() == (tmp_path / "r2.json").read_bytes()
    rep = json.loads((tmp_path / "r1.json").read_text())
    assert len(rep["accuracies"]) == 5
    assert np.array(rep["confusion"]).shape == (12, 12)
    assert rep["effective_config"]["bank.n_per_class"] == 1
    assert main(["report", str(tmp_path / "r1.json"), "--out", str(tmp_path / "tables")]) == 0
    assert (tmp_path / "tables/runs.csv").exists()
    assert (tmp_path / "tables/confusion_raw.csv").exists()


def test_sweep(corpus, tmp_path):
    assert main(["sweep", "--manifest", str(corpus / "corpus/manifest.json"), "--out", str(tmp_path / "sw"),
                 "--seed", "4", "--axis", "knn_k", "--values", "1,3", "--runs", "2",
                 "--set", "bank.n_per_class=1"]) == 0
    lines = (tmp_path / "sw/sweep.csv").read_text().splitlines()
    assert lines[0] == "knn_k,mean,std" and len(lines) == 3
    assert main(["report", str(tmp_path / "sw/sweep.json"), "--out", str(tmp_path / "t")]) == 0
    assert (tmp_path / "t/sweep.csv").read_text() == (tmp_path / "sw/sweep.csv").read_text()


def test_spectrogram_export(corpus, tmp_path):
    wav = sorted((corpus / "corpus/audio").glob("*.wav"))[0]
    assert main(["spectrogram", str(wav), "--out", str(tmp_path / "s.csv")]) == 0
    assert main(["spectrogram", str(wav), "--out", str(tmp_path / "s.bin"), "--format", "bin"]) == 0
    a, b = read_csv(tmp_path / "s.csv"), read_binary(tmp_path / "s.bin")
    assert a.shape[0] == 129 and np.array_equal(a, b)


def test_exit_codes(corpus, tmp_path, capsys):
    assert main(["frobnicate"]) == 2
    assert main(["synth", "--out", str(tmp_path / "x")]) == 2  # --seed is mandatory
    assert main(["evaluate", "--manifest", "m.json", "--out", "r.json", "--seed", "1", "--set", "bogus=1"]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"spectrogram.N": 255}))
    assert main(["synth", "--out", str(tmp_path / "y"), "--seed", "1", "--config", str(bad)]) == 2
    capsys.readouterr()
    assert main(["featurize", "--manifest", str(tmp_path / "missing.json"), "--bank", str(corpus / "bank"),
                 "--out", str(tmp_path / "f.csv")]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("audiobank: error:")


def test_no_writes_outside_out(corpus, tmp_path, monkeypatch):
    work = tmp_path / "cwd"
    work.mkdir()
    monkeypatch.chdir(work)
    out = tmp_path / "only_here"
    assert main(["evaluate", "--manifest", str(corpus / "corpus/manifest.json"), "--runs", "1", "--seed", "1",
                 "--classifier", "knn", "--set", "bank.n_per_class=1", "--out", str(out / "r.json")]) == 0
    assert os.listdir(work) == []
    assert sorted(os.listdir(tmp_path)) == ["cwd", "only_here"]
