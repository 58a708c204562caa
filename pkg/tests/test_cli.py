import json
import subprocess
import sys

import pytest

from attnfuse.cli import main
from attnfuse.paths import read_corpus
from helpers import SCANF_PATH, SCANF_SOURCE

GOOD = "void f{i}()\n{{\n    int a = {i};\n    if (scanf(\"%d\", &a) != 1)\n        return;\n}}\n"
BAD = "void g{i}()\n{{\n    int a = {i};\n    scanf(\"%d\", &a);\n}}\n"
SMALL = "d_embed = 8\nn_heads = 2\nepochs = 6\nbatch_size = 8\nlr = 5e-3\nmax_contexts = 64\n"


def test_labels_from_directory_convention(tmp_path):
    for i in range(2):
        (tmp_path / "src" / "good").mkdir(parents=True, exist_ok=True)
        (tmp_path / "src" / "bad").mkdir(parents=True, exist_ok=True)
        (tmp_path / "src" / "good" / f"g{i}.c").write_text(GOOD.format(i=i))
        (tmp_path / "src" / "bad" / f"b{i}.c").write_text(BAD.format(i=i))
    out = tmp_path / "c.jsonl"
    assert main(["extract", str(tmp_path / "src"), "--out", str(out)]) == 0
    assert [r.label for r in read_corpus(out)] == [0, 0, 1, 1]


def test_manifest_labels_and_reject_log(tmp_path):
    (tmp_path / "ok.c").write_text(BAD.format(i=1))
    (tmp_path / "broken.c").write_text("void h()\n{\n    x = ;\n}\n")
    (tmp_path / "m.txt").write_text(f"{tmp_path / 'ok.c'} 1\n{tmp_path / 'broken.c'} 0\n")
    out = tmp_path / "c.jsonl"
    assert main(["extract", "--manifest", str(tmp_path / "m.txt"), "--out", str(out)]) == 0
    recs = read_corpus(out)
    assert len(recs) == 1 and recs[0].label == 1
    log = (tmp_path / "c.jsonl.rejects.log").read_text()
    assert "broken.c" in log and "line 3" in log


def test_all_inputs_fail(tmp_path):
    (tmp_path / "broken.c").write_text("void h( {")
    assert main(["extract", str(tmp_path / "broken.c"), "--out", str(tmp_path / "c.jsonl")]) == 1
    assert not (tmp_path / "c.jsonl").exists()


def test_scanf_snippet(tmp_path):
    (tmp_path / "snippet.c").write_text(SCANF_SOURCE + "\n")
    out = tmp_path / "c.jsonl"
    assert main(["extract", str(tmp_path / "snippet.c"), "--max-path-width", "0", "--out", str(out)]) == 0
    (rec,) = read_corpus(out)
    assert ("scanf", SCANF_PATH, "void") in [tuple(c) for c in rec.contexts]
    assert rec.label is None


def test_single_class_corpus_fails(tmp_path):
    (tmp_path / "bad").mkdir()
    for i in range(3):
        (tmp_path / "bad" / f"b{i}.c").write_text(BAD.format(i=i))
    corpus = tmp_path / "c.jsonl"
    assert main(["extract", str(tmp_path), "--out", str(corpus)]) == 0
    assert main(["train", str(corpus), "--out", str(tmp_path / "run"), "--epochs", "1"]) == 1


def test_invalid_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("conv_kernel_size = 4\n")
    assert main(["train", "x.jsonl", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "conv_kernel_size" in capsys.readouterr().err
    assert main(["train", "x.jsonl", "--epochs", "0", "--out", str(tmp_path)]) == 2


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    (root / "small.toml").write_text(SMALL)
    assert main(["gen-synthetic", "--n-samples", "40", "--seed", "2", "--out", str(root / "src")]) == 0
    assert main(["extract", str(root / "src"), "--out", str(root / "corpus.jsonl")]) == 0
    assert main(["train", str(root / "corpus.jsonl"), "--config", str(root / "small.toml"),
                 "--out", str(root / "model")]) == 0
    return root


def test_train_artifacts(small_run, capsys):
    model = small_run / "model"
    for name in ("model.ckpt", "vocab.json", "history.csv", "metrics.json", "train.jsonl",
                 "val.jsonl"):
        assert (model / name).exists()
    metrics = json.loads((model / "metrics.json").read_text())
    assert metrics["n_samples"] == 8
    assert len((model / "history.csv").read_text().splitlines()) == 7
    planted = (small_run / "src" / "planted.tsv").read_text().splitlines()
    assert planted[0] == "path\tlabel\tcall_line\tcallee" and len(planted) == 41


def test_eval_defaults_to_stored_threshold(small_run, capsys):
    model = small_run / "model"
    capsys.readouterr()
    assert main(["eval", str(model / "val.jsonl"), "--checkpoint", str(model / "model.ckpt"),
                 "--vocab", str(model / "vocab.json")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report == json.loads((model / "metrics.json").read_text())


def test_eval_extreme_threshold(small_run, capsys):
    model = small_run / "model"
    capsys.readouterr()
    assert main(["eval", str(model / "val.jsonl"), "--checkpoint", str(model / "model.ckpt"),
                 "--threshold", "0.999999"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["recall"] <= 25 and report["specificity"] >= 75
    assert report["threshold"] == 0.999999


def test_eval_vocab_mismatch(small_run, tmp_path):
    model = small_run / "model"
    other = json.loads((model / "vocab.json").read_text())
    other["paths"] = other["paths"][:-1]
    (tmp_path / "v.json").write_text(json.dumps(other))
    assert main(["eval", str(model / "val.jsonl"), "--checkpoint", str(model / "model.ckpt"),
                 "--vocab", str(tmp_path / "v.json")]) == 1


def test_explain_formats_share_weights(small_run, tmp_path, capsys):
    model = small_run / "model"
    src = sorted((small_run / "src" / "bad").iterdir())[0]
    ck = str(model / "model.ckpt")
    assert main(["explain", str(src), "--checkpoint", ck, "--format", "html",
                 "--out", str(tmp_path / "a.json")]) == 0
    html_out = capsys.readouterr().out
    assert main(["explain", str(src), "--checkpoint", ck, "--format", "ansi",
                 "--out", str(tmp_path / "b.json")]) == 0
    ansi_out = capsys.readouterr().out
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert html_out.startswith("predicted class") and '<div class="band-' in html_out
    assert "weight" in ansi_out
    doc = json.loads((tmp_path / "a.json").read_text())
    assert len(doc["lines"]) == len(src.read_text().splitlines())


def test_explain_class_zero_rationale(small_run, capsys):
    src = sorted((small_run / "src" / "good").iterdir())[0]
    assert main(["explain", str(src), "--checkpoint", str(small_run / "model" / "model.ckpt"),
                 "--class-row", "0"]) == 0
    assert "non-vulnerable rationale" in capsys.readouterr().out


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "attnfuse.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
