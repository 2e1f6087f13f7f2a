import json
import os

import pytest

from densetag.cli import main
from densetag.synthetic import lm_corpus, tagging_corpus

SMALL = [
    "lm_embed_dim=4", "lm_hidden_dim=4", "lm_layers=3", "lm_proj_dim=4", "lm_batch=4", "lm_epochs=1",
    "lm_max_windows=5", "char_dim=3", "char_hidden=3", "word_dim=4", "word_hidden=3", "tagger_epochs=2",
    "prune_epochs=1", "min_count=0",
]


def _sets():
    out = []
    for kv in SMALL:
        out += ["--set", kv]
    return out


def _write_conll(path, sentences):
    with open(path, "w") as fh:
        for s in sentences:
            for w, y in zip(s.words, s.labels):
                fh.write(f"{w} {y}\n")
            fh.write("\n")


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    lines = lm_corpus(300, seed=1)
    with open(root / "lm.txt", "w") as fh:
        fh.write("\n".join(" ".join(t) for t in lines[:250]) + "\n")
    with open(root / "lm_dev.txt", "w") as fh:
        fh.write("\n".join(" ".join(t) for t in lines[250:]) + "\n")
    train, dev, test = tagging_corpus(12, 6, 6, seed=2)
    _write_conll(root / "train.conll", train + dev)  # every label appears in training
    _write_conll(root / "dev.conll", dev)
    _write_conll(root / "test.conll", test)
    p = lambda name: str(root / name)  # noqa: E731
    steps = [
        ["build-vocab", "--corpus", p("lm.txt"), "--out", p("vocab")],
        ["train-lm", "--train", p("lm.txt"), "--dev", p("lm_dev.txt"), "--vocab", p("vocab/vocab.txt"), "--out", p("fwd")],
        ["train-lm", "--train", p("lm.txt"), "--dev", p("lm_dev.txt"), "--vocab", p("vocab/vocab.txt"),
         "--direction", "backward", "--out", p("bwd")],
        ["train-tagger", "--train", p("train.conll"), "--dev", p("dev.conll"), "--fwd-lm", p("fwd/lm.ckpt"),
         "--bwd-lm", p("bwd/lm.ckpt"), "--out", p("tagger")],
        ["prune", "--checkpoint", p("tagger/tagger.ckpt"), "--train", p("train.conll"), "--dev", p("dev.conll"),
         "--lambda0", "0.05", "--lambda1", "2", "--out", p("pruned")],
    ]
    for argv in steps:
        assert main(argv[:1] + _sets() + argv[1:]) == 0, argv
    return root


def test_pipeline_outputs(run):
    for rel in ("vocab/vocab.txt", "fwd/lm.ckpt", "fwd/lm_log.csv", "bwd/lm.ckpt", "tagger/tagger.ckpt",
                "tagger/tagger_log.csv", "pruned/pruned.ckpt", "pruned/prune_report.csv", "pruned/prune_summary.txt"):
        assert os.path.exists(run / rel), rel
    man = json.loads((run / "tagger" / "manifest.json").read_text())
    assert man["command"] == "train-tagger" and man["config"]["word_dim"] == 4
    assert set(man["inputs"]) == {"train", "dev", "fwd_lm", "bwd_lm"}


def test_eval_prints_scores(run, capsys):
    pred = str(run / "pred.conll")
    assert main(["eval", "--checkpoint", str(run / "pruned/pruned.ckpt"), "--data", str(run / "test.conll"),
                 "--predictions", pred]) == 0
    out = capsys.readouterr().out
    assert "P " in out and "R " in out and "F1 " in out
    assert all(len(line.split()) == 3 for line in open(pred) if line.strip())


def test_flops_prints_breakdown(run, capsys):
    assert main(["flops", "--checkpoint", str(run / "tagger/tagger.ckpt")]) == 0
    out = capsys.readouterr().out
    assert "forward layer 3" in out and "MACs/word" in out
    assert main(["flops", "--checkpoint", str(run / "fwd/lm.ckpt")]) == 0


def test_embed_writes_vectors(run):
    src = run / "raw.txt"
    src.write_text("she saw paris .\nthey quietly left\n")
    out = run / "vec.txt"
    assert main(["embed", "--checkpoint", str(run / "tagger/tagger.ckpt"), "--input", str(src), "--output", str(out)]) == 0
    rows = [line.split() for line in out.read_text().splitlines() if line]
    assert len(rows) == 7 and all(len(r) == 5 for r in rows)


def test_bench_reports_rates(run, capsys):
    assert main(["bench", "--checkpoint", str(run / "tagger/tagger.ckpt"), "--data", str(run / "test.conll"),
                 "--repeat", "1", "--backend", "python"]) == 0
    out = capsys.readouterr().out
    assert "words/s" in out and "sentences/s" in out


def test_replay_is_identical(run):
    for step in ("vocab", "fwd", "tagger", "pruned"):
        assert main(["replay", str(run / step / "manifest.json")]) == 0, step


def test_replay_detects_changed_input(run, tmp_path):
    data = tmp_path / "d.conll"
    data.write_text((run / "test.conll").read_text())
    out = tmp_path / "ev"
    assert main(["eval", "--checkpoint", str(run / "tagger/tagger.ckpt"), "--data", str(data), "--out", str(out)]) == 0
    assert main(["replay", str(out / "manifest.json")]) == 0
    data.write_text("x O\n\n")
    assert main(["replay", str(out / "manifest.json")]) == 1


def test_unknown_flag_exits_nonzero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["flops", "--checkpoint", "x", "--bogus"])
    assert exc.value.code != 0
    assert "usage" in capsys.readouterr().err


def test_bad_inputs_exit_with_code_two(run, tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.ckpt"), "--data", str(run / "test.conll")]) == 2
    assert main(["flops", "--checkpoint", str(run / "tagger/tagger.ckpt"), "--set", "nope=1"]) == 2
    assert main(["train-tagger", "--train", str(run / "train.conll"), "--dev", str(run / "dev.conll"),
                 "--fwd-lm", str(run / "fwd/lm.ckpt"), "--out", str(tmp_path / "t")]) == 2


def test_replay_checks_output_files(run, tmp_path):
    man = json.loads((run / "tagger" / "manifest.json").read_text())
    assert set(man["outputs"]) == {"tagger.ckpt", "tagger_log.csv"}
    man["outputs"]["tagger.ckpt"] = "0" * 64
    forged = tmp_path / "manifest.json"
    forged.write_text(json.dumps(man))
    assert main(["replay", str(forged)]) == 1
