import hashlib
import os

import numpy as np
import pytest

from densetag import autograd as ag
from densetag import checkpoint as ckpt
from densetag.config import (
    ConfigError, RunConfig, dump_config, file_hash, load_config, parse_pairs, read_manifest, resolve,
    write_manifest,
)
from densetag.conll import ConllError, read_conll, write_conll
from densetag.contextual import ContextEmbedder, embed_sequence
from densetag.lm import LmModel
from densetag.tagger import TaggedSentence, TaggerDims, TaggerModel
from densetag.vocab import BOS, EOS, UNK, Vocab, build_vocab, encode_stream


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


# vocabulary ---------------------------------------------------------------


def test_count_threshold(tmp_path):
    corpus = _write(tmp_path / "c.txt", "a a a\nb b b b\nc\n")
    v = build_vocab(corpus, min_count=3)
    assert "a" not in v and v.id("a") == v.unk
    assert "b" in v
    assert v.itos[:3] == [UNK, BOS, EOS]


def test_empty_corpus_gives_specials(tmp_path):
    v = build_vocab(_write(tmp_path / "e.txt", ""), min_count=3)
    assert v.to_list() == [UNK, BOS, EOS]


def test_unreadable_corpus(tmp_path):
    with pytest.raises(OSError):
        build_vocab(str(tmp_path / "missing.txt"))


def test_stream_appends_eos(tmp_path):
    corpus = _write(tmp_path / "c.txt", "x y\n\nz\n")
    v = Vocab(["x", "y"])
    assert encode_stream(corpus, v) == [3, 4, 2, 0, 2]


def test_vocab_roundtrip_and_digest():
    v = Vocab(["b", "a"])
    w = Vocab.from_list(v.to_list())
    assert w.stoi == v.stoi and w.digest() == v.digest()
    assert Vocab(["a", "b"]).digest() != v.digest()


# CoNLL ---------------------------------------------------------------------


def test_two_lines_make_one_sentence(tmp_path):
    sents = read_conll(_write(tmp_path / "a.conll", "EU NNP B-ORG\nrejects VBZ O\n\n"))
    assert len(sents) == 1
    assert sents[0].words == ["EU", "rejects"] and sents[0].labels == ["S-ORG", "O"]


def test_docstart_is_skipped(tmp_path):
    sents = read_conll(_write(tmp_path / "a.conll", "-DOCSTART- -X- O\n\nPeter B-PER\nBlack I-PER\n"))
    assert [s.labels for s in sents] == [["B-PER", "E-PER"]]


def test_bio_kept_when_asked(tmp_path):
    sents = read_conll(_write(tmp_path / "a.conll", "Peter B-PER\nBlack I-PER\n"), bioes=False)
    assert sents[0].labels == ["B-PER", "I-PER"]


def test_malformed_line_names_line_number(tmp_path):
    with pytest.raises(ConllError, match=":3:"):
        read_conll(_write(tmp_path / "a.conll", "a O\nb O\nbroken\n"))


def test_conll_roundtrip(tmp_path):
    text = "EU S-ORG\nrejects O\n\nPeter B-PER\nBlack E-PER\n\n"
    path = _write(tmp_path / "a.conll", text)
    out = str(tmp_path / "b.conll")
    write_conll(out, read_conll(path))
    assert open(out).read() == text


def test_predictions_column(tmp_path):
    out = str(tmp_path / "p.conll")
    write_conll(out, [TaggedSentence(["a", "b"], ["O", "S-X"])], [["O", "O"]])
    assert open(out).read() == "a O O\nb S-X O\n\n"


# checkpoints ---------------------------------------------------------------


def _lm_pair(v=12):
    return LmModel(v, 3, 4, 3, 5, "forward", seed=1), LmModel(v, 3, 4, 3, 5, "backward", seed=1)


def test_lm_roundtrip(tmp_path):
    lm, _ = _lm_pair()
    vocab = Vocab([f"w{i}" for i in range(9)])
    path = str(tmp_path / "lm.ckpt")
    ckpt.save_lm(path, lm, vocab, seed=4, meta={"note": 1})
    back, v2, header = ckpt.load_lm(path)
    assert v2.to_list() == vocab.to_list() and header["seed"] == 4 and header["meta"] == {"note": 1}
    ids = np.array([[1, 2, 3, 4]])
    with ag.no_grad():
        a = np.concatenate([o.data for o in lm.hidden(ids)[0]])
        b = np.concatenate([o.data for o in back.hidden(ids)[0]])
    assert np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-3)) <= 1e-6


def test_saving_is_byte_deterministic(tmp_path):
    a, b = str(tmp_path / "a.ckpt"), str(tmp_path / "b.ckpt")
    ckpt.save_lm(a, _lm_pair()[0])
    ckpt.save_lm(b, _lm_pair()[0])
    assert open(a, "rb").read() == open(b, "rb").read()


def _tagger():
    sents = [TaggedSentence(["w1", "w2", "w3"], ["O", "B-X", "E-X"]), TaggedSentence(["w4"], ["S-Y"])]
    vocab = Vocab([f"w{i}" for i in range(9)])
    f, b = _lm_pair()
    emb = ContextEmbedder(f, b, 4, vocab=vocab, seed=2)
    return TaggerModel.build(sents, TaggerDims(3, 3, 4, 3), emb, seed=3), sents


def test_tagger_roundtrip_after_pruning(tmp_path):
    model, sents = _tagger()
    model.embedder.fwd.stack.mask.z.data[0] = [1, 0, 1]
    model.embedder = model.embedder.compress()
    path = str(tmp_path / "t.ckpt")
    ckpt.save_tagger(path, model, meta={"best_epoch": 3})
    back, header = ckpt.load_tagger(path)
    assert header["meta"]["best_epoch"] == 3
    assert back.embedder.fwd.manifest == [0, 2] and back.embedder.fwd.num_layers == 2
    ckpt.save_tagger(str(tmp_path / "u.ckpt"), back, meta={"best_epoch": 3})
    assert open(path, "rb").read() == open(str(tmp_path / "u.ckpt"), "rb").read()
    enc = back.encode(sents)
    assert back.decode(enc) == ckpt.load_tagger(path)[0].decode(enc)
    r1 = embed_sequence(model.embedder, ["w1", "w2"])
    r2 = embed_sequence(back.embedder, ["w1", "w2"])
    np.testing.assert_allclose(r1, r2, rtol=1e-5, atol=1e-6)


def test_corrupt_checkpoints_are_rejected(tmp_path):
    path = str(tmp_path / "lm.ckpt")
    ckpt.save_lm(path, _lm_pair()[0])
    raw = open(path, "rb").read()
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(ckpt.CheckpointError):
        ckpt.load_lm(str(bad))
    bad.write_bytes(raw[:-8])
    with pytest.raises(ckpt.CheckpointError, match="truncated"):
        ckpt.load_lm(str(bad))
    bad.write_bytes(raw + b"\0\0\0\0")
    with pytest.raises(ckpt.CheckpointError, match="trailing"):
        ckpt.load_lm(str(bad))
    with pytest.raises(ckpt.CheckpointError, match="expected a tagger"):
        ckpt.load_tagger(path)


# config and manifests ------------------------------------------------------


def test_config_file_and_overrides(tmp_path):
    path = _write(tmp_path / "run.cfg", "# desk\nlm_layers = 5\nlm_hidden_dim = 32  # small\nbioes = no\n")
    cfg = load_config(path, {"seed": "7"})
    assert (cfg.lm_layers, cfg.lm_hidden_dim, cfg.bioes, cfg.seed) == (5, 32, False, 7)
    assert load_config(overrides=parse_pairs(dump_config(cfg).splitlines())) == cfg


def test_defaults():
    cfg = RunConfig()
    assert (cfg.lr, cfg.lr_decay, cfg.momentum, cfg.tagger_batch, cfg.dropout) == (0.015, 0.05, 0.9, 10, 0.5)
    assert (cfg.lm_lr, cfg.lm_batch, cfg.lm_unroll, cfg.lm_clip, cfg.layer_dropout) == (0.001, 128, 20, 5.0, 0.5)
    assert (cfg.lambda0, cfg.lambda1, cfg.min_count) == (0.05, 2, 3)


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        load_config(overrides={"learning_rate": "1"})
    with pytest.raises(ConfigError):
        load_config(overrides={"seed": "abc"})
    with pytest.raises(ConfigError, match=":1:"):
        load_config(_write(tmp_path / "x.cfg", "just words\n"))


def test_data_root_lookup(tmp_path, monkeypatch):
    (tmp_path / "corpus.txt").write_text("x\n")
    monkeypatch.setenv("DENSETAG_DATA", str(tmp_path))
    monkeypatch.chdir(tmp_path.parent)
    assert resolve("corpus.txt") == os.path.join(str(tmp_path), "corpus.txt")
    assert resolve("nowhere.txt") == "nowhere.txt"


def test_git_style_hash(tmp_path):
    path = _write(tmp_path / "f.txt", "hello\n")
    assert file_hash(path) == hashlib.sha256(b"blob 6\0hello\n").hexdigest()


def test_manifest_records_inputs(tmp_path):
    data = _write(tmp_path / "d.txt", "abc\n")
    man = str(tmp_path / "manifest.json")
    write_manifest(man, "flops", {"checkpoint": data}, RunConfig(), {"checkpoint": data}, {"total": 1.5})
    m = read_manifest(man)
    assert m["inputs"]["checkpoint"]["sha256"] == file_hash(data)
    assert m["config"]["seed"] == 0 and m["metrics"] == {"total": 1.5}
