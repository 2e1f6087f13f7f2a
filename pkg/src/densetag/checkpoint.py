"""Single-file checkpoints: a JSON header followed by a float32 body.

Layout::

    DENSETAG-CKPT\\n
    <header byte length>\\n
    <JSON header, sorted keys>
    <little-endian float32 blobs, row-major, in header order>

Saving the same model twice gives identical bytes.
"""

import json

import numpy as np

from .contextual import ContextEmbedder
from .lm import LmModel
from .recurrent import GATE_ORDER
from .tagger import TaggerDims, TaggerModel
from .vocab import Vocab

MAGIC = b"DENSETAG-CKPT\n"
VERSION = 1


class CheckpointError(ValueError):
    pass


def lm_named_params(lm, prefix=""):
    out = [(prefix + "embedding", lm.embedding)]
    for l, layer in enumerate(lm.stack.layers):
        out += [(f"{prefix}layer{l}.W", layer.W), (f"{prefix}layer{l}.b", layer.b)]
    h = lm.head
    out += [(prefix + "head.W_proj", h.W_proj), (prefix + "head.b_proj", h.b_proj)]
    out += [(prefix + "head.W_out", h.W_out), (prefix + "head.b_out", h.b_out)]
    return out


def tagger_named_params(model):
    m = model
    out = [("char_embed", m.char_embed)]
    out += [("char_fwd.W", m.char_fwd.W), ("char_fwd.b", m.char_fwd.b)]
    out += [("char_bwd.W", m.char_bwd.W), ("char_bwd.b", m.char_bwd.b)]
    out += [("W_char", m.W_char), ("b_char", m.b_char), ("word_embed", m.word_embed)]
    out += [("word_fwd.W", m.word_fwd.W), ("word_fwd.b", m.word_fwd.b)]
    out += [("word_bwd.W", m.word_bwd.W), ("word_bwd.b", m.word_bwd.b)]
    out += [("W_emit", m.W_emit), ("transitions", m.transitions), ("start", m.start), ("stop", m.stop)]
    if m.embedder is not None:
        e = m.embedder
        out += [("W_cr", e.W_cr), ("b_cr", e.b_cr)]
        out += lm_named_params(e.fwd, "fwd.") + lm_named_params(e.bwd, "bwd.")
    return out


def lm_header(lm, vocab=None):
    head = {
        "direction": lm.direction,
        "vocab_size": lm.vocab_size,
        "embed_dim": lm.embed_dim,
        "hidden_dim": lm.hidden_dim,
        "num_layers": lm.num_layers,
        "proj_dim": lm.proj_dim,
        "layer_dropout": lm.stack.layer_dropout,
        "manifest": [int(i) for i in lm.manifest],
        "mask": [float(v) for v in lm.stack.mask.values],
    }
    if vocab is not None:
        head["vocab"] = vocab.to_list()
        head["vocab_hash"] = vocab.digest()
    return head


def _write(path, header, named):
    header = dict(header)
    header["version"] = VERSION
    header["gate_order"] = "".join(GATE_ORDER)
    header["params"] = [[name, list(t.shape)] for name, t in named]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(f"{len(blob)}\n".encode("ascii"))
        fh.write(blob)
        for _, t in named:
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def read_header(path):
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise CheckpointError(f"{path}: not a densetag checkpoint")
        n = int(fh.readline())
        header = json.loads(fh.read(n).decode("utf-8"))
        body = fh.read()
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    if header.get("gate_order") != "".join(GATE_ORDER):
        raise CheckpointError(f"{path}: gate order {header.get('gate_order')} does not match {''.join(GATE_ORDER)}")
    return header, body


def _fill(header, body, named):
    declared = header["params"]
    if [n for n, _ in declared] != [n for n, _ in named]:
        raise CheckpointError("parameter list in checkpoint does not match the model it describes")
    values = np.frombuffer(body, dtype="<f4")
    off = 0
    for (name, shape), (_, t) in zip(declared, named):
        if tuple(shape) != t.shape:
            raise CheckpointError(f"{name}: stored shape {tuple(shape)} vs model {t.shape}")
        size = int(np.prod(shape))
        if off + size > len(values):
            raise CheckpointError("checkpoint body is truncated")
        t.data[...] = values[off : off + size].reshape(shape).astype(np.float64)
        off += size
    if off != len(values):
        raise CheckpointError(f"checkpoint body has {len(values) - off} trailing values")


def _lm_from_header(h):
    lm = LmModel(
        h["vocab_size"], h["embed_dim"], h["hidden_dim"], h["num_layers"], h["proj_dim"],
        direction=h["direction"], layer_dropout=h["layer_dropout"],
    )
    lm.manifest = list(h["manifest"])
    lm.stack.mask.z.data[0] = h["mask"]
    return lm


def save_lm(path, lm, vocab=None, seed=0, meta=None):
    header = {"kind": "lm", "seed": seed, "lm": lm_header(lm, vocab), "meta": meta or {}}
    _write(path, header, lm_named_params(lm))


def load_lm(path):
    """Returns ``(lm, vocab_or_None, header)``."""
    header, body = read_header(path)
    if header.get("kind") != "lm":
        raise CheckpointError(f"{path}: expected an lm checkpoint, found {header.get('kind')!r}")
    h = header["lm"]
    lm = _lm_from_header(h)
    _fill(header, body, lm_named_params(lm))
    vocab = Vocab.from_list(h["vocab"]) if "vocab" in h else None
    if vocab is not None and vocab.digest() != h["vocab_hash"]:
        raise CheckpointError(f"{path}: vocabulary hash mismatch")
    return lm, vocab, header


def save_tagger(path, model, seed=0, meta=None):
    d = model.dims
    header = {
        "kind": "tagger",
        "seed": seed,
        "meta": meta or {},
        "dims": {"char_dim": d.char_dim, "char_hidden": d.char_hidden, "word_dim": d.word_dim, "word_hidden": d.word_hidden},
        "labels": list(model.labels),
        "word_vocab": model.word_vocab.to_list(),
        "char_vocab": model.char_vocab.to_list(),
    }
    e = model.embedder
    if e is not None:
        header["embedder"] = {
            "r_dim": e.r_dim,
            "tie_masks": e.tie_masks,
            "fwd": lm_header(e.fwd, e.vocab),
            "bwd": lm_header(e.bwd),
        }
    _write(path, header, tagger_named_params(model))


def load_tagger(path):
    """Returns ``(model, header)``."""
    header, body = read_header(path)
    if header.get("kind") != "tagger":
        raise CheckpointError(f"{path}: expected a tagger checkpoint, found {header.get('kind')!r}")
    embedder = None
    if "embedder" in header:
        eh = header["embedder"]
        fwd, bwd = _lm_from_header(eh["fwd"]), _lm_from_header(eh["bwd"])
        vocab = Vocab.from_list(eh["fwd"]["vocab"]) if "vocab" in eh["fwd"] else None
        embedder = ContextEmbedder(fwd, bwd, eh["r_dim"], vocab=vocab, tie_masks=eh["tie_masks"])
    word_vocab = Vocab.from_list(header["word_vocab"])
    char_vocab = Vocab.from_list(header["char_vocab"])
    model = TaggerModel(word_vocab, char_vocab, header["labels"], TaggerDims(**header["dims"]), embedder)
    _fill(header, body, tagger_named_params(model))
    return model, header
