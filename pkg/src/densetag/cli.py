"""Command-line entry point: ``densetag <command> [options]``.

Every command that takes ``--out DIR`` writes ``manifest.json`` there with
the resolved arguments, the full config, content hashes of the inputs and
the metrics it logged. ``densetag replay DIR/manifest.json`` reruns the
command into a scratch directory and checks the metrics match exactly.
"""

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
import time

import numpy as np

from . import checkpoint as ckpt
from . import kernels
from .config import (
    ConfigError, dump_config, file_hash, load_config, parse_pairs, read_manifest, resolve, write_manifest,
)
from .conll import read_conll, write_conll
from .contextual import ContextEmbedder, embed_sequence
from .flops import ModelDims, estimate_flops, format_breakdown, tagger_dims
from .lm import LmTrainConfig, train_lm, unigram_perplexity
from .pruning import PruneConfig, RegularizerSpec, prune, selection_pattern
from .tagger import TaggerDims, TaggerModel, TaggerTrainConfig, load_vectors, score_sentences, train_tagger
from .vocab import Vocab, build_vocab, encode_stream, read_lines

log = logging.getLogger("densetag")


# ---------------------------------------------------------------------------
# config -> component settings


def lm_settings(cfg):
    return LmTrainConfig(
        epochs=cfg.lm_epochs, batch_size=cfg.lm_batch, unroll=cfg.lm_unroll, lr=cfg.lm_lr,
        clip=cfg.lm_clip, layer_dropout=cfg.layer_dropout, seed=cfg.seed, eval_batch_size=cfg.lm_eval_batch,
    )


def tagger_settings(cfg):
    return TaggerTrainConfig(
        epochs=cfg.tagger_epochs, batch_size=cfg.tagger_batch, lr=cfg.lr, lr_decay=cfg.lr_decay,
        momentum=cfg.momentum, clip=cfg.clip, dropout=cfg.dropout, patience=cfg.patience, seed=cfg.seed,
    )


def prune_settings(cfg, start_epoch=0):
    return PruneConfig(
        epochs=cfg.prune_epochs, batch_size=cfg.tagger_batch, lr=cfg.lr, lr_decay=cfg.lr_decay,
        momentum=cfg.momentum, clip=cfg.clip, dropout=cfg.dropout, seed=cfg.seed,
        start_epoch=start_epoch, chars_per_word=cfg.chars_per_word,
    )


def write_csv(path, rows):
    if not rows:
        open(path, "w").close()
        return
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, np.generic):
        return x.item()
    return x


# ---------------------------------------------------------------------------
# commands; each returns (inputs, metrics)


def cmd_build_vocab(args, cfg):
    vocab = build_vocab(args.corpus, cfg.min_count)
    with open(os.path.join(args.out, "vocab.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(vocab.to_list()) + "\n")
    print(f"{len(vocab)} entries (min_count={cfg.min_count}) digest {vocab.digest()}")
    return {"corpus": args.corpus}, {"size": len(vocab), "digest": vocab.digest()}


def read_vocab(path):
    with open(path, encoding="utf-8") as fh:
        return Vocab.from_list([line.rstrip("\n") for line in fh if line.rstrip("\n")])


def cmd_train_lm(args, cfg):
    from .lm import LmModel

    vocab = read_vocab(args.vocab) if args.vocab else build_vocab(args.train, cfg.min_count)
    train_ids, dev_ids = encode_stream(args.train, vocab), encode_stream(args.dev, vocab)
    model = LmModel(
        len(vocab), cfg.lm_embed_dim, cfg.lm_hidden_dim, cfg.lm_layers, cfg.lm_proj_dim,
        direction=args.direction, seed=cfg.seed, layer_dropout=cfg.layer_dropout,
    )
    history = train_lm(model, train_ids, dev_ids, lm_settings(cfg), max_windows=cfg.lm_max_windows or None)
    baseline = unigram_perplexity(train_ids, dev_ids, len(vocab))
    best = min(h["dev_ppl"] for h in history)
    ckpt.save_lm(os.path.join(args.out, "lm.ckpt"), model, vocab, seed=cfg.seed, meta={"best_dev_ppl": best})
    write_csv(os.path.join(args.out, "lm_log.csv"), history)
    print(f"best dev perplexity {best:.3f} (unigram baseline {baseline:.3f})")
    inputs = {"train": args.train, "dev": args.dev, "vocab": args.vocab}
    return inputs, {"history": history, "unigram_ppl": baseline, "best_dev_ppl": best}


def load_embedder(fwd_path, bwd_path, cfg):
    fwd, fvocab, _ = ckpt.load_lm(fwd_path)
    bwd, bvocab, _ = ckpt.load_lm(bwd_path)
    if fvocab is None or bvocab is None or fvocab.digest() != bvocab.digest():
        raise ckpt.CheckpointError("forward and backward LM vocabularies differ")
    return ContextEmbedder(fwd, bwd, cfg.word_dim, vocab=fvocab, seed=cfg.seed, tie_masks=cfg.tie_masks)


def cmd_train_tagger(args, cfg):
    train = read_conll(args.train, bioes=cfg.bioes)
    dev = read_conll(args.dev, bioes=cfg.bioes)
    embedder = None
    if args.fwd_lm or args.bwd_lm:
        if not (args.fwd_lm and args.bwd_lm):
            raise ConfigError("--fwd-lm and --bwd-lm go together (omit both for the NoLM tagger)")
        embedder = load_embedder(args.fwd_lm, args.bwd_lm, cfg)
    vectors = load_vectors(args.vectors) if args.vectors else None
    dims = TaggerDims(cfg.char_dim, cfg.char_hidden, cfg.word_dim, cfg.word_hidden)
    model = TaggerModel.build(train, dims, embedder, seed=cfg.seed, vectors=vectors)
    history = train_tagger(model, train, dev, tagger_settings(cfg))
    best = max(range(len(history)), key=lambda i: (history[i]["dev_f1"], -i))
    meta = {"best_epoch": best, "epochs_run": len(history), "dev_f1": history[best]["dev_f1"]}
    ckpt.save_tagger(os.path.join(args.out, "tagger.ckpt"), model, seed=cfg.seed, meta=meta)
    write_csv(os.path.join(args.out, "tagger_log.csv"), history)
    print(f"best dev F1 {history[best]['dev_f1']:.4f} at epoch {best}")
    inputs = {"train": args.train, "dev": args.dev, "fwd_lm": args.fwd_lm, "bwd_lm": args.bwd_lm, "vectors": args.vectors}
    return inputs, {"history": history, **meta}


def cmd_prune(args, cfg):
    model, header = ckpt.load_tagger(args.checkpoint)
    train = read_conll(args.train, bioes=cfg.bioes)
    dev = read_conll(args.dev, bioes=cfg.bioes)
    spec = RegularizerSpec(cfg.regularizer, cfg.lambda0, cfg.lambda1)
    start = header.get("meta", {}).get("best_epoch", -1) + 1
    pruned, report = prune(model, train, dev, spec, prune_settings(cfg, start))
    ckpt.save_tagger(os.path.join(args.out, "pruned.ckpt"), pruned, seed=cfg.seed, meta={"pruned_from": args.checkpoint})
    report.write_csv(os.path.join(args.out, "prune_report.csv"))
    summary = report.summary()
    with open(os.path.join(args.out, "prune_summary.txt"), "w") as fh:
        fh.write(summary + "\n")
    print(summary)
    metrics = {
        "z_relaxed": report.z_relaxed, "z_rounded": report.z_rounded, "manifests": report.manifests,
        "flops_before": report.flops_before, "flops_after": report.flops_after,
        "dev_f1_before": report.dev_f1_before, "dev_f1_after": report.dev_f1_after,
        "binarized": report.binarized, "steps": len(report.trajectory),
    }
    return {"checkpoint": args.checkpoint, "train": args.train, "dev": args.dev}, metrics


def cmd_selection_pattern(args, cfg):
    model, header = ckpt.load_tagger(args.checkpoint)
    train = read_conll(args.train, bioes=cfg.bioes)
    dev = read_conll(args.dev, bioes=cfg.bioes)
    spec = RegularizerSpec(cfg.regularizer, cfg.lambda0, cfg.lambda1)
    start = header.get("meta", {}).get("best_epoch", -1) + 1
    seeds = [cfg.seed + i for i in range(args.runs)]
    ff, fb, _ = selection_pattern(
        model, train, dev, spec, prune_settings(cfg, start), seeds, csv_path=os.path.join(args.out, "pattern.csv")
    )
    print("forward  " + " ".join(f"{v:.2f}" for v in ff))
    print("backward " + " ".join(f"{v:.2f}" for v in fb))
    return {"checkpoint": args.checkpoint, "train": args.train, "dev": args.dev}, {"forward": ff, "backward": fb}


def cmd_eval(args, cfg):
    model, _ = ckpt.load_tagger(args.checkpoint)
    data = read_conll(args.data, bioes=cfg.bioes)
    (p, r, f1), preds = score_sentences(model, data)
    if args.predictions:
        write_conll(args.predictions, data, preds)
    print(f"P {p:.4f}  R {r:.4f}  F1 {f1:.4f}")
    return {"checkpoint": args.checkpoint, "data": args.data}, {"precision": p, "recall": r, "f1": f1}


def cmd_embed(args, cfg):
    model, _ = ckpt.load_tagger(args.checkpoint)
    if model.embedder is None:
        raise ConfigError(f"{args.checkpoint} has no language-model embedder")
    rows = 0
    with open(args.output, "w", encoding="utf-8") as fh:
        for toks in read_lines(args.input):
            r = embed_sequence(model.embedder, toks)
            for tok, vec in zip(toks, r):
                fh.write(tok + " " + " ".join(f"{v:.6g}" for v in vec) + "\n")
            fh.write("\n")
            rows += len(toks)
    print(f"wrote {rows} token vectors of size {model.embedder.r_dim} to {args.output}")
    return {"checkpoint": args.checkpoint, "input": args.input}, {"tokens": rows}


def checkpoint_dims(path):
    header, _ = ckpt.read_header(path)
    if header["kind"] == "tagger":
        model, _ = ckpt.load_tagger(path)
        return tagger_dims(model)
    h = header["lm"]
    dims = ModelDims(lm_embed=h["embed_dim"], lm_hidden=h["hidden_dim"], r_dim=None)
    if h["direction"] == "forward":
        dims.fwd_layers = h["num_layers"]
    else:
        dims.bwd_layers = h["num_layers"]
    dims.char_dim = dims.char_hidden = dims.word_dim = dims.word_hidden = dims.num_labels = 0
    return dims


def cmd_flops(args, cfg):
    dims = checkpoint_dims(args.checkpoint)
    est = estimate_flops(dims, chars_per_word=cfg.chars_per_word)
    print(format_breakdown(est))
    return {"checkpoint": args.checkpoint}, {"total": est["total"], "lm": est["lm"], "repr": est["repr"], "tagger": est["tagger"]}


def cmd_bench(args, cfg):
    if args.backend:
        kernels.set_backend(args.backend)
    model, _ = ckpt.load_tagger(args.checkpoint)
    data = read_conll(args.data, bioes=cfg.bioes)
    enc = model.encode(data)
    words = sum(len(e) for e in enc)
    best = float("inf")
    for _ in range(args.repeat):
        t = time.perf_counter()
        for i in range(0, len(enc), args.batch_size):
            model.decode(enc[i : i + args.batch_size])
        best = min(best, time.perf_counter() - t)
    print(f"backend {kernels.BACKEND}: {words / best:,.0f} words/s, {len(enc) / best:,.1f} sentences/s")
    # timings are not reproducible, so they stay out of the replayed metrics
    return {"checkpoint": args.checkpoint, "data": args.data}, {"sentences": len(enc), "words": words}


def output_hashes(out_dir, since=None):
    """Content hashes of the files a run wrote into ``out_dir``."""
    found = {}
    for name in sorted(os.listdir(out_dir)):
        path = os.path.join(out_dir, name)
        if name in ("manifest.json", "config.txt") or not os.path.isfile(path):
            continue
        if since is None or os.path.getmtime(path) >= since:
            found[name] = file_hash(path)
    return found


def replay(manifest_path):
    """Rerun a recorded command; True when every metric and output file is reproduced exactly."""
    manifest = read_manifest(manifest_path)
    for name, info in manifest["inputs"].items():
        if file_hash(info["path"]) != info["sha256"]:
            print(f"input {name} ({info['path']}) changed since the run", file=sys.stderr)
            return False
    ns = argparse.Namespace(**manifest["args"])
    cfg = load_config(overrides={k: str(v) for k, v in manifest["config"].items()})
    with tempfile.TemporaryDirectory() as tmp:
        ns.out = tmp
        _, metrics = COMMANDS[manifest["command"]][0](ns, cfg)
        outputs = output_hashes(tmp)
    same = json.dumps(_jsonable(metrics), sort_keys=True) == json.dumps(manifest["metrics"], sort_keys=True)
    if not same:
        print("replay DIFFERS from the recorded metrics")
        return False
    recorded = manifest.get("outputs", {})
    changed = sorted(k for k in recorded if outputs.get(k) != recorded[k])
    if changed:
        print(f"replay DIFFERS in output files: {', '.join(changed)}")
        return False
    print(f"replay identical ({len(recorded)} output files, all metrics)")
    return True


COMMANDS = {
    "build-vocab": (cmd_build_vocab, "build a vocabulary from a tokenised corpus"),
    "train-lm": (cmd_train_lm, "train a forward or backward language model"),
    "train-tagger": (cmd_train_tagger, "train the BiLSTM-CRF tagger (NoLM without --fwd-lm/--bwd-lm)"),
    "prune": (cmd_prune, "select LM layers for the task and delete the rest"),
    "selection-pattern": (cmd_selection_pattern, "layer retention frequencies over repeated pruning runs"),
    "eval": (cmd_eval, "precision/recall/F1 of a tagger on a CoNLL file"),
    "embed": (cmd_embed, "write contextual token representations"),
    "flops": (cmd_flops, "estimated multiply-adds per word"),
    "bench": (cmd_bench, "decoding speed of a tagger"),
    "replay": (replay, "rerun a recorded command and compare its metrics"),
}

PATH_ARGS = ("corpus", "train", "dev", "vocab", "fwd_lm", "bwd_lm", "vectors", "checkpoint", "data", "input", "manifest")


def build_parser():
    ap = argparse.ArgumentParser(prog="densetag", description="Dense LSTM language models, tagging and layer pruning.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, out=True, out_required=True):
        p = sub.add_parser(name, help=COMMANDS[name][1])
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--seed", type=int)
        if out:
            p.add_argument("--out", required=out_required, help="output directory (receives manifest.json)")
        return p

    p = add("build-vocab")
    p.add_argument("--corpus", required=True)
    p.add_argument("--min-count", type=int)
    p = add("train-lm")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--vocab")
    p.add_argument("--direction", choices=("forward", "backward"), default="forward")
    p = add("train-tagger")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--fwd-lm")
    p.add_argument("--bwd-lm")
    p.add_argument("--vectors")
    for name in ("prune", "selection-pattern"):
        p = add(name)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--train", required=True)
        p.add_argument("--dev", required=True)
        p.add_argument("--lambda0", type=float)
        p.add_argument("--lambda1", type=int)
        p.add_argument("--regularizer", choices=("R1", "R2", "R3"))
        p.add_argument("--max-epochs", type=int)
        if name == "selection-pattern":
            p.add_argument("--runs", type=int, default=10)
    p = add("eval", out_required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--predictions")
    p = add("embed", out_required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p = add("flops", out_required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--chars-per-word", type=float)
    p = add("bench", out_required=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--backend", choices=sorted(kernels.BACKENDS))
    p = sub.add_parser("replay", help=COMMANDS["replay"][1])
    p.add_argument("manifest")
    return ap


FLAG_KEYS = {
    "seed": "seed", "min_count": "min_count", "lambda0": "lambda0", "lambda1": "lambda1",
    "regularizer": "regularizer", "max_epochs": "prune_epochs", "chars_per_word": "chars_per_word",
}


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        for key in PATH_ARGS:
            if getattr(args, key, None):
                setattr(args, key, os.path.abspath(resolve(getattr(args, key))))
        if args.command == "replay":
            return 0 if replay(args.manifest) else 1
        overrides = parse_pairs(args.set, "--set")
        for flag, key in FLAG_KEYS.items():
            if getattr(args, flag, None) is not None:
                overrides[key] = str(getattr(args, flag))
        cfg = load_config(args.config, overrides)
        out = getattr(args, "out", None)
        if out:
            os.makedirs(out, exist_ok=True)
            dump_config(cfg, os.path.join(out, "config.txt"))
        started = time.time()
        inputs, metrics = COMMANDS[args.command][0](args, cfg)
        if out:
            recorded = {k: v for k, v in vars(args).items() if k not in ("out", "verbose")}
            write_manifest(
                os.path.join(out, "manifest.json"), args.command, recorded, cfg, inputs, _jsonable(metrics),
                outputs=output_hashes(out, since=started - 1.0),
            )
    except (ConfigError, ckpt.CheckpointError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
