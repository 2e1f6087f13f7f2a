"""BiLSTM-CRF sequence labeler with context-aware character features.

Per token the word LSTM reads ``v_t = [c*_t ; r_t ; w_t]`` (``[c*_t ; w_t]``
without a language model). ``c*_t`` is a linear projection of the
character BiLSTM run over the whole sentence's character stream. The
forward half is read at the space after the word and the backward half at
the word's first character. A first-order CRF with virtual START/STOP
states scores label paths.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import kernels
from .contextual import flat_rows
from .metrics import micro_f1
from .optim import SGDMomentum, clip_grad_norm, inverse_time_lr, zero_grad
from .recurrent import LstmLayer
from .rng import glorot_uniform, stream
from .vocab import Vocab

log = logging.getLogger(__name__)

PAD_CHAR, UNK_CHAR = "<pad>", "<unk>"


@dataclass
class TaggedSentence:
    words: list
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if self.labels and len(self.labels) != len(self.words):
            raise ValueError(f"{len(self.words)} words but {len(self.labels)} labels")

    @property
    def chars(self):
        return "".join(w + " " for w in self.words)


@dataclass
class TaggerDims:
    char_dim: int = 30
    char_hidden: int = 150
    word_dim: int = 100
    word_hidden: int = 150


@dataclass
class Encoded:
    words: np.ndarray
    chars: np.ndarray
    space_pos: np.ndarray
    start_pos: np.ndarray
    lm_ids: list
    labels: np.ndarray

    def __len__(self):
        return len(self.words)


def ordered_labels(sentences):
    found = {t for s in sentences for t in s.labels}
    return ["O"] + sorted(found - {"O"})


def load_vectors(path):
    """Text word vectors: a token then its floats on each line."""
    vecs = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip().split(" ")
            if len(parts) > 2:
                vecs[parts[0]] = np.array([float(x) for x in parts[1:]])
    return vecs


class TaggerModel:
    def __init__(self, word_vocab, char_vocab, labels, dims=None, embedder=None, seed=0, vectors=None):
        dims = dims or TaggerDims()
        self.dims = dims
        self.word_vocab = word_vocab
        self.char_vocab = char_vocab
        self.labels = list(labels)
        self.label_ids = {t: i for i, t in enumerate(self.labels)}
        self.embedder = embedder
        if embedder is not None and embedder.r_dim != dims.word_dim:
            raise ag.ShapeError(f"r_t has {embedder.r_dim} dims; the tagger expects word_dim={dims.word_dim}")
        rng = stream(seed, "init/tagger")
        k = len(self.labels)
        bound = math.sqrt(3.0 / dims.char_dim)
        self.char_embed = ag.Tensor(rng.uniform(-bound, bound, (len(char_vocab), dims.char_dim)), requires_grad=True)
        self.char_fwd = LstmLayer(dims.char_dim, dims.char_hidden, rng)
        self.char_bwd = LstmLayer(dims.char_dim, dims.char_hidden, rng)
        self.W_char = ag.Tensor(glorot_uniform(rng, 2 * dims.char_hidden, dims.word_dim), requires_grad=True)
        self.b_char = ag.Tensor(np.zeros((1, dims.word_dim)), requires_grad=True)
        bound = math.sqrt(3.0 / dims.word_dim)
        emb = rng.uniform(-bound, bound, (len(word_vocab), dims.word_dim))
        if vectors:
            for tok, i in word_vocab.stoi.items():
                if tok in vectors and len(vectors[tok]) == dims.word_dim:
                    emb[i] = vectors[tok]
        self.word_embed = ag.Tensor(emb, requires_grad=True)
        v_dim = dims.word_dim * (3 if embedder is not None else 2)
        self.word_fwd = LstmLayer(v_dim, dims.word_hidden, rng)
        self.word_bwd = LstmLayer(v_dim, dims.word_hidden, rng)
        self.W_emit = ag.Tensor(glorot_uniform(rng, 2 * dims.word_hidden, k), requires_grad=True)
        self.transitions = ag.Tensor(np.zeros((k, k)), requires_grad=True)
        self.start = ag.Tensor(np.zeros((1, k)), requires_grad=True)
        self.stop = ag.Tensor(np.zeros((1, k)), requires_grad=True)

    @classmethod
    def build(cls, train, dims=None, embedder=None, seed=0, vectors=None):
        words = sorted({w for s in train for w in s.words} | set(vectors or ()))
        chars = sorted({ch for s in train for ch in s.chars})
        word_vocab = Vocab(words, specials=("<unk>",))
        char_vocab = Vocab(chars, specials=(UNK_CHAR, PAD_CHAR))
        return cls(word_vocab, char_vocab, ordered_labels(train), dims, embedder, seed, vectors)

    @property
    def crf_params(self):
        return [self.transitions, self.start, self.stop]

    def own_params(self):
        return [
            self.char_embed, *self.char_fwd.params(), *self.char_bwd.params(), self.W_char, self.b_char,
            self.word_embed, *self.word_fwd.params(), *self.word_bwd.params(), self.W_emit, *self.crf_params,
        ]

    def params(self):
        extra = self.embedder.params() if self.embedder is not None else []
        return self.own_params() + extra

    def encode(self, sentences):
        out = []
        for s in sentences:
            if not s.words:
                raise ValueError("cannot tag an empty sentence")
            lens = np.array([len(w) for w in s.words])
            ends = np.cumsum(lens + 1) - 1
            starts = ends - lens
            for tag in s.labels:
                if tag not in self.label_ids:
                    raise ValueError(f"unknown label {tag!r}")
            lm_ids = self.embedder.encode(s.words) if self.embedder is not None and self.embedder.vocab else []
            out.append(
                Encoded(
                    words=np.array(self.word_vocab.encode(s.words), dtype=np.int64),
                    chars=np.array(self.char_vocab.encode(list(s.chars)), dtype=np.int64),
                    space_pos=ends,
                    start_pos=starts,
                    lm_ids=lm_ids,
                    labels=np.array([self.label_ids[t] for t in s.labels], dtype=np.int64),
                )
            )
        return out

    def char_features(self, batch):
        """Projected character features ``c*_t`` for every word, sentence by sentence."""
        lengths = [len(e.chars) for e in batch]
        x = ag.take_rows(self.char_embed, np.concatenate([e.chars for e in batch]))
        fwd = run_direction(self.char_fwd, x, lengths)
        bwd = run_direction(self.char_bwd, x, lengths, reverse=True)
        offs = np.cumsum([0] + lengths[:-1])
        at_space = np.concatenate([o + e.space_pos for o, e in zip(offs, batch)])
        at_start = np.concatenate([o + e.start_pos for o, e in zip(offs, batch)])
        c = ag.concat([ag.take_rows(fwd, at_space), ag.take_rows(bwd, at_start)])
        return ag.add(ag.matmul(c, self.W_char), self.b_char)

    def emissions(self, batch, lm_feats=None, dropout=0.0, rng=None):
        """(N, K) emission scores for all words of the batch plus their lengths."""
        lengths = [len(e) for e in batch]
        parts = [self.char_features(batch)]
        if self.embedder is not None:
            if lm_feats is None:
                lm_feats = self.embedder.features([e.lm_ids for e in batch])
            parts.append(self.embedder.represent(lm_feats))
        parts.append(ag.take_rows(self.word_embed, np.concatenate([e.words for e in batch])))
        v = ag.concat(parts)
        if rng is not None and dropout > 0:
            v = ag.dropout(v, _drop_mask(rng, v.shape, dropout))
        u = ag.concat(
            [run_direction(self.word_fwd, v, lengths), run_direction(self.word_bwd, v, lengths, reverse=True)]
        )
        if rng is not None and dropout > 0:
            u = ag.dropout(u, _drop_mask(rng, u.shape, dropout))
        return ag.matmul(u, self.W_emit), lengths

    def loss(self, batch, lm_feats=None, dropout=0.0, rng=None):
        em, lengths = self.emissions(batch, lm_feats, dropout, rng)
        labels = np.concatenate([e.labels for e in batch])
        return ag.crf_nll(em, self.transitions, self.start, self.stop, lengths, labels)

    def decode(self, batch, lm_feats=None):
        with ag.no_grad():
            em, lengths = self.emissions(batch, lm_feats)
        out, off = [], 0
        for n in lengths:
            path, _ = viterbi_decode(self, em.data[off : off + n])
            out.append([self.labels[i] for i in path])
            off += n
        return out


def run_direction(layer, x, lengths, reverse=False):
    """Run one LSTM over padded sequences stored row-wise in ``x``.

    Sequences are consecutive row blocks of the given lengths. Returns the
    hidden states in the same row order as ``x``.
    """
    batch = len(lengths)
    offs = np.cumsum([0] + list(lengths[:-1]))
    lens = np.asarray(lengths)
    zeros = np.zeros((batch, layer.hidden_dim))
    h, c = ag.Tensor(zeros), ag.Tensor(zeros)
    outs = []
    for t in range(int(lens.max())):
        pos = (lens - 1 - t) if reverse else np.full(batch, t)
        idx = np.where(t < lens, offs + pos, offs)
        h, c = layer.step(ag.take_rows(x, idx), h, c)
        outs.append(h)
    stacked = ag.concat_rows(outs)
    return ag.take_rows(stacked, flat_rows(lengths, reverse=reverse))


def _drop_mask(rng, shape, p):
    return (rng.random(shape) >= p) / (1.0 - p)


def char_features(model, sentence):
    """``c*_t`` rows for one sentence as an array."""
    with ag.no_grad():
        return model.char_features(model.encode([sentence])).data


def crf_nll(model, emissions, labels):
    """Negative log-likelihood of one label path given (T, K) emission scores."""
    em = emissions if isinstance(emissions, ag.Tensor) else ag.Tensor(emissions)
    labels = np.asarray(labels, dtype=np.int64)
    return ag.crf_nll(em, model.transitions, model.start, model.stop, [len(labels)], labels)


def path_score(model, emissions, path):
    em = np.asarray(emissions.data if isinstance(emissions, ag.Tensor) else emissions)
    path = np.asarray(path)
    tr, st, sp = model.transitions.data, model.start.data[0], model.stop.data[0]
    return float(st[path[0]] + em[np.arange(len(path)), path].sum() + tr[path[:-1], path[1:]].sum() + sp[path[-1]])


def viterbi_decode(model, emissions):
    """Highest-scoring label path (ties to the lowest label index) and its score."""
    em = emissions.data if isinstance(emissions, ag.Tensor) else np.asarray(emissions, dtype=np.float64)
    return kernels.viterbi(em, model.transitions.data, model.start.data, model.stop.data)


@dataclass
class TaggerTrainConfig:
    epochs: int = 100
    batch_size: int = 10
    lr: float = 0.015
    lr_decay: float = 0.05
    momentum: float = 0.9
    clip: float = 5.0
    dropout: float = 0.5
    patience: int = 10
    seed: int = 0
    eval_train: bool = False


class FeatureCache:
    """Frozen-LM features per sentence; valid while the layer masks stay fixed."""

    def __init__(self, embedder, encoded, chunk=32):
        self.rows = []
        with ag.no_grad():
            for i in range(0, len(encoded), chunk):
                part = encoded[i : i + chunk]
                feats = embedder.features([e.lm_ids for e in part]).data
                off = 0
                for e in part:
                    self.rows.append(feats[off : off + len(e)])
                    off += len(e)

    def batch(self, idx):
        return ag.Tensor(np.concatenate([self.rows[i] for i in idx]))


def evaluate(model, encoded, gold, cache=None, batch_size=32):
    preds = []
    for i in range(0, len(encoded), batch_size):
        idx = list(range(i, min(i + batch_size, len(encoded))))
        feats = cache.batch(idx) if cache is not None else None
        preds.extend(model.decode([encoded[j] for j in idx], lm_feats=feats))
    return micro_f1(gold, preds), preds


def train_tagger(model, train, dev, config, on_improve=None):
    """SGD-momentum training with per-epoch ``eta0 / (1 + rho * epoch)`` decay.

    Keeps the parameters with the best dev F1 (restored at the end) and stops
    after ``patience`` epochs without improvement. Layer masks never change.
    """
    params = model.params()
    opt = SGDMomentum(params, lr=config.lr, momentum=config.momentum)
    batch_rng = stream(config.seed, "batching")
    drop_rng = stream(config.seed, "dropout")
    enc_train, enc_dev = model.encode(train), model.encode(dev)
    gold_dev = [s.labels for s in dev]
    tr_cache = dv_cache = None
    if model.embedder is not None:
        tr_cache = FeatureCache(model.embedder, enc_train)
        dv_cache = FeatureCache(model.embedder, enc_dev)
    history = []
    best, best_f1, since = None, -1.0, 0
    for epoch in range(config.epochs):
        opt.lr = inverse_time_lr(config.lr, config.lr_decay, epoch)
        order = batch_rng.permutation(len(enc_train))
        total = 0.0
        for i in range(0, len(order), config.batch_size):
            idx = order[i : i + config.batch_size]
            feats = tr_cache.batch(idx) if tr_cache is not None else None
            zero_grad(params)
            loss = model.loss([enc_train[j] for j in idx], feats, config.dropout, drop_rng)
            value = loss.item()
            if not math.isfinite(value):
                raise FloatingPointError(f"tagger loss diverged at epoch {epoch}")
            ag.backward(loss)
            clip_grad_norm(params, config.clip)
            opt.step()
            total += value
        (p, r, f1), _ = evaluate(model, enc_dev, gold_dev, dv_cache)
        history.append({"epoch": epoch, "train_loss": total, "lr": opt.lr, "dev_p": p, "dev_r": r, "dev_f1": f1})
        if config.eval_train:
            (_, _, tf1), _ = evaluate(model, enc_train, [s.labels for s in train], tr_cache)
            history[-1]["train_f1"] = tf1
        log.info("tagger epoch %d loss %.4f dev_f1 %.4f", epoch, total, f1)
        if f1 > best_f1:
            best_f1, since = f1, 0
            best = [q.data.copy() for q in params]
            if on_improve is not None:
                on_improve(model, history[-1])
        else:
            since += 1
            if since >= config.patience:
                break
    if best is not None:
        for q, v in zip(params, best):
            q.data[...] = v
    return history


def score_sentences(model, sentences, batch_size=32):
    """Micro (P, R, F1) of the model on labelled sentences, plus predictions."""
    enc = model.encode(sentences)
    cache = FeatureCache(model.embedder, enc) if model.embedder is not None else None
    return evaluate(model, enc, [s.labels for s in sentences], cache, batch_size)
