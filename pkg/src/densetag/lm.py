"""Word-level forward/backward language models over a dense LSTM stack."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .optim import Adam, clip_grad_norm, zero_grad
from .recurrent import DenseStack, detach_state, layerwise_dropout_masks
from .rng import glorot_uniform, stream

log = logging.getLogger(__name__)


class LmHead:
    """ReLU projection of the dense output followed by a full softmax layer."""

    def __init__(self, input_dim, proj_dim, vocab_size, rng):
        self.W_proj = ag.Tensor(glorot_uniform(rng, input_dim, proj_dim), requires_grad=True)
        self.b_proj = ag.Tensor(np.zeros((1, proj_dim)), requires_grad=True)
        self.W_out = ag.Tensor(glorot_uniform(rng, proj_dim, vocab_size), requires_grad=True)
        self.b_out = ag.Tensor(np.zeros((1, vocab_size)), requires_grad=True)

    def params(self):
        return [self.W_proj, self.b_proj, self.W_out, self.b_out]

    def project(self, h):
        return ag.relu(ag.add(ag.matmul(h, self.W_proj), self.b_proj))

    def logits(self, h):
        return ag.add(ag.matmul(self.project(h), self.W_out), self.b_out)


class LmModel:
    def __init__(
        self,
        vocab_size,
        embed_dim,
        hidden_dim,
        num_layers,
        proj_dim,
        direction="forward",
        seed=0,
        layer_dropout=0.5,
    ):
        if direction not in ("forward", "backward"):
            raise ValueError(f"direction must be forward or backward, got {direction!r}")
        rng = stream(seed, f"init/{direction}")
        self.direction = direction
        self.vocab_size = int(vocab_size)
        self.embedding = ag.Tensor(rng.uniform(-0.1, 0.1, size=(vocab_size, embed_dim)), requires_grad=True)
        self.stack = DenseStack(embed_dim, hidden_dim, num_layers, rng, layer_dropout=layer_dropout)
        self.head = LmHead(self.stack.output_dim, proj_dim, vocab_size, rng)
        self.manifest = list(range(num_layers))

    @property
    def embed_dim(self):
        return self.stack.embed_dim

    @property
    def hidden_dim(self):
        return self.stack.hidden_dim

    @property
    def num_layers(self):
        return self.stack.num_layers

    @property
    def proj_dim(self):
        return self.head.W_proj.shape[1]

    def params(self):
        return [self.embedding] + self.stack.params() + self.head.params()

    def orient(self, ids):
        """Token order this model reads: reversed for a backward LM."""
        ids = np.asarray(ids)
        return ids[..., ::-1] if self.direction == "backward" else ids

    def embed_step(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise ValueError(f"token id outside vocabulary of size {self.vocab_size}; map OOV to UNK first")
        return ag.take_rows(self.embedding, ids)

    def hidden(self, ids, state=None, mode="eval", z=None, drop=None):
        """Dense outputs ``h_t`` for a (B, T) id block, already in reading order."""
        ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
        embeds = [self.embed_step(ids[:, t]) for t in range(ids.shape[1])]
        outputs, state, _ = self.stack.forward(embeds, state=state, mode=mode, z=z, drop=drop)
        return outputs, state


def lm_loss(model, window, state=None, drop=None, z=None):
    """Mean next-token NLL over a (B, T+1) window already in reading order.

    Returns ``(loss, state)`` with the recurrent state after the window.
    """
    window = np.atleast_2d(np.asarray(window, dtype=np.int64))
    if window.shape[1] < 2:
        raise ValueError("lm_loss needs windows of at least two tokens")
    inputs, targets = window[:, :-1], window[:, 1:]
    mode = "train_lm_dropout" if drop is not None else ("masked" if z is not None else "eval")
    outputs, state = model.hidden(inputs, state=state, mode=mode, z=z, drop=drop)
    # time-major rows: row t*B + b
    h = ag.concat_rows(outputs)
    logits = model.head.logits(h)
    if targets.max() >= model.vocab_size:
        raise ValueError(f"target id outside vocabulary of size {model.vocab_size}")
    loss = ag.softmax_cross_entropy(logits, targets.T.reshape(-1))
    return loss, state


def batchify(ids, batch_size):
    ids = np.asarray(ids, dtype=np.int64)
    per = len(ids) // batch_size
    if per < 2:
        raise ValueError(f"stream of {len(ids)} tokens too short for batch size {batch_size}")
    return ids[: per * batch_size].reshape(batch_size, per)


def windows(data, unroll):
    """Yield (B, <=unroll+1) blocks; consecutive blocks overlap by one column."""
    n = data.shape[1]
    for i in range(0, n - 1, unroll):
        yield data[:, i : min(i + unroll + 1, n)]


def perplexity(model, ids, batch_size=16, unroll=20, z=None):
    """``exp`` of mean next-token NLL over a stream in natural order."""
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) < 2:
        raise ValueError("perplexity needs a stream of at least two tokens")
    stream_ids = model.orient(ids)
    batch_size = max(1, min(batch_size, len(ids) // 2))
    data = batchify(stream_ids, batch_size)
    total, count = 0.0, 0
    state = None
    with ag.no_grad():
        for win in windows(data, unroll):
            loss, state = lm_loss(model, win, state=state, z=z)
            n = win.shape[0] * (win.shape[1] - 1)
            total += loss.item() * n
            count += n
    return math.exp(total / count)


def average_perplexity(fwd, bwd, ids, **kw):
    """Mean of the forward and backward perplexities (the usual reporting convention)."""
    return 0.5 * (perplexity(fwd, ids, **kw) + perplexity(bwd, ids, **kw))


def unigram_perplexity(train_ids, eval_ids, vocab_size):
    """Perplexity of the maximum-likelihood unigram model on ``eval_ids[1:]``.

    Add-one smoothing is applied only when some evaluated token was never seen.
    """
    counts = np.bincount(np.asarray(train_ids, dtype=np.int64), minlength=vocab_size).astype(np.float64)
    targets = np.asarray(eval_ids, dtype=np.int64)[1:]
    if np.any(counts[targets] == 0):
        counts += 1.0
    return math.exp(-np.log(counts[targets] / counts.sum()).mean())


@dataclass
class LmTrainConfig:
    epochs: int = 10
    batch_size: int = 128
    unroll: int = 20
    lr: float = 0.001
    clip: float = 5.0
    layer_dropout: float = 0.5
    seed: int = 0
    eval_batch_size: int = 16


def snapshot(params):
    return [p.data.copy() for p in params]


def restore(params, values):
    for p, v in zip(params, values):
        p.data[...] = v


def train_lm(model, train_ids, dev_ids, config, on_improve=None, max_windows=None):
    """Adam training with truncated BPTT and per-batch layer-wise dropout.

    Recurrent state carries across windows and resets each epoch. Returns
    a history of per-epoch dicts; the best-dev parameters are restored into
    ``model`` at the end and passed to ``on_improve`` whenever dev improves.
    """
    params = model.params()
    opt = Adam(params, lr=config.lr)
    drop_rng = stream(config.seed, f"layer_dropout/{model.direction}")
    data = batchify(model.orient(train_ids), config.batch_size)
    history = []
    best, best_ppl = None, math.inf
    for epoch in range(config.epochs):
        state = None
        total, count, max_clipped = 0.0, 0, 0.0
        for w, win in enumerate(windows(data, config.unroll)):
            if max_windows is not None and w >= max_windows:
                break
            drop = layerwise_dropout_masks(model.num_layers, config.layer_dropout, drop_rng)
            zero_grad(params)
            loss, state = lm_loss(model, win, state=state, drop=drop)
            value = loss.item()
            if not math.isfinite(value):
                raise FloatingPointError(f"LM loss diverged (epoch {epoch}, window {w}, loss {value})")
            ag.backward(loss)
            clip_grad_norm(params, config.clip)
            max_clipped = max(max_clipped, _norm(params))
            opt.step()
            state = detach_state(state)
            n = win.shape[0] * (win.shape[1] - 1)
            total += value * n
            count += n
        dev_ppl = perplexity(model, dev_ids, batch_size=config.eval_batch_size, unroll=config.unroll)
        row = {"epoch": epoch, "train_nll": total / max(count, 1), "dev_ppl": dev_ppl, "max_clipped_norm": max_clipped}
        history.append(row)
        log.info("lm %s epoch %d train_nll %.4f dev_ppl %.3f", model.direction, epoch, row["train_nll"], dev_ppl)
        if dev_ppl < best_ppl:
            best_ppl, best = dev_ppl, snapshot(params)
            if on_improve is not None:
                on_improve(model, row)
    if best is not None:
        restore(params, best)
    return history


def _norm(params):
    return math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None))
