"""Contextualised token representations from a frozen forward/backward LM pair.

``r_t = ReLU(W_cr [h_t ; h^r_t] + b_cr)`` where ``h_t`` is the forward dense
concat at position ``t`` and ``h^r_t`` the backward one realigned to ``t``.
"""

import numpy as np

from . import autograd as ag
from .autograd import ContractError
from .lm import LmHead, LmModel
from .recurrent import DenseStack, LayerMask, LstmLayer
from .rng import glorot_uniform, stream


def _pad_grid(seqs, reverse=False):
    batch = len(seqs)
    width = max(len(s) for s in seqs)
    grid = np.zeros((batch, width), dtype=np.int64)
    for b, s in enumerate(seqs):
        s = np.asarray(s, dtype=np.int64)
        grid[b, : len(s)] = s[::-1] if reverse else s
    return grid


def flat_rows(lengths, reverse=False):
    """Row ids into a time-major (T*B) stack, listed sentence by sentence.

    With ``reverse`` the sequences were fed back to front, so position ``t``
    of a length-``n`` sequence lives at time step ``n - 1 - t``.
    """
    batch = len(lengths)
    rows = []
    for b, n in enumerate(lengths):
        t = np.arange(n)
        if reverse:
            t = n - 1 - t
        rows.append(t * batch + b)
    return np.concatenate(rows)


def run_lm(lm, id_seqs, z=None):
    """Dense outputs for each token of each sequence, stacked in natural order."""
    lengths = [len(s) for s in id_seqs]
    backward = lm.direction == "backward"
    grid = _pad_grid(id_seqs, reverse=backward)
    mode = "eval" if z is None else "masked"
    outputs, _ = lm.hidden(grid, mode=mode, z=z)
    stacked = ag.concat_rows(outputs)
    return ag.take_rows(stacked, flat_rows(lengths, reverse=backward))


class ContextEmbedder:
    def __init__(self, fwd, bwd, r_dim, vocab=None, seed=0, tie_masks=False, W_cr=None, b_cr=None):
        if fwd.direction != "forward" or bwd.direction != "backward":
            raise ValueError("ContextEmbedder needs a forward and a backward LM")
        self.fwd, self.bwd = fwd, bwd
        self.vocab = vocab
        in_dim = fwd.stack.output_dim + bwd.stack.output_dim
        if W_cr is None:
            W_cr = glorot_uniform(stream(seed, "init/embedder"), in_dim, r_dim)
        if b_cr is None:
            b_cr = np.zeros((1, r_dim))
        self.W_cr = ag.Tensor(W_cr, requires_grad=True)
        self.b_cr = ag.Tensor(b_cr, requires_grad=True)
        if self.W_cr.shape != (in_dim, r_dim):
            raise ag.ShapeError(f"W_cr shape {self.W_cr.shape}, expected {(in_dim, r_dim)}")
        self.tie_masks = tie_masks
        if tie_masks:
            if fwd.num_layers != bwd.num_layers:
                raise ValueError("tied masks need equally deep LMs")
            bwd.stack.mask = fwd.stack.mask
        self.freeze()

    @property
    def r_dim(self):
        return self.W_cr.shape[1]

    def freeze(self):
        for p in self.lm_params():
            p.requires_grad = False

    def params(self):
        """Tagger-side parameters (the LMs stay frozen)."""
        return [self.W_cr, self.b_cr]

    def lm_params(self):
        return self.fwd.params() + self.bwd.params()

    def masks(self):
        if self.tie_masks:
            return [self.fwd.stack.mask]
        return [self.fwd.stack.mask, self.bwd.stack.mask]

    def encode(self, tokens):
        if self.vocab is None:
            raise ValueError("embedder has no vocabulary; pass ids")
        return self.vocab.encode(tokens)

    def features(self, id_seqs):
        """``[h_t ; h^r_t]`` rows for every token, sentence by sentence."""
        if not id_seqs or min(len(s) for s in id_seqs) == 0:
            raise ValueError("cannot embed an empty sentence")
        grad_free = not any(m.z.requires_grad for m in self.masks())
        if grad_free:
            with ag.no_grad():
                hf = run_lm(self.fwd, id_seqs)
                hb = run_lm(self.bwd, id_seqs)
        else:
            hf = run_lm(self.fwd, id_seqs, z=self.fwd.stack.mask)
            hb = run_lm(self.bwd, id_seqs, z=self.bwd.stack.mask)
        return ag.concat([hf, hb])

    def represent(self, feats):
        return ag.relu(ag.add(ag.matmul(feats, self.W_cr), self.b_cr))

    def compress(self):
        """Physically delete every layer whose mask entry is 0."""
        fwd, keep_f = delete_pruned_layers(self.fwd, self.fwd.stack.mask)
        bwd, keep_b = delete_pruned_layers(self.bwd, self.bwd.stack.mask)
        rows = np.concatenate([keep_f, self.fwd.stack.output_dim + keep_b])
        return ContextEmbedder(
            fwd, bwd, self.r_dim, vocab=self.vocab, tie_masks=False,
            W_cr=self.W_cr.data[rows].copy(), b_cr=self.b_cr.data.copy(),
        )


def embed_sequence(embedder, tokens, mask=None):
    """``r_t`` for one sentence as a (T, r_dim) array.

    ``tokens`` are strings (mapped through the LM vocabulary, OOV to UNK) or
    ids. ``mask`` optionally overrides the masks as ``(z_fwd, z_bwd)``.
    """
    ids = embedder.encode(tokens) if tokens and isinstance(tokens[0], str) else list(tokens)
    saved = None
    if mask is not None:
        saved = [m.values.copy() for m in (embedder.fwd.stack.mask, embedder.bwd.stack.mask)]
        for m, v in zip((embedder.fwd.stack.mask, embedder.bwd.stack.mask), mask):
            m.z.data[0] = v
    try:
        with ag.no_grad():
            r = embedder.represent(embedder.features([ids]))
    finally:
        if saved is not None:
            for m, v in zip((embedder.fwd.stack.mask, embedder.bwd.stack.mask), saved):
                m.z.data[0] = v
    return r.data


def dense_keep_rows(embed_dim, hidden_dim, keep_layers):
    """Indices of ``h_t`` entries that survive when only ``keep_layers`` remain."""
    parts = [np.arange(embed_dim)]
    for l in keep_layers:
        parts.append(embed_dim + l * hidden_dim + np.arange(hidden_dim))
    return np.concatenate(parts)


def delete_pruned_layers(lm, mask):
    """Drop layers with ``z = 0`` and the weight rows that read them.

    Returns ``(compressed_lm, keep_rows)`` where ``keep_rows`` indexes the
    surviving entries of the original dense output, for compressing
    whatever consumes it.
    """
    z = mask.values if isinstance(mask, LayerMask) else np.asarray(mask, dtype=np.float64).ravel()
    if len(z) != lm.num_layers:
        raise ag.ShapeError(f"mask of length {len(z)} for {lm.num_layers} layers")
    if not np.all((z == 0.0) | (z == 1.0)):
        raise ContractError(f"delete_pruned_layers needs a binary mask; round first (got {z})")
    keep = [l for l in range(lm.num_layers) if z[l] == 1.0]
    e, h = lm.embed_dim, lm.hidden_dim
    layers = []
    for pos, l in enumerate(keep):
        old = lm.stack.layers[l]
        rows = np.concatenate([dense_keep_rows(e, h, keep[:pos]), e + l * h + np.arange(h)])
        layers.append(LstmLayer(e + pos * h, h, W=old.W.data[rows].copy(), b=old.b.data.copy()))
    keep_rows = dense_keep_rows(e, h, keep)

    out = LmModel.__new__(LmModel)
    out.direction = lm.direction
    out.vocab_size = lm.vocab_size
    out.embedding = ag.Tensor(lm.embedding.data.copy(), requires_grad=lm.embedding.requires_grad)
    out.stack = DenseStack(e, h, len(layers), layers=layers, layer_dropout=lm.stack.layer_dropout)
    head = LmHead.__new__(LmHead)
    head.W_proj = ag.Tensor(lm.head.W_proj.data[keep_rows].copy())
    head.b_proj = ag.Tensor(lm.head.b_proj.data.copy())
    head.W_out = ag.Tensor(lm.head.W_out.data.copy())
    head.b_out = ag.Tensor(lm.head.b_out.data.copy())
    out.head = head
    out.manifest = [lm.manifest[l] for l in keep]
    for p in out.params():
        p.requires_grad = lm.embedding.requires_grad
    return out, keep_rows
