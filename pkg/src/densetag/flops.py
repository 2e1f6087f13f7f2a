"""Multiply-add counts per word for the tagger and its language-model features.

Counting convention:

* an LSTM layer with input width ``d`` and hidden size ``h`` costs
  ``4 h (d + h + 1)`` MACs per step (both gate matmuls plus the bias);
* a linear map ``d -> k`` costs ``k (d + 1)``;
* embedding lookups cost nothing;
* the character path runs once per character, so its cost is multiplied by
  the average characters per word (4.39 by default);
* the CRF transition terms and elementwise activations are not counted.
"""

from dataclasses import dataclass, field

CHARS_PER_WORD = 4.39


def lstm_macs(d_in, hidden):
    return 4 * hidden * (d_in + hidden + 1)


def linear_macs(d_in, d_out):
    return d_out * (d_in + 1)


@dataclass
class ModelDims:
    """Everything the estimate needs. ``r_dim=None`` means no LM features."""

    lm_embed: int = 0
    lm_hidden: int = 0
    fwd_layers: int = 0
    bwd_layers: int = 0
    r_dim: int = None
    char_dim: int = 30
    char_hidden: int = 150
    word_dim: int = 100
    word_hidden: int = 150
    num_labels: int = 17
    extra: dict = field(default_factory=dict)


def lm_path(embed, hidden, layers):
    """Per-layer MACs of a dense stack; layer ``l`` reads ``embed + l * hidden``."""
    return [lstm_macs(embed + l * hidden, hidden) for l in range(layers)]


def estimate_flops(dims, chars_per_word=CHARS_PER_WORD):
    """MACs per word, with a row per component.

    Returns a dict with ``total``, the ``lm``, ``repr`` and ``tagger``
    subtotals and ``rows`` as ``(component, name, macs)`` tuples.
    """
    rows = []
    for name, n in (("forward", dims.fwd_layers), ("backward", dims.bwd_layers)):
        for l, macs in enumerate(lm_path(dims.lm_embed, dims.lm_hidden, n)):
            rows.append(("lm", f"{name} layer {l + 1}", macs))
    with_lm = dims.r_dim is not None
    if with_lm:
        h_dim = 2 * dims.lm_embed + (dims.fwd_layers + dims.bwd_layers) * dims.lm_hidden
        rows.append(("repr", "W_cr", linear_macs(h_dim, dims.r_dim)))
    char_step = 2 * lstm_macs(dims.char_dim, dims.char_hidden)
    rows.append(("tagger", "char bilstm", char_step * chars_per_word))
    rows.append(("tagger", "char projection", linear_macs(2 * dims.char_hidden, dims.word_dim)))
    v_dim = 2 * dims.word_dim + (dims.r_dim if with_lm else 0)
    rows.append(("tagger", "word bilstm", 2 * lstm_macs(v_dim, dims.word_hidden)))
    rows.append(("tagger", "emissions", linear_macs(2 * dims.word_hidden, dims.num_labels)))
    out = {"lm": 0.0, "repr": 0.0, "tagger": 0.0}
    for part, _, macs in rows:
        out[part] += macs
    out["total"] = out["lm"] + out["repr"] + out["tagger"]
    out["rows"] = rows
    return out


def tagger_dims(model):
    """ModelDims of a built TaggerModel (with or without an embedder)."""
    d = model.dims
    dims = ModelDims(
        char_dim=d.char_dim,
        char_hidden=d.char_hidden,
        word_dim=d.word_dim,
        word_hidden=d.word_hidden,
        num_labels=len(model.labels),
    )
    emb = model.embedder
    if emb is not None:
        dims.lm_embed = emb.fwd.embed_dim
        dims.lm_hidden = emb.fwd.hidden_dim
        dims.fwd_layers = emb.fwd.num_layers
        dims.bwd_layers = emb.bwd.num_layers
        dims.r_dim = emb.r_dim
    return dims


def format_breakdown(est):
    lines = [f"{comp:7s} {name:20s} {macs:>16,.0f}" for comp, name, macs in est["rows"]]
    lines.append(f"{'total':28s} {est['total']:>16,.0f} MACs/word")
    return "\n".join(lines)
