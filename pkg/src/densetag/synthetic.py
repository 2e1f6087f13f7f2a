"""Constructed corpora and a hand-wired language model for desk experiments.

The grammar produces sentences like ``she zorured jordan lee and they
kofased paris .`` where the verbs are made-up trigger words. Entity names are shared between the two types, so the
type of a name is decided by the verb before it: class-A triggers introduce
PER entities, class-B triggers LOC entities and a few common neutral verbs
ORG entities. Dev and test
sentences use triggers the tagger never sees in training, so only a
representation that knows the trigger class from unlabeled text can type
them.

The unlabeled LM text adds a class-specific continuation right after each
entity. Predicting that continuation forces an LM to carry the trigger
class up to the entity position.
"""

import numpy as np

from . import autograd as ag
from .lm import LmModel
from .rng import stream
from .tagger import TaggedSentence
from .vocab import EOS, Vocab


def _pseudo_verbs(n, seed=7):
    """Distinct made-up verbs; class membership is not visible in the spelling."""
    rng = np.random.default_rng(seed)
    onsets, vowels, codas = "bdfgklmnprstvz", "aeiou", ["", "n", "r", "l", "s"]
    out, seen = [], set()
    while len(out) < n:
        w = "".join(onsets[rng.integers(14)] + vowels[rng.integers(5)] for _ in range(2))
        w += codas[rng.integers(5)] + "ed"
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


_VERBS = _pseudo_verbs(120)
TRIGGERS_A, TRIGGERS_B = _VERBS[:60], _VERBS[60:]
HELD_OUT = 15  # triggers per class that never occur in labelled training data
NEUTRAL = ["saw", "named", "mentioned", "chose"]  # introduce ORG entities; always seen
NAMES = ["jordan", "paris", "austin", "victoria", "florence", "georgia", "sydney", "chelsea",
         "dallas", "lincoln", "madison", "savannah", "phoenix", "orlando", "chester", "regina"]
SURNAMES = ["lee", "hill", "stone", "park", "vale", "ford"]
SUBJECTS = [["she"], ["he"], ["they"], ["the", "team"], ["our", "guide"], ["my", "aunt"], ["we"]]
OPENERS = [["yesterday"], ["then"], ["later"], ["so"], ["at", "last"], ["again"], ["once"]]
ADVERBS = ["quietly", "finally", "soon", "really", "twice", "briefly"]
CLOSERS = [["today"], ["again"], ["at", "noon"], ["in", "june"], ["last", "week"], ["as", "planned"]]
CONT_A = [["smiled"], ["nodded"], ["laughed", "loudly"], ["waved", "back"]]
CONT_B = [["was", "crowded"], ["looked", "old"], ["was", "sunny"], ["felt", "cold"]]
CONT_N = [["grew"], ["hired", "staff"], ["went", "public"]]


def _pick(rng, items):
    return items[int(rng.integers(len(items)))]


def _clause(rng, triggers_a, triggers_b, continuation):
    kind = ("PER", "LOC", "ORG")[int(rng.choice(3, p=[0.4, 0.4, 0.2]))]
    verbs = {"PER": triggers_a, "LOC": triggers_b, "ORG": NEUTRAL}[kind]
    words = list(_pick(rng, SUBJECTS))
    words.append(_pick(rng, verbs))
    if rng.random() < 0.3:
        words.append(_pick(rng, ADVERBS))
    labels = ["O"] * len(words)
    ent = [_pick(rng, NAMES)]
    if rng.random() < 0.35:
        ent.append(_pick(rng, SURNAMES))
    words += ent
    labels += [f"S-{kind}"] if len(ent) == 1 else [f"B-{kind}", f"E-{kind}"]
    if continuation:
        cont = _pick(rng, {"PER": CONT_A, "LOC": CONT_B, "ORG": CONT_N}[kind])
        words += cont
        labels += ["O"] * len(cont)
    return words, labels


def sentence(rng, triggers_a, triggers_b, continuation=False):
    words, labels = [], []
    if rng.random() < 0.4:
        w = _pick(rng, OPENERS)
        words += w
        labels += ["O"] * len(w)
    for k in range(1 + int(rng.random() < 0.4)):
        if k:
            words.append("and")
            labels.append("O")
        w, y = _clause(rng, triggers_a, triggers_b, continuation)
        words += w
        labels += y
    if rng.random() < 0.5:
        w = _pick(rng, CLOSERS)
        words += w
        labels += ["O"] * len(w)
    words.append(".")
    labels.append("O")
    return TaggedSentence(words, labels)


def trigger_split(held_out=HELD_OUT):
    """(train triggers, held-out triggers) for each class."""
    k = len(TRIGGERS_A) - held_out
    return (TRIGGERS_A[:k], TRIGGERS_B[:k]), (TRIGGERS_A[k:], TRIGGERS_B[k:])


def tagging_corpus(n_train=500, n_dev=200, n_test=200, seed=0):
    """Labelled splits; dev and test use only held-out triggers."""
    rng = stream(seed, "synthetic/tagging")
    seen, held = trigger_split()
    train = [sentence(rng, *seen) for _ in range(n_train)]
    dev = [sentence(rng, *held) for _ in range(n_dev)]
    test = [sentence(rng, *held) for _ in range(n_test)]
    return train, dev, test


def lm_corpus(n_sentences=4000, seed=0):
    """Unlabeled token lines over all triggers, with class-specific continuations."""
    rng = stream(seed, "synthetic/lm")
    return [sentence(rng, TRIGGERS_A, TRIGGERS_B, continuation=True).words for _ in range(n_sentences)]


def all_words():
    words = set(TRIGGERS_A + TRIGGERS_B + NEUTRAL + NAMES + SURNAMES + ADVERBS + ["and", "."])
    for group in (SUBJECTS, OPENERS, CLOSERS, CONT_A, CONT_B, CONT_N):
        for phrase in group:
            words.update(phrase)
    return sorted(words)


def lm_vocab():
    return Vocab(all_words())


def encode_lines(lines, vocab):
    ids = []
    for toks in lines:
        ids.extend(vocab.encode(toks))
        ids.append(vocab.stoi[EOS])
    return ids


# ----------------------------------------------------------------------------
# Hand-wired LM pair: forward layers SIGNAL_LAYERS latch the trigger class.

SIGNAL_LAYERS = (4, 5)  # 0-based; the fifth and sixth layers
N_FLAGS = 3  # embedding dims flagging class-A, class-B and neutral verbs


def _static_layer(layer, rng, embed_dim, hidden):
    """A layer whose output depends on the current token only."""
    W = np.zeros_like(layer.W.data)
    W[N_FLAGS:embed_dim] = rng.normal(scale=0.8, size=(embed_dim - N_FLAGS, 4 * hidden))
    b = rng.normal(scale=0.3, size=(1, 4 * hidden))
    b[0, hidden : 2 * hidden] = -30.0  # forget gate shut: no memory across steps
    layer.W.data[...] = W
    layer.b.data[...] = b


def _latch_layer(layer, flag, hidden):
    """Every unit stores 1 after a verb of class ``flag`` and 0 after any other flagged verb."""
    H = hidden
    W = np.zeros_like(layer.W.data)
    b = np.zeros((1, 4 * H))
    flags = list(range(N_FLAGS))
    W[flags, 0:H] = 20.0
    b[0, 0:H] = -10.0  # input gate opens on any trigger
    W[flags, H : 2 * H] = -20.0
    b[0, H : 2 * H] = 10.0  # forget gate closes on any trigger
    W[flag, 2 * H : 3 * H] = 20.0  # candidate is 1 for this class, 0 otherwise
    b[0, 3 * H :] = 10.0  # output gate always open
    layer.W.data[...] = W
    layer.b.data[...] = b


def handwired_lm_pair(vocab, embed_dim=8, hidden=8, num_layers=6, seed=0):
    """Forward and backward LMs where only the forward signal layers see the trigger class."""
    if embed_dim <= N_FLAGS:
        raise ValueError("embed_dim must leave room beyond the class flags")
    rng = stream(seed, "synthetic/handwired")
    emb = rng.normal(scale=1.0, size=(len(vocab), embed_dim))
    emb[:, :N_FLAGS] = 0.0
    for t in TRIGGERS_A:
        emb[vocab.stoi[t], 0] = 1.0
    for t in TRIGGERS_B:
        emb[vocab.stoi[t], 1] = 1.0
    for t in NEUTRAL:
        emb[vocab.stoi[t], 2] = 1.0
    pair = []
    for direction in ("forward", "backward"):
        lm = LmModel(len(vocab), embed_dim, hidden, num_layers, proj_dim=8, direction=direction, seed=seed)
        lm.embedding.data[...] = emb
        for l, layer in enumerate(lm.stack.layers):
            if direction == "forward" and l in SIGNAL_LAYERS:
                _latch_layer(layer, SIGNAL_LAYERS.index(l), hidden)
            else:
                _static_layer(layer, rng, embed_dim, hidden)
        pair.append(lm)
    return pair


def symmetric_lm_pair(vocab, embed_dim=6, hidden=6, num_layers=4, seed=0):
    """LMs whose layers are exchangeable: equal-distribution weights, no cross-layer input.

    Each layer reads only the token embedding and its own recurrence, so no
    layer index is special beyond what the random draw gives it.
    """
    rng = stream(seed, "synthetic/symmetric")
    pair = []
    for direction in ("forward", "backward"):
        lm = LmModel(len(vocab), embed_dim, hidden, num_layers, proj_dim=4, direction=direction, seed=seed)
        lm.embedding.data[...] = rng.normal(scale=1.0, size=lm.embedding.shape)
        for layer in lm.stack.layers:
            W = np.zeros_like(layer.W.data)
            W[:embed_dim] = rng.normal(scale=0.5, size=(embed_dim, 4 * hidden))
            W[-hidden:] = rng.normal(scale=0.5, size=(hidden, 4 * hidden))
            layer.W.data[...] = W
            layer.b.data[...] = 0.0
        pair.append(lm)
    return pair


def latch_readout(lm, tokens, vocab):
    """Mean activation of each forward layer per position; for inspection."""
    with ag.no_grad():
        outs, _ = lm.hidden(np.array([vocab.encode(tokens)]))
    e, h = lm.embed_dim, lm.hidden_dim
    return np.array([[o.data[0, e + l * h : e + (l + 1) * h].mean() for l in range(lm.num_layers)] for o in outs])
