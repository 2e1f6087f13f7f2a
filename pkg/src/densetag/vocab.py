"""Token vocabularies with a frequency cut-off."""

import hashlib
from collections import Counter

UNK, BOS, EOS = "<unk>", "<s>", "</s>"


class Vocab:
    """Dense id mapping. Ids 0, 1, 2 are always UNK, BOS, EOS."""

    def __init__(self, tokens=(), min_count=0, specials=(UNK, BOS, EOS)):
        self.min_count = min_count
        self.itos = list(specials)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            if tok not in self.stoi:
                self.stoi[tok] = len(self.itos)
                self.itos.append(tok)
        self.unk = self.stoi.get(UNK, 0)

    @classmethod
    def from_counts(cls, counts, min_count=3):
        """Keep tokens seen *more* than ``min_count`` times; ties sort lexicographically."""
        kept = sorted((t for t, c in counts.items() if c > min_count), key=lambda t: (-counts[t], t))
        kept = [t for t in kept if t not in (UNK, BOS, EOS)]
        return cls(kept, min_count=min_count)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, tok):
        return tok in self.stoi

    def id(self, tok):
        return self.stoi.get(tok, self.unk)

    def encode(self, tokens):
        return [self.stoi.get(t, self.unk) for t in tokens]

    def decode(self, ids):
        return [self.itos[i] for i in ids]

    def digest(self):
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()[:16]

    def to_list(self):
        return list(self.itos)

    @classmethod
    def from_list(cls, itos, min_count=0):
        v = cls.__new__(cls)
        v.min_count = min_count
        v.itos = list(itos)
        v.stoi = {t: i for i, t in enumerate(v.itos)}
        v.unk = v.stoi.get(UNK, 0)
        return v


def read_lines(path):
    """Whitespace-tokenised sentences, one per line; blank lines skipped."""
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            toks = line.split()
            if toks:
                yield toks


def build_vocab(path, min_count=3):
    counts = Counter()
    for toks in read_lines(path):
        counts.update(toks)
    return Vocab.from_counts(counts, min_count=min_count)


def encode_stream(path, vocab):
    """Concatenate all sentences, each followed by EOS, as one id stream."""
    ids = []
    for toks in read_lines(path):
        ids.extend(vocab.encode(toks))
        ids.append(vocab.stoi[EOS])
    return ids
