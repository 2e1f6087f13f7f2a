"""CoNLL column files: word in the first column, gold label in the last."""

from .metrics import to_bioes
from .tagger import TaggedSentence


class ConllError(ValueError):
    pass


def read_conll(path, bioes=True):
    """Sentences from a column file; ``-DOCSTART-`` lines are skipped."""
    sentences = []
    words, labels = [], []

    def flush():
        if words:
            labs = to_bioes(labels) if bioes else list(labels)
            sentences.append(TaggedSentence(list(words), labs))
            words.clear()
            labels.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            cols = line.split()
            if not cols:
                flush()
                continue
            if cols[0] == "-DOCSTART-":
                continue
            if len(cols) < 2:
                raise ConllError(f"{path}:{lineno}: expected at least 2 columns, got {len(cols)}")
            words.append(cols[0])
            labels.append(cols[-1])
    flush()
    return sentences


def write_conll(path, sentences, predictions=None):
    """Write ``word label`` lines; with ``predictions`` a third column is added."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, s in enumerate(sentences):
            pred = predictions[i] if predictions is not None else None
            for j, (w, y) in enumerate(zip(s.words, s.labels)):
                cols = [w, y] if pred is None else [w, y, pred[j]]
                fh.write(" ".join(cols) + "\n")
            fh.write("\n")
