"""BIOES conversion, span extraction and micro-averaged F1."""


def _split(tag):
    if tag == "O" or "-" not in tag:
        return tag, None
    prefix, kind = tag.split("-", 1)
    return prefix, kind


def to_bioes(labels):
    """Convert BIO or IOB1 tags to BIOES.

    An ``I-X`` that does not continue an ``X`` span is treated as ``B-X``.
    Tags already in BIOES pass through with their spans re-derived.
    """
    n = len(labels)
    spans = []  # (start, end_inclusive, type)
    i = 0
    while i < n:
        prefix, kind = _split(labels[i])
        if kind is None:
            i += 1
            continue
        if prefix == "S":
            spans.append((i, i, kind))
            i += 1
            continue
        j = i
        while j + 1 < n:
            p2, k2 = _split(labels[j + 1])
            if k2 == kind and p2 in ("I", "E") and _split(labels[j])[0] != "E":
                j += 1
            else:
                break
        spans.append((i, j, kind))
        i = j + 1
    out = ["O"] * n
    for s, e, kind in spans:
        if s == e:
            out[s] = f"S-{kind}"
        else:
            out[s] = f"B-{kind}"
            for k in range(s + 1, e):
                out[k] = f"I-{kind}"
            out[e] = f"E-{kind}"
    return out


def bioes_spans(labels):
    """Well-formed spans ``(start, end, type)`` of a BIOES sequence.

    Fragments that are not ``S-X`` or ``B-X (I-X)* E-X`` are ignored, so an
    ill-formed prediction earns no credit for the broken span.
    """
    spans = set()
    start, kind = None, None
    for i, tag in enumerate(labels):
        prefix, k = _split(tag)
        if prefix == "S":
            spans.add((i, i, k))
            start = None
        elif prefix == "B":
            start, kind = i, k
        elif prefix == "I":
            if start is None or k != kind:
                start = None
        elif prefix == "E":
            if start is not None and k == kind:
                spans.add((start, i, k))
            start = None
        else:
            start = None
    return spans


def is_valid_bioes(labels):
    prev = "O"
    for tag in labels:
        p, k = _split(tag)
        pp, pk = _split(prev)
        inside = pp in ("B", "I")
        if p in ("I", "E"):
            if not inside or pk != k:
                return False
        elif inside:
            return False
        prev = tag
    return _split(prev)[0] not in ("B", "I")


def micro_f1(gold, pred):
    """Micro-averaged (precision, recall, F1) over exact span matches."""
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    correct = n_gold = n_pred = 0
    for g, p in zip(gold, pred):
        if len(g) != len(p):
            raise ValueError(f"sentence length mismatch: {len(g)} vs {len(p)}")
        gs, ps = bioes_spans(g), bioes_spans(p)
        correct += len(gs & ps)
        n_gold += len(gs)
        n_pred += len(ps)
    precision = correct / n_pred if n_pred else 0.0
    recall = correct / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1
