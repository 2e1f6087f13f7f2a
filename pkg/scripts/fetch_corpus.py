"""Build the desk language-model corpus from public-domain Gutenberg plays.

The plain texts ship inside the ``shakespeare`` source distribution on PyPI.
The script downloads it with pip, strips speaker tags, stage directions and
act/scene headings, tokenises each remaining line, lowercases it and writes
``train.txt`` / ``dev.txt`` with one tokenised line per line. The last 5% of
every play goes to dev.

    python scripts/fetch_corpus.py --out data/shakespeare
"""

import argparse
import glob
import os
import re
import subprocess
import sys
import tarfile
import tempfile

PLAYS = [
    "hamlet", "macbeth", "lear", "othello", "julius_caesar", "romeo_and_juliet",
    "tempest", "twelfth_night", "merchant_of_venice",
]
TOKEN = re.compile(r"[A-Za-z]+(?:'[A-Za-z]+)*|\d+|[^\sA-Za-z\d]")
SPEAKER = re.compile(r"^[A-Z][A-Za-z]*(?: [A-Z][A-Za-z]*)*\.$")
HEADING = re.compile(r"^(ACT|SCENE|Scene|PERSONS|DRAMATIS)\b")


def clean_lines(text):
    text = re.sub(r"\[[^\]]*\]", " ", text)  # stage directions, possibly multi-line
    for line in text.splitlines():
        line = line.strip()
        if not line or SPEAKER.match(line) or HEADING.match(line):
            continue
        toks = TOKEN.findall(line.replace("--", " -- ").lower())
        if len(toks) >= 2:
            yield " ".join(toks)


def fetch_sdist(workdir):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--no-binary", ":all:",
         "shakespeare==0.6", "-d", workdir],
        check=True,
    )
    (archive,) = glob.glob(os.path.join(workdir, "shakespeare-0.6.tar.gz"))
    with tarfile.open(archive) as tar:
        tar.extractall(workdir, filter="data")
    return os.path.join(workdir, "shakespeare-0.6", "shksprdata", "texts")


def build(texts_dir, out_dir, dev_frac=0.05):
    train, dev = [], []
    for play in PLAYS:
        with open(os.path.join(texts_dir, f"{play}_gut.txt"), encoding="utf-8", errors="replace") as fh:
            lines = list(clean_lines(fh.read()))
        cut = int(len(lines) * (1 - dev_frac))
        train += lines[:cut]
        dev += lines[cut:]
    os.makedirs(out_dir, exist_ok=True)
    for name, lines in (("train.txt", train), ("dev.txt", dev)):
        with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return train, dev


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/shakespeare")
    ap.add_argument("--texts", help="already extracted texts directory (skips the download)")
    args = ap.parse_args(argv)
    with tempfile.TemporaryDirectory() as tmp:
        texts = args.texts or fetch_sdist(tmp)
        train, dev = build(texts, args.out)
    size = sum(len(l) + 1 for l in train + dev)
    print(f"{len(train)} train lines, {len(dev)} dev lines, {size / 1e6:.2f} MB -> {args.out}")


if __name__ == "__main__":
    main()
