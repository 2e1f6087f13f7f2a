"""Run configuration as a flat ``key = value`` file, and run manifests."""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields

DATA_ENV = "DENSETAG_DATA"


@dataclass
class RunConfig:
    seed: int = 0
    # language models
    min_count: int = 3
    lm_embed_dim: int = 300
    lm_hidden_dim: int = 300
    lm_layers: int = 10
    lm_proj_dim: int = 1600
    lm_batch: int = 128
    lm_eval_batch: int = 16
    lm_unroll: int = 20
    lm_lr: float = 0.001
    lm_clip: float = 5.0
    layer_dropout: float = 0.5
    lm_epochs: int = 10
    lm_max_windows: int = 0
    # tagger
    char_dim: int = 30
    char_hidden: int = 150
    word_dim: int = 100
    word_hidden: int = 150
    tagger_batch: int = 10
    momentum: float = 0.9
    lr: float = 0.015
    lr_decay: float = 0.05
    dropout: float = 0.5
    clip: float = 5.0
    tagger_epochs: int = 100
    patience: int = 10
    bioes: bool = True
    # pruning
    regularizer: str = "R3"
    lambda0: float = 0.05
    lambda1: int = 2
    prune_epochs: int = 30
    tie_masks: bool = False
    chars_per_word: float = 4.39


class ConfigError(ValueError):
    pass


def _coerce(kind, raw, key):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from None


_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def update(config, pairs):
    """Apply ``{key: raw string}`` overrides, rejecting unknown keys."""
    for key, raw in pairs.items():
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(config, key, _coerce(_TYPES[key], str(raw), key))
    return config


def parse_pairs(lines, source="<config>"):
    pairs = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def load_config(path=None, overrides=None):
    config = RunConfig()
    if path:
        with open(path, encoding="utf-8") as fh:
            update(config, parse_pairs(fh, path))
    if overrides:
        update(config, overrides)
    return config


def dump_config(config, path=None):
    text = "".join(f"{k} = {v}\n" for k, v in asdict(config).items())
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def resolve(path):
    """Paths that do not exist as given are looked up under ``$DENSETAG_DATA``."""
    if path is None or os.path.exists(path) or os.path.isabs(path):
        return path
    root = os.environ.get(DATA_ENV)
    if root:
        candidate = os.path.join(root, path)
        if os.path.exists(candidate):
            return candidate
    return path


def file_hash(path):
    """Git-style object hash: sha256 over ``b"blob <size>\\0"`` plus the content."""
    h = hashlib.sha256(b"blob %d\0" % os.path.getsize(path))
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command, args, config, inputs, metrics, outputs=None):
    manifest = {
        "command": command,
        "args": args,
        "config": asdict(config),
        "inputs": {k: {"path": os.path.abspath(p), "sha256": file_hash(p)} for k, p in inputs.items() if p},
        "metrics": metrics,
        "outputs": outputs or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return manifest


def read_manifest(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
