"""Task-guided layer selection over the frozen language models.

The layer masks ``z`` are relaxed to ``[0, 1]`` and trained jointly with the
tagger on ``NLL + lambda0 * R(z)`` by projected gradient descent with
momentum. Afterwards ``z`` is rounded at 0.5 and every layer with ``z = 0``
is physically deleted.

Regularisers, with ``|z|_0`` counting strictly positive entries::

    R0 = |z|_0                                       (reporting only)
    R1 = |z|_1
    R2 = [|z|_0 > lambda1] * |z|_1
    R3 = [|z|_0 > lambda1] * |z|_1 + sum_i z_i (1 - z_i)
"""

import copy
import csv
import hashlib
import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import autograd as ag
from .autograd import ContractError
from .flops import estimate_flops, tagger_dims
from .optim import SGDMomentum, clip_grad_norm, inverse_time_lr, zero_grad
from .rng import stream
from .tagger import TaggerModel, evaluate

log = logging.getLogger(__name__)

KINDS = ("R0", "R1", "R2", "R3")


@dataclass
class RegularizerSpec:
    kind: str = "R3"
    lambda0: float = 0.05
    lambda1: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"regulariser kind must be one of {KINDS}, got {self.kind!r}")
        if self.lambda0 < 0:
            raise ValueError(f"lambda0 must be non-negative, got {self.lambda0}")
        if int(self.lambda1) != self.lambda1 or self.lambda1 < 0:
            raise ValueError(f"lambda1 must be a non-negative integer, got {self.lambda1}")


def _check_box(z):
    z = np.asarray(z, dtype=np.float64).ravel()
    if np.any(z < 0) or np.any(z > 1) or not np.all(np.isfinite(z)):
        raise ContractError(f"mask values must lie in [0, 1], got {z}")
    return z


def l0(z):
    return int(np.count_nonzero(np.asarray(z) > 0))


def gate(spec, z):
    """The margin indicator: on while more than ``lambda1`` layers are active."""
    return 1.0 if l0(z) > spec.lambda1 else 0.0


def penalty(spec, z):
    z = _check_box(z)
    if spec.kind == "R0":
        return float(l0(z))
    if spec.kind == "R1":
        return float(z.sum())
    value = gate(spec, z) * float(z.sum())
    if spec.kind == "R3":
        value += float(np.sum(z * (1.0 - z)))
    return value


def penalty_grad(spec, z):
    """Subgradient of the penalty; the indicator is frozen at the current ``z``."""
    z = _check_box(z)
    if spec.kind == "R0":
        raise ValueError("R0 is not differentiable; use it for reporting only")
    active = (z > 0).astype(np.float64)
    if spec.kind == "R1":
        return active
    grad = gate(spec, z) * active
    if spec.kind == "R3":
        grad = grad + (1.0 - 2.0 * z)
    return grad


def project(v):
    """Euclidean projection onto the unit box."""
    return np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)


def project_inplace(arr):
    np.clip(arr, 0.0, 1.0, out=arr)


def lm_checksum(embedder):
    h = hashlib.sha256()
    for p in embedder.lm_params():
        h.update(np.ascontiguousarray(p.data).tobytes())
    return h.hexdigest()


@dataclass
class PruneConfig:
    epochs: int = 30
    batch_size: int = 10
    lr: float = 0.015
    lr_decay: float = 0.05
    momentum: float = 0.9
    clip: float = 5.0
    dropout: float = 0.5
    seed: int = 0
    start_epoch: int = 0
    binary_tol: float = 1e-2
    round_threshold: float = 0.5
    chars_per_word: float = 4.39


@dataclass
class PruneReport:
    z_relaxed: list
    z_rounded: list
    manifests: list
    trajectory: list = field(default_factory=list)
    epochs: list = field(default_factory=list)
    flops_before: float = 0.0
    flops_after: float = 0.0
    dev_f1_before: float = 0.0
    dev_f1_masked: float = 0.0
    dev_f1_after: float = 0.0
    binarized: bool = True
    lm_checksum_before: str = ""
    lm_checksum_after: str = ""

    @property
    def flops_reduction(self):
        return 1.0 - self.flops_after / self.flops_before if self.flops_before else 0.0

    def summary(self):
        lines = [
            f"z (relaxed):  {np.array2string(np.concatenate(self.z_relaxed), precision=4)}",
            f"z (rounded):  {np.concatenate(self.z_rounded).astype(int).tolist()}",
            f"kept layers:  forward {self.manifests[0]}  backward {self.manifests[1]}",
            f"FLOPs/word:   {self.flops_before:,.0f} -> {self.flops_after:,.0f} "
            f"({100 * self.flops_reduction:.1f}% removed)",
            f"dev F1:       {self.dev_f1_before:.4f} -> {self.dev_f1_after:.4f}",
        ]
        if not self.binarized:
            lines.append("WARNING: z did not reach near-binary values; hard rounding applied")
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            n = len(np.concatenate(self.z_relaxed))
            w.writerow(["step", "penalty", "l0"] + [f"z{i}" for i in range(n)])
            for row in self.trajectory:
                w.writerow([row["step"], f"{row['penalty']:.10g}", row["l0"]] + [f"{v:.10g}" for v in row["z"]])
            w.writerow([])
            w.writerow(["flops_before", f"{self.flops_before:.0f}"])
            w.writerow(["flops_after", f"{self.flops_after:.0f}"])
            w.writerow(["dev_f1_before", f"{self.dev_f1_before:.10g}"])
            w.writerow(["dev_f1_after", f"{self.dev_f1_after:.10g}"])
            w.writerow(["binarized", int(self.binarized)])


def _z_all(masks):
    return np.concatenate([m.values for m in masks])


def model_flops(model, chars_per_word=4.39):
    return estimate_flops(tagger_dims(model), chars_per_word=chars_per_word)["total"]


def prune(model, train, dev, spec, config=None):
    """Select layers for this task and return ``(pruned_model, report)``.

    ``model`` is the best-dev tagger checkpoint; it is copied, never mutated.
    Tagger parameters (including the representation map) keep training with
    dropout; the LM weights stay frozen and ``z`` is the only LM-side variable.
    """
    config = config or PruneConfig()
    if model.embedder is None:
        raise ValueError("pruning needs a tagger with language-model features")
    model = copy.deepcopy(model)
    emb = model.embedder
    masks = emb.masks()
    if not all(np.all(m.values == 1.0) for m in masks):
        raise ContractError("pruning starts from z = 1 for every layer")
    emb.freeze()
    checksum = lm_checksum(emb)
    enc_train, enc_dev = model.encode(train), model.encode(dev)
    gold_dev = [s.labels for s in dev]
    (_, _, f1_before), _ = evaluate(model, enc_dev, gold_dev)
    flops_before = model_flops(model, config.chars_per_word)

    for m in masks:
        m.trainable(True)
    zs = [m.z for m in masks]
    tagger_params = model.params()
    opt = SGDMomentum(tagger_params, lr=config.lr, momentum=config.momentum)
    zopt = SGDMomentum(zs, lr=config.lr, momentum=config.momentum, project=project_inplace)
    batch_rng = stream(config.seed, "prune/batching")
    drop_rng = stream(config.seed, "prune/dropout")
    sizes = [len(m) for m in masks]
    trajectory, epochs = [], []
    step = 0
    for epoch in range(config.epochs):
        lr = inverse_time_lr(config.lr, config.lr_decay, config.start_epoch + epoch)
        opt.lr = zopt.lr = lr
        order = batch_rng.permutation(len(enc_train))
        for i in range(0, len(order), config.batch_size):
            idx = order[i : i + config.batch_size]
            zero_grad(tagger_params + zs)
            loss = model.loss([enc_train[j] for j in idx], dropout=config.dropout, rng=drop_rng)
            if not math.isfinite(loss.item()):
                raise FloatingPointError(f"pruning loss diverged at epoch {epoch}")
            ag.backward(loss)
            clip_grad_norm(tagger_params + zs, config.clip)
            z = _z_all(masks)
            if spec.lambda0 > 0:
                g = spec.lambda0 * penalty_grad(spec, z)
                for zt, part in zip(zs, np.split(g, np.cumsum(sizes)[:-1])):
                    zt.grad += part[None, :]
            opt.step()
            zopt.step()
            step += 1
            z = _z_all(masks)
            trajectory.append({"step": step, "penalty": penalty(spec, z), "l0": l0(z), "z": z.copy()})
        with ag.no_grad():
            (_, _, f1), _ = evaluate(model, enc_dev, gold_dev)
        z = _z_all(masks)
        epochs.append({"epoch": epoch, "dev_f1": f1, "l0": l0(z), "z": z.copy()})
        log.info("prune epoch %d l0 %d dev_f1 %.4f z %s", epoch, l0(z), f1, np.round(z, 3))
        if l0(z) <= spec.lambda1 and np.max(np.minimum(z, 1.0 - z)) <= config.binary_tol:
            break

    z_relaxed = [m.values.copy() for m in masks]
    for m in masks:
        m.trainable(False)
    (_, _, f1_masked), _ = evaluate(model, enc_dev, gold_dev)
    worst = float(np.max(np.minimum(_z_all(masks), 1.0 - _z_all(masks))))
    binarized = worst <= 0.1
    if not binarized:
        warnings.warn(f"layer masks not near-binary after pruning (max distance {worst:.3f}); rounding anyway")
    for m in masks:
        m.z.data[...] = (m.values >= config.round_threshold).astype(np.float64)
    z_rounded = [m.values.copy() for m in emb.masks()]
    all_rounded = [emb.fwd.stack.mask.values.copy(), emb.bwd.stack.mask.values.copy()]
    pruned = _with_embedder(model, emb.compress())
    (_, _, f1_after), _ = evaluate(pruned, pruned.encode(dev), gold_dev)
    report = PruneReport(
        z_relaxed=z_relaxed,
        z_rounded=z_rounded,
        manifests=[pruned.embedder.fwd.manifest, pruned.embedder.bwd.manifest],
        trajectory=trajectory,
        epochs=epochs,
        flops_before=flops_before,
        flops_after=model_flops(pruned, config.chars_per_word),
        dev_f1_before=f1_before,
        dev_f1_masked=f1_masked,
        dev_f1_after=f1_after,
        binarized=binarized,
        lm_checksum_before=checksum,
        lm_checksum_after=lm_checksum(emb),
    )
    report.rounded_per_stack = all_rounded
    return pruned, report


def _with_embedder(model, embedder):
    out = TaggerModel.__new__(TaggerModel)
    out.__dict__.update(model.__dict__)
    out.embedder = embedder
    return out


def selection_pattern(model, train, dev, spec, config=None, seeds=(0, 1), csv_path=None):
    """Retention frequency of every layer over repeated pruning runs.

    Returns ``(freq_fwd, freq_bwd, reports)``; each run starts from the same
    checkpoint and differs only in its seed. A single run gives a 0/1 pattern.
    """
    config = config or PruneConfig()
    if not seeds:
        raise ValueError("selection_pattern needs at least one seed")
    kept_f = np.zeros(model.embedder.fwd.num_layers)
    kept_b = np.zeros(model.embedder.bwd.num_layers)
    reports = []
    for seed in seeds:
        _, rep = prune(model, train, dev, spec, replace(config, seed=seed))
        kept_f += rep.rounded_per_stack[0]
        kept_b += rep.rounded_per_stack[1]
        reports.append(rep)
    freq_f, freq_b = kept_f / len(seeds), kept_b / len(seeds)
    if csv_path is not None:
        write_pattern_csv(csv_path, freq_f, freq_b, len(seeds))
    return freq_f, freq_b, reports


def write_pattern_csv(path, freq_f, freq_b, runs):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["direction", "layer", "retention_frequency", "runs"])
        for name, freq in (("forward", freq_f), ("backward", freq_b)):
            for i, f in enumerate(freq):
                w.writerow([name, i + 1, f"{f:.6f}", runs])
