import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from densetag.autograd import ContractError
from densetag.contextual import ContextEmbedder
from densetag.pruning import (
    PruneConfig, RegularizerSpec, lm_checksum, penalty, penalty_grad, project, prune, selection_pattern,
)
from densetag.synthetic import handwired_lm_pair, lm_vocab, symmetric_lm_pair, tagging_corpus
from densetag.tagger import TaggerDims, TaggerModel, TaggerTrainConfig, train_tagger

R1, R2, R3 = RegularizerSpec("R1", 1.0, 2), RegularizerSpec("R2", 1.0, 2), RegularizerSpec("R3", 1.0, 2)

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_penalty_examples():
    assert penalty(R1, [0.5, 0.5, 0.0]) == 1.0
    assert penalty(R2, [1, 1, 0]) == 0.0
    assert penalty(R2, [1, 1, 1]) == 3.0
    assert penalty(R3, [1, 0.5, 0]) == 0.25
    assert penalty(RegularizerSpec("R0"), [0.2, 0.0, 1.0]) == 2.0


def test_penalty_grad_examples():
    # gate off: only the binary term, which is flat at one half
    assert penalty_grad(R3, [0.5, 0.0, 0.0])[0] == 0.0
    # gate on at z = 1: 1 + (1 - 2) = 0
    assert penalty_grad(R3, [1.0, 1.0, 1.0]).tolist() == [0.0, 0.0, 0.0]
    assert penalty_grad(R1, [0.3, 0.0]).tolist() == [1.0, 0.0]
    with pytest.raises(ValueError):
        penalty_grad(RegularizerSpec("R0"), [0.5])


def test_box_is_enforced():
    for z in ([1.2, 0.0], [-0.1], [np.nan]):
        with pytest.raises(ContractError):
            penalty(R3, z)


def test_spec_validation():
    with pytest.raises(ValueError):
        RegularizerSpec("R4")
    with pytest.raises(ValueError):
        RegularizerSpec("R3", -1.0)
    with pytest.raises(ValueError):
        RegularizerSpec("R3", 1.0, 1.5)


@settings(max_examples=200, deadline=None)
@given(st.lists(unit, min_size=3, max_size=12), st.integers(0, 12))
def test_r2_vanishes_on_sparse_masks(z, keep):
    z = np.array(z)
    z[keep:] = 0.0
    spec = RegularizerSpec("R2", 1.0, keep)
    assert penalty(spec, z) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from([0.0, 1.0]), min_size=1, max_size=12), st.integers(0, 12))
def test_r3_zero_exactly_on_binary_sparse(z, lam1):
    spec = RegularizerSpec("R3", 1.0, lam1)
    value = penalty(spec, z)
    assert (value == 0.0) == (sum(z) <= lam1)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=1, max_size=8))
def test_projection_is_idempotent(v):
    p = project(v)
    assert np.all((p >= 0) & (p <= 1))
    assert np.array_equal(project(p), p)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    for spec in (R1, R2, R3):
        for _ in range(50):
            z = rng.uniform(0.05, 0.95, size=6)
            z[rng.random(6) < 0.4] = 0.0  # zeros stay inactive under a one-sided probe
            g = penalty_grad(spec, z)
            for i in np.flatnonzero(z):
                e = np.zeros(6)
                e[i] = 1e-6
                num = (penalty(spec, z + e) - penalty(spec, z - e)) / 2e-6
                assert g[i] == pytest.approx(num, abs=1e-6)


# pruning runs --------------------------------------------------------------

VOCAB = lm_vocab()


@pytest.fixture(scope="module")
def handwired_tagger():
    train, dev, _ = tagging_corpus(40, 20, 1, seed=0)
    f, b = handwired_lm_pair(VOCAB)
    model = TaggerModel.build(train + dev, TaggerDims(3, 3, 8, 3), ContextEmbedder(f, b, 8, vocab=VOCAB), seed=0)
    train_tagger(model, train, dev, TaggerTrainConfig(epochs=3))
    return model, train, dev


def test_requires_lm_features_and_full_mask(handwired_tagger):
    model, train, dev = handwired_tagger
    nolm = TaggerModel.build(train, TaggerDims(3, 3, 8, 3))
    with pytest.raises(ValueError):
        prune(nolm, train, dev, R3)
    model.embedder.fwd.stack.mask.z.data[0, 0] = 0.5
    try:
        with pytest.raises(ContractError):
            prune(model, train, dev, R3)
    finally:
        model.embedder.fwd.stack.mask.z.data[0, 0] = 1.0


def test_no_regularization_keeps_every_layer(handwired_tagger):
    model, train, dev = handwired_tagger
    pruned, rep = prune(model, train, dev, RegularizerSpec("R3", 0.0, 2), PruneConfig(epochs=3))
    z = np.concatenate(rep.z_relaxed)
    assert np.all(z > 0.9)
    assert pruned.embedder.fwd.num_layers == pruned.embedder.bwd.num_layers == 6
    assert rep.flops_after == rep.flops_before


def test_prune_leaves_input_and_lm_untouched(handwired_tagger):
    model, train, dev = handwired_tagger
    before = [p.data.copy() for p in model.params()]
    checksum = lm_checksum(model.embedder)
    pruned, rep = prune(model, train, dev, RegularizerSpec("R3", 2.0, 2), PruneConfig(epochs=4))
    assert rep.lm_checksum_before == rep.lm_checksum_after == checksum
    assert all(np.array_equal(a, p.data) for a, p in zip(before, model.params()))
    assert np.all(model.embedder.fwd.stack.mask.values == 1.0)
    assert rep.flops_after <= rep.flops_before
    kept = [len(m) for m in rep.manifests]
    assert kept == [pruned.embedder.fwd.num_layers, pruned.embedder.bwd.num_layers]


def test_far_from_binary_warns_and_rounds(handwired_tagger):
    model, train, dev = handwired_tagger
    with pytest.warns(UserWarning, match="near-binary"):
        pruned, rep = prune(model, train, dev, RegularizerSpec("R1", 2.0, 2), PruneConfig(epochs=1))
    assert not rep.binarized
    assert all(set(np.unique(z)) <= {0.0, 1.0} for z in rep.z_rounded)
    assert "WARNING" in rep.summary()


def test_pruning_is_deterministic(handwired_tagger, tmp_path):
    model, train, dev = handwired_tagger
    spec, cfg = RegularizerSpec("R3", 2.0, 2), PruneConfig(epochs=2, seed=5)
    _, a = prune(model, train, dev, spec, cfg)
    _, b = prune(model, train, dev, spec, cfg)
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_single_run_pattern_is_zero_one(handwired_tagger, tmp_path):
    model, train, dev = handwired_tagger
    ff, fb, reps = selection_pattern(
        model, train, dev, RegularizerSpec("R3", 2.0, 2), PruneConfig(epochs=2), seeds=[3], csv_path=tmp_path / "p.csv"
    )
    assert len(reps) == 1
    assert set(ff) | set(fb) <= {0.0, 1.0}
    assert (tmp_path / "p.csv").read_text().startswith("direction,layer,retention_frequency,runs")


def test_exchangeable_layers_are_selected_uniformly():
    # fresh symmetric draws per run: no layer index is special, so retention
    # counts per index must look uniform within each direction
    train, dev, _ = tagging_corpus(10, 5, 1, seed=0)
    kept = np.zeros((2, 4))
    for s in range(50):
        f, b = symmetric_lm_pair(VOCAB, seed=s)
        model = TaggerModel.build(train + dev, TaggerDims(3, 3, 4, 3), ContextEmbedder(f, b, 4, vocab=VOCAB, seed=s), seed=s)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, rep = prune(model, train, dev, RegularizerSpec("R3", 5.0, 2), PruneConfig(epochs=40, batch_size=5, seed=s))
        kept += np.array(rep.rounded_per_stack)
    for counts in kept:
        assert counts.sum() > 0
        assert chisquare(counts).pvalue > 0.01, counts
