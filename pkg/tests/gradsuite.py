"""Finite-difference instances for every differentiable piece of the library.

Each case builds a fresh random instance from a seed and returns
``(loss_fn, params, eps)``. Losses are random linear readouts of the op
output, so every output coordinate contributes with its own weight.

Primitive ops use ``eps = 1e-5``. The deeper recurrent graphs use
``eps = 1e-4`` with O(1) parameter scales: at 1e-5 the central difference
of coordinates whose true gradient is ~1e-9 is swamped by float64 roundoff
in the loss (about ``ulp(loss) / eps``), which the relative-error floor of
1e-8 does not absorb. Truncation error at 1e-4 stays far below 1e-4.
"""

import numpy as np

from densetag import autograd as ag
from densetag.contextual import ContextEmbedder
from densetag.lm import LmModel, lm_loss
from densetag.recurrent import DenseStack, LstmLayer, layerwise_dropout_masks

FINE, COARSE = 1e-5, 1e-4


def _t(rng, *shape, scale=1.0):
    return ag.Tensor(rng.normal(scale=scale, size=shape), requires_grad=True)


def readout(out, rng):
    r = ag.Tensor(rng.normal(size=out.shape))
    return ag.sum_all(ag.mul(out, r))


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.normal(size=shape)
    return ag.Tensor(np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin * 2, x), requires_grad=True)


def case_matmul(rng):
    a, b = _t(rng, 3, 4), _t(rng, 4, 2)
    r = rng.normal(size=(3, 2))
    return lambda: ag.sum_all(ag.mul(ag.matmul(a, b), ag.Tensor(r))), [a, b], FINE


def _readout_case(build, params, rng, eps=FINE):
    seed = int(rng.integers(1 << 30))

    def f():
        out = build()
        return readout(out, np.random.default_rng(seed))

    return f, params, eps


def case_add(rng):
    a, b = _t(rng, 3, 4), _t(rng, 3, 4)
    return _readout_case(lambda: ag.add(a, b), [a, b], rng)


def case_add_bias(rng):
    a, b = _t(rng, 3, 4), _t(rng, 1, 4)
    return _readout_case(lambda: ag.add(a, b), [a, b], rng)


def case_mul(rng):
    a, b = _t(rng, 2, 5), _t(rng, 2, 5)
    return _readout_case(lambda: ag.mul(a, b), [a, b], rng)


def case_scale_const(rng):
    a = _t(rng, 3, 3)
    s = float(rng.normal())
    return _readout_case(lambda: ag.scale(a, s), [a], rng)


def case_scale_tensor(rng):
    a, s = _t(rng, 3, 3), _t(rng, 1, 1)
    return _readout_case(lambda: ag.scale(a, s), [a, s], rng)


def case_sigmoid(rng):
    a = _t(rng, 3, 4, scale=2.0)
    return _readout_case(lambda: ag.sigmoid(a), [a], rng)


def case_tanh(rng):
    a = _t(rng, 3, 4, scale=2.0)
    return _readout_case(lambda: ag.tanh(a), [a], rng)


def case_relu(rng):
    a = _away_from_zero(rng, (3, 4))
    return _readout_case(lambda: ag.relu(a), [a], rng)


def case_dropout(rng):
    a = _t(rng, 4, 5)
    mask = (rng.random((4, 5)) > 0.5) / 0.5
    return _readout_case(lambda: ag.dropout(a, mask), [a], rng)


def case_concat(rng):
    a, b, c = _t(rng, 3, 2), _t(rng, 3, 4), _t(rng, 3, 1)
    return _readout_case(lambda: ag.concat([a, b, c]), [a, b, c], rng)


def case_concat_rows(rng):
    a, b = _t(rng, 2, 3), _t(rng, 4, 3)
    return _readout_case(lambda: ag.concat_rows([a, b]), [a, b], rng)


def case_slice_cols(rng):
    a = _t(rng, 3, 6)
    lo = int(rng.integers(0, 3))
    hi = int(rng.integers(lo + 1, 7))
    return _readout_case(lambda: ag.slice_cols(a, lo, hi), [a], rng)


def case_take_rows(rng):
    a = _t(rng, 5, 3)
    idx = rng.integers(0, 5, size=8)  # repeats exercise the scatter-add
    return _readout_case(lambda: ag.take_rows(a, idx), [a], rng)


def case_sum_all(rng):
    a = _t(rng, 3, 4)
    w = rng.normal(size=(3, 4))
    return (lambda: ag.sum_all(ag.mul(ag.tanh(a), ag.Tensor(w)))), [a], FINE


def case_cross_entropy(rng):
    a = _t(rng, 5, 7, scale=2.0)
    y = rng.integers(0, 7, size=5)
    red = "mean" if rng.random() < 0.5 else "sum"
    return (lambda: ag.softmax_cross_entropy(a, y, reduction=red)), [a], FINE


def case_lstm_cell(rng):
    pre, c = _t(rng, 3, 8, scale=1.5), _t(rng, 3, 2)
    return _readout_case(lambda: ag.lstm_cell(pre, c), [pre, c], rng)


def case_crf_nll(rng):
    k = int(rng.integers(2, 5))
    lengths = list(rng.integers(1, 5, size=int(rng.integers(1, 4))))
    n = int(sum(lengths))
    em, tr = _t(rng, n, k), _t(rng, k, k)
    st, sp = _t(rng, 1, k), _t(rng, 1, k)
    y = rng.integers(0, k, size=n)
    return (lambda: ag.crf_nll(em, tr, st, sp, lengths, y)), [em, tr, st, sp], FINE


def _scale_params(params, rng, scale=0.5):
    for p in params:
        p.data[...] = rng.normal(scale=scale, size=p.shape)
        p.requires_grad = True


def case_lstm_step(rng):
    layer = LstmLayer(3, 4, rng)
    _scale_params(layer.params(), rng)
    x, h, c = _t(rng, 2, 3), _t(rng, 2, 4), _t(rng, 2, 4)

    def build():
        h2, c2 = layer.step(x, h, c)
        return ag.concat([h2, c2])

    return _readout_case(build, layer.params() + [x, h, c], rng, COARSE)


def case_dense_stack(rng):
    stack = DenseStack(3, 4, 3, rng)
    _scale_params(stack.params(), rng)
    xs = [_t(rng, 2, 3) for _ in range(4)]
    mode = ("eval", "masked", "train_lm_dropout")[int(rng.integers(3))]
    z = drop = None
    params = stack.params() + xs
    if mode == "masked":
        z = stack.mask
        z.z.data[...] = rng.uniform(0.1, 1.0, size=(1, 3))
        z.trainable(True)
        params = params + [z.z]
    elif mode == "train_lm_dropout":
        drop = layerwise_dropout_masks(3, 0.5, rng)

    def build():
        outs, _, _ = stack.forward(xs, mode=mode, z=z, drop=drop)
        return ag.concat_rows(outs)

    return _readout_case(build, params, rng, COARSE)


def case_lm_head(rng):
    model = LmModel(7, 3, 4, 2, 5, seed=int(rng.integers(1 << 20)))
    _scale_params(model.params(), rng)
    window = rng.integers(0, 7, size=(2, 6))
    return (lambda: lm_loss(model, window)[0]), model.params(), COARSE


def case_repr_head(rng):
    seed = int(rng.integers(1 << 20))
    fwd = LmModel(6, 3, 3, 2, 4, direction="forward", seed=seed)
    bwd = LmModel(6, 3, 3, 2, 4, direction="backward", seed=seed)
    emb = ContextEmbedder(fwd, bwd, 4, seed=seed)
    for lm in (fwd, bwd):
        for p in lm.params():
            p.data[...] = rng.normal(scale=0.5, size=p.shape)
    emb.W_cr.data[...] = rng.normal(scale=0.5, size=emb.W_cr.shape)
    emb.b_cr.data[...] = rng.normal(scale=0.5, size=emb.b_cr.shape) + 0.3
    for m in emb.masks():
        m.z.data[...] = rng.uniform(0.2, 1.0, size=m.z.shape)
        m.trainable(True)
    seqs = [list(rng.integers(0, 6, size=4)), list(rng.integers(0, 6, size=2))]
    params = emb.params() + [m.z for m in emb.masks()]
    return _readout_case(lambda: emb.represent(emb.features(seqs)), params, rng, COARSE)


CASES = {
    "matmul": case_matmul,
    "add": case_add,
    "add_bias": case_add_bias,
    "mul": case_mul,
    "scale": case_scale_const,
    "scale_tensor": case_scale_tensor,
    "sigmoid": case_sigmoid,
    "tanh": case_tanh,
    "relu": case_relu,
    "dropout": case_dropout,
    "concat": case_concat,
    "concat_rows": case_concat_rows,
    "slice_cols": case_slice_cols,
    "take_rows": case_take_rows,
    "sum_all": case_sum_all,
    "softmax_cross_entropy": case_cross_entropy,
    "lstm_cell": case_lstm_cell,
    "crf_nll": case_crf_nll,
    "lstm_step": case_lstm_step,
    "dense_stack": case_dense_stack,
    "lm_head": case_lm_head,
    "repr_head": case_repr_head,
}


def run_case(name, seed):
    rng = np.random.default_rng([seed, sum(map(ord, name))])
    f, params, eps = CASES[name](rng)
    return ag.grad_check(f, params, eps=eps)
