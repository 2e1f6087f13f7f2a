"""Dense 2-D reverse-mode automatic differentiation.

Every value is a float64 matrix. Ops build a graph of :class:`Tensor`
nodes; :func:`backward` walks it in reverse topological order and adds
gradients into the ``grad`` of every leaf with ``requires_grad``.
Gradients accumulate, so callers zero them between steps.

Broadcasting is limited to adding a (1, cols) row to a (rows, cols) matrix.
Any other shape mismatch raises :class:`ShapeError`.
"""

import contextlib
import threading

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Operand shapes do not conform to the op."""


class ContractError(ValueError):
    """A caller broke an operation's precondition."""


_state = threading.local()


def _grad_enabled():
    return getattr(_state, "grad_enabled", True)


def _checks_enabled():
    return getattr(_state, "check_finite", False)


@contextlib.contextmanager
def no_grad():
    """Evaluate ops without recording the graph."""
    prev = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def finite_checks(enabled=True):
    """Raise FloatingPointError as soon as any op produces NaN or Inf."""
    prev = _checks_enabled()
    _state.check_finite = enabled
    try:
        yield
    finally:
        _state.check_finite = prev


def assert_finite(t, what="tensor"):
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values in {what}")


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, op="leaf"):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"Tensor must be 2-D, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = ()
        self._backward = None
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def detach(self):
        return Tensor(self.data.copy())

    def item(self):
        if self.data.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def backward(self):
        backward(self)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward_fn, op):
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    track = _grad_enabled() and any(p.requires_grad for p in parents)
    out.requires_grad = track
    if track:
        out._parents = parents
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    if _checks_enabled() and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"op {op!r} produced non-finite values")
    return out


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        return g @ bd.T, ad.T @ g

    return _result(ad @ bd, (a, b), bw, "matmul")


def add(a, b):
    """Elementwise sum; ``b`` may also be a (1, cols) row added to every row."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape == b.shape:

        def bw(g):
            return g, g

    elif b.shape == (1, a.shape[1]):

        def bw(g):
            return g, g.sum(axis=0, keepdims=True)

    else:
        raise ShapeError(f"add: {a.shape} + {b.shape}")
    return _result(a.data + b.data, (a, b), bw, "add")


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: {a.shape} * {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        return g * bd, g * ad

    return _result(ad * bd, (a, b), bw, "mul")


def scale(x, s):
    """``x`` times a scalar; ``s`` is a float or a differentiable 1x1 tensor."""
    x = _as_tensor(x)
    if isinstance(s, Tensor):
        if s.shape != (1, 1):
            raise ShapeError(f"scale: scalar operand has shape {s.shape}")
        xd, sv = x.data, s.data[0, 0]

        def bw(g):
            return g * sv, np.array([[np.sum(g * xd)]])

        return _result(xd * sv, (x, s), bw, "scale")
    sv = float(s)

    def bw_const(g):
        return (g * sv,)

    return _result(x.data * sv, (x,), bw_const, "scale")


def sigmoid(x):
    x = _as_tensor(x)
    y = kernels._pykernels._sigmoid(x.data)

    def bw(g):
        return (g * y * (1.0 - y),)

    return _result(y, (x,), bw, "sigmoid")


def tanh(x):
    x = _as_tensor(x)
    y = np.tanh(x.data)

    def bw(g):
        return (g * (1.0 - y * y),)

    return _result(y, (x,), bw, "tanh")


def relu(x):
    x = _as_tensor(x)
    pos = x.data > 0

    def bw(g):
        return (g * pos,)

    return _result(np.maximum(x.data, 0.0), (x,), bw, "relu")  # NaN propagates


def dropout(x, mask):
    """Multiply by a fixed mask array (same shape); the mask carries any rescaling."""
    x = _as_tensor(x)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != x.shape:
        raise ShapeError(f"dropout: mask {mask.shape} vs input {x.shape}")

    def bw(g):
        return (g * mask,)

    return _result(x.data * mask, (x,), bw, "dropout")


def concat(tensors):
    """Concatenate along columns."""
    tensors = [_as_tensor(t) for t in tensors]
    rows = tensors[0].shape[0]
    for t in tensors:
        if t.shape[0] != rows:
            raise ShapeError(f"concat: row counts {[u.shape for u in tensors]}")
    widths = np.cumsum([0] + [t.shape[1] for t in tensors])

    def bw(g):
        return tuple(g[:, widths[i] : widths[i + 1]] for i in range(len(tensors)))

    return _result(np.concatenate([t.data for t in tensors], axis=1), tuple(tensors), bw, "concat")


def concat_rows(tensors):
    """Stack along rows."""
    tensors = [_as_tensor(t) for t in tensors]
    cols = tensors[0].shape[1]
    for t in tensors:
        if t.shape[1] != cols:
            raise ShapeError(f"concat_rows: column counts {[u.shape for u in tensors]}")
    offs = np.cumsum([0] + [t.shape[0] for t in tensors])

    def bw(g):
        return tuple(g[offs[i] : offs[i + 1]] for i in range(len(tensors)))

    return _result(np.concatenate([t.data for t in tensors], axis=0), tuple(tensors), bw, "concat_rows")


def slice_cols(x, start, stop):
    x = _as_tensor(x)
    if not 0 <= start <= stop <= x.shape[1]:
        raise ShapeError(f"slice_cols: [{start}:{stop}] of {x.shape}")
    shape = x.shape

    def bw(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return _result(x.data[:, start:stop].copy(), (x,), bw, "slice_cols")


def take_rows(x, index):
    """Gather rows ``x[index]``; repeated indices accumulate in backward."""
    x = _as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    if index.ndim != 1:
        raise ShapeError(f"take_rows: index must be 1-D, got {index.shape}")
    if index.size and (index.min() < 0 or index.max() >= x.shape[0]):
        raise IndexError(f"take_rows: index out of range for {x.shape[0]} rows")
    shape = x.shape

    def bw(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return _result(x.data[index], (x,), bw, "take_rows")


def sum_all(x):
    x = _as_tensor(x)
    shape = x.shape

    def bw(g):
        return (np.full(shape, g[0, 0]),)

    return _result(np.array([[x.data.sum()]]), (x,), bw, "sum")


def log_softmax_rows(logits):
    """Row-wise log-softmax as a plain array (no graph)."""
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits, targets, reduction="mean"):
    """Row-softmax followed by negative log-likelihood of ``targets``."""
    logits = _as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    n, v = logits.shape
    if targets.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: targets {targets.shape} for logits {logits.shape}")
    if n and (targets.min() < 0 or targets.max() >= v):
        raise IndexError(f"softmax_cross_entropy: target id outside [0, {v})")
    logp = log_softmax_rows(logits.data)
    nll = -logp[np.arange(n), targets]
    denom = n if reduction == "mean" else 1.0
    total = nll.sum() / denom

    def bw(g):
        probs = np.exp(logp)
        probs[np.arange(n), targets] -= 1.0
        return (probs * (g[0, 0] / denom),)

    return _result(np.array([[total]]), (logits,), bw, "softmax_ce")


def lstm_cell(pre, c_prev):
    """Fused LSTM pointwise step; returns a (B, 2H) tensor ``[h | c]``."""
    pre, c_prev = _as_tensor(pre), _as_tensor(c_prev)
    b, hid = c_prev.shape
    if pre.shape != (b, 4 * hid):
        raise ShapeError(f"lstm_cell: pre-activation {pre.shape} vs cell {c_prev.shape}")
    h, c, act, tanh_c = kernels.lstm_cell_forward(pre.data, c_prev.data)
    cp = c_prev.data

    def bw(g):
        dpre, dcp = kernels.lstm_cell_backward(g[:, :hid], g[:, hid:], act, tanh_c, cp)
        return dpre, dcp

    return _result(np.concatenate([h, c], axis=1), (pre, c_prev), bw, "lstm_cell")


def crf_nll(emissions, transitions, start, stop, lengths, labels):
    """Summed CRF negative log-likelihood over a batch of sentences.

    ``emissions`` stacks every sentence's (T_i, K) score block row-wise;
    ``lengths`` gives the T_i and ``labels`` the concatenated gold ids.
    ``start`` and ``stop`` are (1, K) scores for the virtual boundary states.
    """
    emissions, transitions = _as_tensor(emissions), _as_tensor(transitions)
    start, stop = _as_tensor(start), _as_tensor(stop)
    n, k = emissions.shape
    labels = np.asarray(labels, dtype=np.int64)
    lengths = [int(x) for x in lengths]
    if transitions.shape != (k, k) or start.shape != (1, k) or stop.shape != (1, k):
        raise ShapeError(
            f"crf_nll: emissions {emissions.shape}, transitions {transitions.shape}, "
            f"start {start.shape}, stop {stop.shape}"
        )
    if sum(lengths) != n or labels.shape != (n,) or min(lengths, default=1) < 1:
        raise ShapeError(f"crf_nll: lengths {lengths} / labels {labels.shape} vs {n} rows")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise IndexError(f"crf_nll: label id outside [0, {k})")

    em, tr, st, sp = emissions.data, transitions.data, start.data[0], stop.data[0]
    total = 0.0
    g_em = np.zeros_like(em)
    g_tr = np.zeros_like(tr)
    g_st = np.zeros(k)
    g_sp = np.zeros(k)
    need_grad = _grad_enabled() and any(
        t.requires_grad for t in (emissions, transitions, start, stop)
    )
    off = 0
    for length in lengths:
        e = em[off : off + length]
        y = labels[off : off + length]
        gold = st[y[0]] + e[np.arange(length), y].sum() + tr[y[:-1], y[1:]].sum() + sp[y[-1]]
        if need_grad:
            log_z, unary, pair = kernels.crf_marginals(e, tr, st, sp)
            g_em[off : off + length] = unary
            g_em[off + np.arange(length), y] -= 1.0
            g_tr += pair
            np.subtract.at(g_tr, (y[:-1], y[1:]), 1.0)
            g_st += unary[0]
            g_st[y[0]] -= 1.0
            g_sp += unary[-1]
            g_sp[y[-1]] -= 1.0
        else:
            log_z, _ = kernels.crf_forward(e, tr, st, sp)
        total += log_z - gold
        off += length

    def bw(g):
        s = g[0, 0]
        return g_em * s, g_tr * s, g_st[None, :] * s, g_sp[None, :] * s

    return _result(np.array([[total]]), (emissions, transitions, start, stop), bw, "crf_nll")


def _topo_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``."""
    if not isinstance(loss, Tensor) or loss.shape != (1, 1):
        shape = loss.shape if isinstance(loss, Tensor) else type(loss).__name__
        raise ContractError(f"backward needs a 1x1 loss, got {shape}")
    order = _topo_order(loss)
    grads = {id(loss): np.ones((1, 1))}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if not node._parents:
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                if g is not None:
                    node.grad += g
            continue
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def grad_check(f, params, eps=1e-5, max_entries=None, rng=None):
    """Largest relative gap between analytic and central-difference gradients.

    ``f`` rebuilds the graph from ``params`` and returns a 1x1 loss; it must be
    deterministic. Relative error is ``|a - n| / max(1e-8, |a| + |n|)``. A NaN
    anywhere yields ``inf``. ``max_entries`` samples that many coordinates per
    parameter instead of checking every one.
    """
    for p in params:
        p.grad = None
    loss = f()
    backward(loss)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    worst = 0.0
    rng = rng if rng is not None else np.random.default_rng(0)
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            with no_grad():
                up = f().item()
            flat[i] = orig - eps
            with no_grad():
                down = f().item()
            flat[i] = orig
            num = (up - down) / (2 * eps)
            ana = a.reshape(-1)[i]
            if not (np.isfinite(num) and np.isfinite(ana)):
                return float("inf")
            err = abs(ana - num) / max(1e-8, abs(ana) + abs(num))
            worst = max(worst, err)
    return worst
