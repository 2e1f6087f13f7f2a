"""Vanilla LSTM layers stacked with dense connectivity.

Layer ``l`` (1-based) reads ``[x_t, h_1, ..., h_{l-1}]`` and the stack emits
``[x_t, h_1, ..., h_L]``. Each layer output is multiplied once by its mask
entry ``z_l`` before anything consumes it, so ``z_l = 0`` removes the layer
from every downstream input and from the emitted concat alike.
"""

import numpy as np

from . import autograd as ag
from .rng import glorot_uniform

GATE_ORDER = ("i", "f", "g", "o")


class LstmLayer:
    """One LSTM layer. ``W`` maps ``[x, h_prev]`` to the four gate blocks."""

    def __init__(self, input_dim, hidden_dim, rng=None, W=None, b=None):
        self.input_dim = int(input_dim)
        self.hidden_dim = int(hidden_dim)
        rows, cols = self.input_dim + self.hidden_dim, 4 * self.hidden_dim
        if W is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            W = glorot_uniform(rng, rows, cols)
        if b is None:
            b = np.zeros((1, cols))
            b[0, self.hidden_dim : 2 * self.hidden_dim] = 1.0
        self.W = ag.Tensor(W, requires_grad=True)
        self.b = ag.Tensor(b, requires_grad=True)
        if self.W.shape != (rows, cols) or self.b.shape != (1, cols):
            raise ag.ShapeError(f"LstmLayer: W {self.W.shape}, b {self.b.shape} for in={input_dim} hid={hidden_dim}")

    def params(self):
        return [self.W, self.b]

    def step(self, x, h_prev, c_prev):
        if x.shape[1] != self.input_dim:
            raise ag.ShapeError(f"lstm_step: input width {x.shape[1]}, layer expects {self.input_dim}")
        pre = ag.add(ag.matmul(ag.concat([x, h_prev]), self.W), self.b)
        hc = ag.lstm_cell(pre, c_prev)
        hid = self.hidden_dim
        return ag.slice_cols(hc, 0, hid), ag.slice_cols(hc, hid, 2 * hid)


def lstm_step(layer, x_t, h_prev, c_prev):
    return layer.step(x_t, h_prev, c_prev)


class LayerMask:
    """Relaxed layer-selection vector ``z`` in ``[0, 1]^L``, stored as a (1, L) tensor."""

    def __init__(self, num_layers, values=None):
        z = np.ones((1, num_layers)) if values is None else np.asarray(values, dtype=np.float64).reshape(1, -1)
        if z.shape[1] != num_layers:
            raise ag.ShapeError(f"LayerMask: {z.shape[1]} values for {num_layers} layers")
        self.z = ag.Tensor(z, requires_grad=False)

    def __len__(self):
        return self.z.shape[1]

    @property
    def values(self):
        return self.z.data[0]

    def trainable(self, flag=True):
        self.z.requires_grad = flag
        return self

    def project(self):
        np.clip(self.z.data, 0.0, 1.0, out=self.z.data)

    def is_identity(self):
        return not self.z.requires_grad and bool(np.all(self.z.data == 1.0))

    def is_binary(self, tol=0.0):
        v = self.values
        return bool(np.all(np.minimum(np.abs(v), np.abs(1.0 - v)) <= tol))

    def l0(self):
        return int(np.count_nonzero(self.values > 0))

    def copy(self):
        return LayerMask(len(self), self.values.copy())


def layerwise_dropout_masks(num_layers, p, rng):
    """One keep/drop vector for a batch: 1 keeps a layer's recurrent fan-out, 0 drops it."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"layer dropout probability {p} outside [0, 1]")
    return (rng.random(num_layers) >= p).astype(np.int64)


class DenseStack:
    def __init__(self, embed_dim, hidden_dim, num_layers, rng=None, layer_dropout=0.0, layers=None):
        self.embed_dim = int(embed_dim)
        self.hidden_dim = int(hidden_dim)
        if layers is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            layers = [LstmLayer(self.embed_dim + l * self.hidden_dim, self.hidden_dim, rng) for l in range(num_layers)]
        self.layers = list(layers)
        for l, layer in enumerate(self.layers):
            want = self.embed_dim + l * self.hidden_dim
            if layer.input_dim != want or layer.hidden_dim != self.hidden_dim:
                raise ag.ShapeError(f"DenseStack: layer {l + 1} has input {layer.input_dim}, expected {want}")
        self.mask = LayerMask(len(self.layers))
        self.layer_dropout = float(layer_dropout)

    @property
    def num_layers(self):
        return len(self.layers)

    @property
    def output_dim(self):
        return self.embed_dim + self.num_layers * self.hidden_dim

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def init_state(self, batch):
        zeros = np.zeros((batch, self.hidden_dim))
        return [(ag.Tensor(zeros), ag.Tensor(zeros)) for _ in self.layers]

    def _gates(self, z):
        mask = self.mask if z is None else z
        if isinstance(mask, LayerMask):
            if mask.is_identity():
                return None
            mask = mask.z
        if not isinstance(mask, ag.Tensor):
            mask = ag.Tensor(mask)
        if mask.shape != (1, self.num_layers):
            raise ag.ShapeError(f"mask shape {mask.shape} for {self.num_layers} layers")
        return [ag.slice_cols(mask, l, l + 1) for l in range(self.num_layers)]

    def forward(self, embeds, state=None, mode="eval", z=None, drop=None):
        """Run the stack over a sequence of (B, embed_dim) tensors.

        ``mode`` is ``"train_lm_dropout"`` (``drop`` gives the per-batch keep
        vector, mask ignored), ``"eval"`` (current mask) or ``"masked"``
        (explicit ``z``, possibly differentiable). Returns ``(outputs, state,
        per_layer)`` where ``outputs[t]`` is the dense concat ``h_t``.
        """
        if not embeds:
            raise ValueError("dense_forward needs a non-empty sequence")
        batch = embeds[0].shape[0]
        state = self.init_state(batch) if state is None else list(state)
        if mode == "train_lm_dropout":
            gates = None
            keep = np.ones(self.num_layers, dtype=np.int64) if drop is None else np.asarray(drop)
        elif mode in ("eval", "masked"):
            gates = self._gates(z)
            keep = None
        else:
            raise ValueError(f"unknown mode {mode!r}")
        zero = ag.Tensor(np.zeros((batch, self.hidden_dim))) if keep is not None and not keep.all() else None
        outputs = []
        per_layer = [[] for _ in self.layers]
        for x in embeds:
            visible = [x]  # what later layers see
            emitted = [x]  # what the concat output carries
            for l, layer in enumerate(self.layers):
                h_prev, c_prev = state[l]
                inp = visible[0] if len(visible) == 1 else ag.concat(visible)
                h, c = layer.step(inp, h_prev, c_prev)
                state[l] = (h, c)
                out = h if gates is None else ag.scale(h, gates[l])
                per_layer[l].append(out)
                emitted.append(out)
                visible.append(out if keep is None or keep[l] else zero)
            outputs.append(ag.concat(emitted) if len(emitted) > 1 else emitted[0])
        return outputs, state, per_layer


def dense_forward(stack, embeds, mode="eval", z=None, drop=None, state=None):
    outputs, _, per_layer = stack.forward(embeds, state=state, mode=mode, z=z, drop=drop)
    return outputs, per_layer


def detach_state(state):
    return [(h.detach(), c.detach()) for h, c in state]
