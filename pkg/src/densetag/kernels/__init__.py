"""Hot kernels: LSTM cell pointwise math, CRF forward-backward, Viterbi.

The compiled extension is used when it imports; otherwise the numpy
reference implementation is used. Set ``DENSETAG_KERNELS=python`` to force
the fallback (the benchmark and the cross-backend tests rely on this).
"""

import os

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["compiled"] = _ckernels

_requested = os.environ.get("DENSETAG_KERNELS", "auto").lower()
if _requested == "python" or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "compiled"

_impl = BACKENDS[BACKEND]


def set_backend(name):
    """Switch the active backend at runtime ('python' or 'compiled')."""
    global _impl, BACKEND
    if name not in BACKENDS:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}")
    BACKEND = name
    _impl = BACKENDS[name]


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def lstm_cell_forward(pre, c_prev):
    return _impl.lstm_cell_forward(_c(pre), _c(c_prev))


def lstm_cell_backward(dh, dc, act, tanh_c, c_prev):
    return _impl.lstm_cell_backward(_c(dh), _c(dc), _c(act), _c(tanh_c), _c(c_prev))


def crf_forward(emis, trans, start, stop):
    return _impl.crf_forward(_c(emis), _c(trans), _c(start).ravel(), _c(stop).ravel())


def crf_marginals(emis, trans, start, stop):
    return _impl.crf_marginals(_c(emis), _c(trans), _c(start).ravel(), _c(stop).ravel())


def viterbi(emis, trans, start, stop):
    return _impl.viterbi(_c(emis), _c(trans), _c(start).ravel(), _c(stop).ravel())
