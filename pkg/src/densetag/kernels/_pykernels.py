"""Pure numpy implementations of the hot kernels.

These are the reference versions; ``_ckernels.pyx`` mirrors every function
here with the same signature and must agree to rounding error.
"""

import numpy as np

# LSTM gate blocks are laid out (i, f, g, o) along the last axis.


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_cell_forward(pre, c_prev):
    """Pointwise part of one LSTM step.

    ``pre`` is the (B, 4H) gate pre-activation, ``c_prev`` the (B, H) cell.
    Returns ``(h, c, act, tanh_c)`` where ``act`` holds the activated gates
    and ``tanh_c`` is cached for the backward pass.
    """
    hidden = c_prev.shape[1]
    act = np.empty_like(pre)
    act[:, : 2 * hidden] = _sigmoid(pre[:, : 2 * hidden])
    act[:, 2 * hidden : 3 * hidden] = np.tanh(pre[:, 2 * hidden : 3 * hidden])
    act[:, 3 * hidden :] = _sigmoid(pre[:, 3 * hidden :])
    i = act[:, :hidden]
    f = act[:, hidden : 2 * hidden]
    g = act[:, 2 * hidden : 3 * hidden]
    o = act[:, 3 * hidden :]
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, act, tanh_c


def lstm_cell_backward(dh, dc, act, tanh_c, c_prev):
    """Gradients of the pointwise LSTM step w.r.t. ``pre`` and ``c_prev``."""
    hidden = c_prev.shape[1]
    i = act[:, :hidden]
    f = act[:, hidden : 2 * hidden]
    g = act[:, 2 * hidden : 3 * hidden]
    o = act[:, 3 * hidden :]
    dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
    dpre = np.empty_like(act)
    dpre[:, :hidden] = dc_total * g * i * (1.0 - i)
    dpre[:, hidden : 2 * hidden] = dc_total * c_prev * f * (1.0 - f)
    dpre[:, 2 * hidden : 3 * hidden] = dc_total * i * (1.0 - g * g)
    dpre[:, 3 * hidden :] = dh * tanh_c * o * (1.0 - o)
    dc_prev = dc_total * f
    return dpre, dc_prev


def _logsumexp_cols(m):
    # logsumexp over axis 0 of a (K, K) matrix
    mx = m.max(axis=0)
    return mx + np.log(np.exp(m - mx).sum(axis=0))


def crf_forward(emis, trans, start, stop):
    """Forward algorithm in log space.

    Returns ``(log_z, alpha)`` where ``alpha[t, k]`` is the log-sum of all
    prefixes ending in label ``k`` at step ``t`` (stop scores excluded).
    """
    steps, k = emis.shape
    alpha = np.empty((steps, k))
    alpha[0] = start + emis[0]
    for t in range(1, steps):
        alpha[t] = _logsumexp_cols(alpha[t - 1][:, None] + trans) + emis[t]
    last = alpha[-1] + stop
    mx = last.max()
    return float(mx + np.log(np.exp(last - mx).sum())), alpha


def crf_marginals(emis, trans, start, stop):
    """Forward-backward pass.

    Returns ``(log_z, unary, pair)``: per-step label marginals (T, K) and the
    expected transition counts summed over steps (K, K).
    """
    steps, k = emis.shape
    log_z, alpha = crf_forward(emis, trans, start, stop)
    beta = np.empty((steps, k))
    beta[-1] = stop
    for t in range(steps - 2, -1, -1):
        m = trans + (emis[t + 1] + beta[t + 1])[None, :]
        mx = m.max(axis=1)
        beta[t] = mx + np.log(np.exp(m - mx[:, None]).sum(axis=1))
    unary = np.exp(alpha + beta - log_z)
    pair = np.zeros((k, k))
    for t in range(1, steps):
        pair += np.exp(
            alpha[t - 1][:, None] + trans + (emis[t] + beta[t])[None, :] - log_z
        )
    return log_z, unary, pair


def viterbi(emis, trans, start, stop):
    """Best label path; ties go to the lowest label index."""
    steps, k = emis.shape
    score = start + emis[0]
    back = np.zeros((steps, k), dtype=np.int64)
    for t in range(1, steps):
        cand = score[:, None] + trans
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], np.arange(k)] + emis[t]
    score = score + stop
    best = int(np.argmax(score))
    path = np.empty(steps, dtype=np.int64)
    path[-1] = best
    for t in range(steps - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(score[best])
