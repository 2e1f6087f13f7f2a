# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_pykernels``.

Signatures and return values match the numpy reference one for one.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, tanh, INFINITY

cnp.import_array()


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def lstm_cell_forward(const double[:, ::1] pre, const double[:, ::1] c_prev):
    cdef Py_ssize_t b = c_prev.shape[0]
    cdef Py_ssize_t hid = c_prev.shape[1]
    h_arr = np.empty((b, hid))
    c_arr = np.empty((b, hid))
    act_arr = np.empty((b, 4 * hid))
    tc_arr = np.empty((b, hid))
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] c = c_arr
    cdef double[:, ::1] act = act_arr
    cdef double[:, ::1] tc = tc_arr
    cdef Py_ssize_t r, j
    cdef double i_g, f_g, g_g, o_g, cv
    with nogil:
        for r in range(b):
            for j in range(hid):
                i_g = _sigmoid(pre[r, j])
                f_g = _sigmoid(pre[r, hid + j])
                g_g = tanh(pre[r, 2 * hid + j])
                o_g = _sigmoid(pre[r, 3 * hid + j])
                act[r, j] = i_g
                act[r, hid + j] = f_g
                act[r, 2 * hid + j] = g_g
                act[r, 3 * hid + j] = o_g
                cv = f_g * c_prev[r, j] + i_g * g_g
                c[r, j] = cv
                tc[r, j] = tanh(cv)
                h[r, j] = o_g * tc[r, j]
    return h_arr, c_arr, act_arr, tc_arr


def lstm_cell_backward(const double[:, ::1] dh, const double[:, ::1] dc,
                       const double[:, ::1] act, const double[:, ::1] tanh_c,
                       const double[:, ::1] c_prev):
    cdef Py_ssize_t b = c_prev.shape[0]
    cdef Py_ssize_t hid = c_prev.shape[1]
    dpre_arr = np.empty((b, 4 * hid))
    dcp_arr = np.empty((b, hid))
    cdef double[:, ::1] dpre = dpre_arr
    cdef double[:, ::1] dcp = dcp_arr
    cdef Py_ssize_t r, j
    cdef double i_g, f_g, g_g, o_g, t, dct
    with nogil:
        for r in range(b):
            for j in range(hid):
                i_g = act[r, j]
                f_g = act[r, hid + j]
                g_g = act[r, 2 * hid + j]
                o_g = act[r, 3 * hid + j]
                t = tanh_c[r, j]
                dct = dc[r, j] + dh[r, j] * o_g * (1.0 - t * t)
                dpre[r, j] = dct * g_g * i_g * (1.0 - i_g)
                dpre[r, hid + j] = dct * c_prev[r, j] * f_g * (1.0 - f_g)
                dpre[r, 2 * hid + j] = dct * i_g * (1.0 - g_g * g_g)
                dpre[r, 3 * hid + j] = dh[r, j] * t * o_g * (1.0 - o_g)
                dcp[r, j] = dct * f_g
    return dpre_arr, dcp_arr


cdef void _forward(const double[:, ::1] emis, const double[:, ::1] trans,
                   const double[::1] start, double[:, ::1] alpha) nogil:
    cdef Py_ssize_t steps = emis.shape[0]
    cdef Py_ssize_t k = emis.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double mx, s, v
    for j in range(k):
        alpha[0, j] = start[j] + emis[0, j]
    for t in range(1, steps):
        for j in range(k):
            mx = -INFINITY
            for i in range(k):
                v = alpha[t - 1, i] + trans[i, j]
                if v > mx:
                    mx = v
            s = 0.0
            for i in range(k):
                s += exp(alpha[t - 1, i] + trans[i, j] - mx)
            alpha[t, j] = mx + log(s) + emis[t, j]


cdef double _final(const double[:, ::1] alpha, const double[::1] stop) nogil:
    cdef Py_ssize_t last = alpha.shape[0] - 1
    cdef Py_ssize_t k = alpha.shape[1]
    cdef Py_ssize_t j
    cdef double mx = -INFINITY
    cdef double s = 0.0
    for j in range(k):
        if alpha[last, j] + stop[j] > mx:
            mx = alpha[last, j] + stop[j]
    for j in range(k):
        s += exp(alpha[last, j] + stop[j] - mx)
    return mx + log(s)


def crf_forward(const double[:, ::1] emis, const double[:, ::1] trans,
                const double[::1] start, const double[::1] stop):
    alpha_arr = np.empty((emis.shape[0], emis.shape[1]))
    cdef double[:, ::1] alpha = alpha_arr
    cdef double log_z
    with nogil:
        _forward(emis, trans, start, alpha)
        log_z = _final(alpha, stop)
    return log_z, alpha_arr


def crf_marginals(const double[:, ::1] emis, const double[:, ::1] trans,
                  const double[::1] start, const double[::1] stop):
    cdef Py_ssize_t steps = emis.shape[0]
    cdef Py_ssize_t k = emis.shape[1]
    alpha_arr = np.empty((steps, k))
    beta_arr = np.empty((steps, k))
    unary_arr = np.empty((steps, k))
    pair_arr = np.zeros((k, k))
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] beta = beta_arr
    cdef double[:, ::1] unary = unary_arr
    cdef double[:, ::1] pair = pair_arr
    cdef Py_ssize_t t, i, j
    cdef double log_z, mx, s, v
    with nogil:
        _forward(emis, trans, start, alpha)
        log_z = _final(alpha, stop)
        for j in range(k):
            beta[steps - 1, j] = stop[j]
        for t in range(steps - 2, -1, -1):
            for i in range(k):
                mx = -INFINITY
                for j in range(k):
                    v = trans[i, j] + emis[t + 1, j] + beta[t + 1, j]
                    if v > mx:
                        mx = v
                s = 0.0
                for j in range(k):
                    s += exp(trans[i, j] + emis[t + 1, j] + beta[t + 1, j] - mx)
                beta[t, i] = mx + log(s)
        for t in range(steps):
            for j in range(k):
                unary[t, j] = exp(alpha[t, j] + beta[t, j] - log_z)
        for t in range(1, steps):
            for i in range(k):
                for j in range(k):
                    pair[i, j] += exp(alpha[t - 1, i] + trans[i, j]
                                      + emis[t, j] + beta[t, j] - log_z)
    return log_z, unary_arr, pair_arr


def viterbi(const double[:, ::1] emis, const double[:, ::1] trans,
            const double[::1] start, const double[::1] stop):
    cdef Py_ssize_t steps = emis.shape[0]
    cdef Py_ssize_t k = emis.shape[1]
    back_arr = np.zeros((steps, k), dtype=np.int64)
    path_arr = np.empty(steps, dtype=np.int64)
    score_arr = np.empty(k)
    nxt_arr = np.empty(k)
    cdef cnp.int64_t[:, ::1] back = back_arr
    cdef cnp.int64_t[::1] path = path_arr
    cdef double[::1] score = score_arr
    cdef double[::1] nxt = nxt_arr
    cdef Py_ssize_t t, i, j, arg
    cdef double mx, v
    with nogil:
        for j in range(k):
            score[j] = start[j] + emis[0, j]
        for t in range(1, steps):
            for j in range(k):
                mx = -INFINITY
                arg = 0
                for i in range(k):
                    v = score[i] + trans[i, j]
                    if v > mx:
                        mx = v
                        arg = i
                back[t, j] = arg
                nxt[j] = mx + emis[t, j]
            for j in range(k):
                score[j] = nxt[j]
        mx = -INFINITY
        arg = 0
        for j in range(k):
            v = score[j] + stop[j]
            if v > mx:
                mx = v
                arg = j
        path[steps - 1] = arg
        for t in range(steps - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_arr, mx
