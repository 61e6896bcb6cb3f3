# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels (stride-1, same padding, NCHW).

Direct convolution with the input-channel loop blocked by four so the
compiler can keep several fused multiply-add chains per output row in
registers.  Work is split across threads by (batch, out-channel) for the
forward pass and by out-channel for the weight gradient; every output
element is produced by exactly one thread with a fixed accumulation
order, so results do not depend on the thread count.
"""

import numpy as np

cimport cython
from cython.parallel cimport prange

ctypedef fused floating:
    float
    double

NAME = "native"


def conv2d_forward(x, w, b):
    k = w.shape[2]
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    out = np.empty((x.shape[0], w.shape[0], x.shape[2], x.shape[3]), dtype=x.dtype)
    _forward(xp, w, b, out)
    return out


def conv2d_grad_input(dy, w):
    wf = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return conv2d_forward(dy, wf, np.zeros(wf.shape[0], dtype=w.dtype))


def conv2d_grad_weights(dy, x, k):
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
    dw = np.empty((dy.shape[1], x.shape[1], k, k), dtype=x.dtype)
    _grad_weights(dy, xp, dw)
    db = dy.sum(axis=(0, 2, 3))
    return dw, db


@cython.boundscheck(False)
@cython.wraparound(False)
def _forward(floating[:, :, :, ::1] xp, floating[:, :, :, ::1] w,
             floating[::1] b, floating[:, :, :, ::1] out):
    cdef Py_ssize_t n = out.shape[0], oc = out.shape[1]
    cdef Py_ssize_t h = out.shape[2], wd = out.shape[3]
    cdef Py_ssize_t ic = w.shape[1], k = w.shape[2]
    cdef Py_ssize_t c4 = ic - (ic & 3)
    cdef Py_ssize_t t, ni, o, c, u, v, i, j
    cdef floating w0, w1, w2, w3
    cdef floating* orow
    cdef const floating* x0
    cdef const floating* x1
    cdef const floating* x2
    cdef const floating* x3

    for t in prange(n * oc, nogil=True, schedule='static'):
        ni = t // oc
        o = t % oc
        for i in range(h):
            orow = &out[ni, o, i, 0]
            for j in range(wd):
                orow[j] = b[o]
        for c in range(0, c4, 4):
            for u in range(k):
                for v in range(k):
                    w0 = w[o, c, u, v]
                    w1 = w[o, c + 1, u, v]
                    w2 = w[o, c + 2, u, v]
                    w3 = w[o, c + 3, u, v]
                    for i in range(h):
                        orow = &out[ni, o, i, 0]
                        x0 = &xp[ni, c, i + u, v]
                        x1 = &xp[ni, c + 1, i + u, v]
                        x2 = &xp[ni, c + 2, i + u, v]
                        x3 = &xp[ni, c + 3, i + u, v]
                        for j in range(wd):
                            orow[j] += w0 * x0[j] + w1 * x1[j] + w2 * x2[j] + w3 * x3[j]
        for c in range(c4, ic):
            for u in range(k):
                for v in range(k):
                    w0 = w[o, c, u, v]
                    for i in range(h):
                        orow = &out[ni, o, i, 0]
                        x0 = &xp[ni, c, i + u, v]
                        for j in range(wd):
                            orow[j] += w0 * x0[j]


@cython.boundscheck(False)
@cython.wraparound(False)
def _grad_weights(floating[:, :, :, ::1] dy, floating[:, :, :, ::1] xp,
                  floating[:, :, :, ::1] dw):
    cdef Py_ssize_t n = dy.shape[0], oc = dy.shape[1]
    cdef Py_ssize_t h = dy.shape[2], wd = dy.shape[3]
    cdef Py_ssize_t ic = dw.shape[1], k = dw.shape[2]
    cdef Py_ssize_t o, c, u, v, ni, i, j
    cdef floating a0, a1, a2
    cdef const floating* drow
    cdef const floating* x0
    cdef const floating* x1
    cdef const floating* x2

    # k is 3 or 5 in practice; running the tap offset v in blocks of three
    # keeps three independent reduction chains fed from one dy row read.
    for o in prange(oc, nogil=True, schedule='static'):
        for c in range(ic):
            for u in range(k):
                for v in range(0, k - (k % 3), 3):
                    a0 = 0; a1 = 0; a2 = 0
                    for ni in range(n):
                        for i in range(h):
                            drow = &dy[ni, o, i, 0]
                            x0 = &xp[ni, c, i + u, v]
                            x1 = &xp[ni, c, i + u, v + 1]
                            x2 = &xp[ni, c, i + u, v + 2]
                            for j in range(wd):
                                a0 = a0 + drow[j] * x0[j]
                                a1 = a1 + drow[j] * x1[j]
                                a2 = a2 + drow[j] * x2[j]
                    dw[o, c, u, v] = a0
                    dw[o, c, u, v + 1] = a1
                    dw[o, c, u, v + 2] = a2
                for v in range(k - (k % 3), k):
                    a0 = 0
                    for ni in range(n):
                        for i in range(h):
                            drow = &dy[ni, o, i, 0]
                            x0 = &xp[ni, c, i + u, v]
                            for j in range(wd):
                                a0 = a0 + drow[j] * x0[j]
                    dw[o, c, u, v] = a0
