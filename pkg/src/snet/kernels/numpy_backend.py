"""NumPy reference implementation of the convolution kernels.

Same-padded, stride-1 cross-correlation in NCHW layout.  Forward and the
weight gradient are expressed as single large matrix products over an
im2col view (``sliding_window_view`` is a zero-copy view; ``tensordot``
materialises it once per call).  The input gradient reuses the forward
path with spatially flipped, channel-transposed weights.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"


def _pad_same(x, k):
    p = (k - 1) // 2
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def conv2d_forward(x, w, b):
    """out[n,o,i,j] = b[o] + sum_{c,u,v} w[o,c,u,v] * x_padded[n,c,i+u,j+v]."""
    k = w.shape[2]
    xp = _pad_same(x, k)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (n, c, h, w, k, k)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (n, h, w, o)
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    out += b.reshape(1, -1, 1, 1)
    return out


def conv2d_grad_input(dy, w):
    """Gradient w.r.t. the convolution input.

    For stride-1 same padding with an odd kernel this is again a same-padded
    cross-correlation: dy against weights flipped in both spatial axes with
    in/out channel roles swapped.
    """
    wf = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    zero_bias = np.zeros(wf.shape[0], dtype=w.dtype)
    return conv2d_forward(dy, wf, zero_bias)


def conv2d_grad_weights(dy, x, k):
    """Gradients w.r.t. weights and bias, summed over the batch."""
    n, oc, h, wd = dy.shape
    ic = x.shape[1]
    xp = _pad_same(x, k)
    dw = np.empty((oc, ic, k, k), dtype=x.dtype)
    # One (oc x n*h*w) @ (n*h*w x ic) product per kernel tap keeps peak
    # memory at a single padded copy instead of an n*c*h*w*k*k buffer.
    for u in range(k):
        for v in range(k):
            dw[:, :, u, v] = np.tensordot(
                dy, xp[:, :, u:u + h, v:v + wd], axes=([0, 2, 3], [0, 2, 3]))
    db = dy.sum(axis=(0, 2, 3))
    return dw, db
