"""Minimal reverse-mode autodiff over rank-4 float tensors.

Provides exactly the operations the network needs: same-padded stride-1
convolution, ReLU, elementwise add, mean-squared error, and constant
scaling (for loss-weight averaging).  Each forward call records a node on
an implicit tape; ``backward`` walks the tape once in reverse topological
order and frees it afterwards, so a fresh tape is built per training step.

Float32 is the working precision; reductions may accumulate in float64.
A float64 mode (build tensors with ``dtype=np.float64``) exists for tight
finite-difference checks.
"""

import numpy as np

from . import kernels

_FLOAT_DTYPES = (np.float32, np.float64)


class Tensor:
    """A float array plus an optional gradient buffer and tape linkage.

    Activations are rank-4 ``(batch, channel, height, width)``; weight and
    bias tensors carry their natural ranks; loss values are rank-0.
    Gradient contributions arriving during backward are never mutated in
    place, so buffers may be shared between branches.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name})"


class ConvParams:
    """Weights ``(out_ch, in_ch, k, k)`` and bias ``(out_ch,)`` of one layer."""

    __slots__ = ("weights", "bias")

    def __init__(self, weights, bias):
        weights = weights if isinstance(weights, Tensor) else Tensor(weights, requires_grad=True)
        bias = bias if isinstance(bias, Tensor) else Tensor(bias, requires_grad=True)
        if weights.data.ndim != 4:
            raise ValueError(f"conv weights must be rank 4, got shape {weights.shape}")
        oc, ic, kh, kw = weights.shape
        if kh != kw:
            raise ValueError(f"conv kernels must be square, got {kh}x{kw}")
        if kh % 2 == 0 or kh < 1:
            raise ValueError(f"kernel size must be odd and positive, got {kh}")
        if bias.shape != (oc,):
            raise ValueError(f"bias shape {bias.shape} does not match {oc} output channels")
        self.weights = weights
        self.bias = bias

    @property
    def out_channels(self):
        return self.weights.shape[0]

    @property
    def in_channels(self):
        return self.weights.shape[1]

    @property
    def kernel(self):
        return self.weights.shape[2]

    @property
    def parameter_count(self):
        return self.weights.data.size + self.bias.data.size


def _node(data, parents, backward_fn):
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _check_same_dtype(*tensors):
    dtypes = {t.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ValueError(f"mixed tensor dtypes in one graph: {sorted(d.name for d in dtypes)}")


def conv2d_same(x, p):
    """Same-padded stride-1 cross-correlation; spatial size is preserved."""
    if x.data.ndim != 4:
        raise ValueError(f"conv input must be rank 4 (n,c,h,w), got shape {x.shape}")
    n, c, h, w = x.shape
    if c != p.in_channels:
        raise ValueError(f"input has {c} channels but layer expects {p.in_channels}")
    if h < 1 or w < 1:
        raise ValueError(f"zero-sized spatial dims {h}x{w}")
    _check_same_dtype(x, p.weights, p.bias)

    out_data = kernels.conv2d_forward(x.data, p.weights.data, p.bias.data)
    x_data = x.data
    k = p.kernel

    def backward_fn(g):
        if p.weights.requires_grad:
            dw, db = kernels.conv2d_grad_weights(g, x_data, k)
            p.weights._accumulate(dw)
            p.bias._accumulate(db)
        if x.requires_grad:
            x._accumulate(kernels.conv2d_grad_input(g, p.weights.data))

    return _node(out_data, (x, p.weights, p.bias), backward_fn)


def relu(x):
    """Elementwise max(0, x); the subgradient at exactly 0 is taken as 0."""
    mask = x.data > 0

    def backward_fn(g):
        x._accumulate(g * mask)

    return _node(np.where(mask, x.data, x.data.dtype.type(0)), (x,), backward_fn)


def add(x, y):
    if x.shape != y.shape:
        raise ValueError(f"add shape mismatch: {x.shape} vs {y.shape}")
    _check_same_dtype(x, y)

    def backward_fn(g):
        if x.requires_grad:
            x._accumulate(g)
        if y.requires_grad:
            y._accumulate(g)

    return _node(x.data + y.data, (x, y), backward_fn)


def scale(x, c):
    """Multiply by a python scalar (loss-weight plumbing)."""
    c = x.data.dtype.type(c)

    def backward_fn(g):
        x._accumulate(g * c)

    return _node(x.data * c, (x,), backward_fn)


def mse(x, y):
    """Mean over all elements of (x - y)^2, accumulated in float64."""
    if x.shape != y.shape:
        raise ValueError(f"mse shape mismatch: {x.shape} vs {y.shape}")
    _check_same_dtype(x, y)
    diff = x.data - y.data
    value = np.mean(np.square(diff, dtype=np.float64))
    coef = 2.0 / diff.size

    def backward_fn(g):
        gd = (g * coef) * diff
        if x.requires_grad:
            x._accumulate(gd.astype(x.dtype, copy=False))
        if y.requires_grad:
            y._accumulate((-gd).astype(y.dtype, copy=False))

    return _node(np.asarray(value, dtype=x.dtype), (x, y), backward_fn)


def _topo_order(root):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss, params=None):
    """Populate gradients of every tensor reachable from a scalar loss.

    Interior tape state is released afterwards (one tape per pass).  When
    ``params`` is given, any listed tensor the loss does not reach gets an
    all-zero gradient, so optimizers always see a full gradient set.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in order:
        if node._backward is not None:  # interior node: free tape + scratch grads
            node._parents = ()
            node._backward = None
            node.grad = None
    if params is not None:
        for p in params:
            if p.grad is None:
                p.zero_grad()


def max_rel_gradient_error(analytic, numeric, floor):
    """Largest elementwise |a-n| / max(|a|, |n|, floor).

    The floor keeps entries whose true gradient sits below the
    finite-difference noise level (roughly ulp(loss)/eps) from dominating
    the comparison: such entries are checked absolutely, at floor*rtol.
    Suggested floors: 5e-2 for float32 models, 1e-6 for float64.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float((np.abs(a - n) / denom).max())


def fd_gradient(f, tensors, eps=1e-3):
    """Central-difference gradient of ``f()`` w.r.t. each tensor's elements.

    ``f`` is a zero-argument callable returning a float; it is re-evaluated
    with each coordinate displaced by +/- eps in place.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    grads = []
    for t in tensors:
        flat = t.data.flat
        g = np.empty(t.data.size, dtype=np.float64)
        for i in range(t.data.size):
            saved = flat[i]
            flat[i] = saved + eps
            f_plus = f()
            flat[i] = saved - eps
            f_minus = f()
            flat[i] = saved
            g[i] = (f_plus - f_minus) / (2.0 * eps)
        grads.append(g.reshape(t.data.shape))
    return grads
