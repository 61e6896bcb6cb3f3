"""Convolution kernel backends.

Two interchangeable implementations of the three hot operations
(forward, input gradient, weight gradient):

* ``native`` -- compiled extension built from ``_native.pyx``
* ``numpy``  -- pure-NumPy im2col/tensordot fallback

The compiled backend is preferred when its extension module imports;
``SNET_KERNELS=numpy|native|auto`` overrides the choice, and
:func:`use_backend` switches at runtime (used by the comparison
benchmark and the cross-backend tests).
"""

import os

from . import numpy_backend

try:
    from . import _native as native_backend
except ImportError:
    native_backend = None

_BACKENDS = {"numpy": numpy_backend}
if native_backend is not None:
    _BACKENDS["native"] = native_backend


def _default_backend():
    choice = os.environ.get("SNET_KERNELS", "auto").lower()
    if choice == "auto":
        return _BACKENDS.get("native", numpy_backend)
    if choice not in _BACKENDS:
        available = ", ".join(sorted(_BACKENDS))
        raise RuntimeError(
            f"SNET_KERNELS={choice!r} is not available (choices: {available}, auto)")
    return _BACKENDS[choice]


_active = _default_backend()


def available_backends():
    return sorted(_BACKENDS)


def backend_name():
    return _active.NAME


def use_backend(name):
    """Select the kernel backend by name; returns the previous name."""
    global _active
    if name not in _BACKENDS:
        available = ", ".join(sorted(_BACKENDS))
        raise ValueError(f"unknown kernel backend {name!r} (choices: {available})")
    previous = backend_name()
    _active = _BACKENDS[name]
    return previous


def conv2d_forward(x, w, b):
    return _active.conv2d_forward(x, w, b)


def conv2d_grad_input(dy, w):
    return _active.conv2d_grad_input(dy, w)


def conv2d_grad_weights(dy, x, k):
    return _active.conv2d_grad_weights(dy, x, k)
