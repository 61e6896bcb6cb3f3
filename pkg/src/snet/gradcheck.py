"""Reverse-mode vs central-finite-difference comparison on a micro network."""

from dataclasses import dataclass

import numpy as np

from .model import SNetConfig, greedy_loss, init_params
from .tensor import Tensor, backward, fd_gradient, max_rel_gradient_error

# (rtol, denominator floor, eps) per dtype; the floor absorbs fd noise
# ~ulp(loss)/eps on entries whose gradient is too small to resolve, and the
# float64 step is small enough that fd truncation stays below its rtol.
DEFAULT_TOLERANCES = {
    np.dtype(np.float32): (1e-2, 5e-2, 1e-3),
    np.dtype(np.float64): (1e-4, 1e-6, 1e-4),
}


@dataclass
class GradCheckResult:
    entries: list  # (parameter name, floored max relative error)
    rtol: float
    floor: float
    eps: float
    dtype: str

    @property
    def worst(self):
        return max(err for _, err in self.entries)

    @property
    def passed(self):
        return self.worst < self.rtol


def run_gradcheck(channels=4, units=2, unit_kind="advanced", spatial=8, batch=1,
                  dtype=np.float32, eps=None, seed=0, rtol=None, floor=None):
    """Check every parameter gradient of the multi-head loss on a tiny net.

    Biases are randomized away from the training init's exact zeros: with
    zero biases, dead-ReLU regions propagate exact zeros through the
    residual shortcuts and park many preactivations precisely on the ReLU
    kink, where the loss is not differentiable and one-sided
    finite-difference estimates legitimately disagree with the chosen
    subgradient.  A generic evaluation point avoids the kinks.
    """
    dtype = np.dtype(dtype)
    default_rtol, default_floor, default_eps = DEFAULT_TOLERANCES[dtype]
    rtol = default_rtol if rtol is None else rtol
    floor = default_floor if floor is None else floor
    eps = default_eps if eps is None else eps

    config = SNetConfig(channels=channels, units=units, unit_kind=unit_kind)
    net = init_params(config, seed=seed, dtype=dtype)
    rng = np.random.default_rng(seed + 1)
    for _, tensor in net.named_parameters():
        if tensor.data.ndim == 1:  # bias
            tensor.data = rng.uniform(-0.2, 0.2, tensor.data.shape).astype(dtype)
    x = Tensor(rng.random((batch, config.image_channels, spatial, spatial)).astype(dtype))
    target = Tensor(rng.random(x.shape).astype(dtype))

    def loss_value():
        return greedy_loss(net.forward_all(x), target)

    named = net.named_parameters()
    params = [t for _, t in named]
    backward(loss_value(), params=params)
    analytic = [p.grad.copy() for p in params]
    numeric = fd_gradient(lambda: loss_value().item(), params, eps=eps)

    entries = [(name, max_rel_gradient_error(a, n, floor=floor))
               for (name, _), a, n in zip(named, analytic, numeric)]
    return GradCheckResult(entries=entries, rtol=rtol, floor=floor, eps=eps,
                           dtype=dtype.name)
