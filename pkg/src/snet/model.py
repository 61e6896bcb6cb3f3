"""Scalable encoder-decoder restoration network with per-unit output heads.

A small convolutional encoder lifts the image into a fixed feature domain,
a chain of residual units refines the features, and a single shared
decoder maps features back to an image.  Because the decoder is attached
after *every* unit during training, inference may stop at any unit depth
("head") and still produce a valid restoration; a model truncated to k
units is exactly equivalent to reading head k of the full model.

Checkpoints are a self-describing binary container: magic, format
version, the embedded architecture record, then named float32
little-endian parameter blobs in canonical order.
"""

import io
import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from .tensor import ConvParams, Tensor, add, conv2d_same, mse, relu, scale

UNIT_KINDS = ("classic", "advanced")
LOSS_MODES = ("greedy", "columnar")
UNIT_KERNEL = 3

CHECKPOINT_MAGIC = b"SNET"
CHECKPOINT_VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointConfigError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


@dataclass(frozen=True)
class SNetConfig:
    """Architecture description; all cross-field rules checked on build."""

    channels: int = 256
    units: int = 8
    unit_kind: str = "advanced"
    encoder_kernels: tuple = (5, 3)
    decoder_kernels: tuple = (3, 5)
    image_channels: int = 3
    loss_mode: str = "greedy"
    include_metric0: bool = False

    def __post_init__(self):
        object.__setattr__(self, "encoder_kernels", tuple(int(k) for k in self.encoder_kernels))
        object.__setattr__(self, "decoder_kernels", tuple(int(k) for k in self.decoder_kernels))
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")
        if self.units < 1:
            raise ValueError(f"units must be >= 1, got {self.units}")
        if self.image_channels < 1:
            raise ValueError(f"image_channels must be >= 1, got {self.image_channels}")
        if self.unit_kind not in UNIT_KINDS:
            raise ValueError(f"unit_kind must be one of {UNIT_KINDS}, got {self.unit_kind!r}")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if not self.encoder_kernels:
            raise ValueError("encoder_kernels must not be empty")
        for k in self.encoder_kernels + self.decoder_kernels:
            if k < 1 or k % 2 == 0:
                raise ValueError(f"kernel sizes must be odd and positive, got {k}")
        if self.decoder_kernels != tuple(reversed(self.encoder_kernels)):
            raise ValueError(
                f"decoder kernels {self.decoder_kernels} must mirror encoder kernels "
                f"{self.encoder_kernels} in reverse order")

    @property
    def head_indices(self):
        first = 0 if self.include_metric0 else 1
        return tuple(range(first, self.units + 1))

    @property
    def convs_per_unit(self):
        return 2 if self.unit_kind == "advanced" else 1

    def to_dict(self):
        return {
            "channels": self.channels,
            "units": self.units,
            "unit_kind": self.unit_kind,
            "encoder_kernels": list(self.encoder_kernels),
            "decoder_kernels": list(self.decoder_kernels),
            "image_channels": self.image_channels,
            "loss_mode": self.loss_mode,
            "include_metric0": self.include_metric0,
        }

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown architecture keys: {sorted(unknown)}")
        return cls(**d)


class SNetModel:
    """Parameter container plus the forward graph builders."""

    def __init__(self, config, encoder, units, decoder):
        self.config = config
        self.encoder = list(encoder)
        self.units = [list(u) for u in units]
        self.decoder = list(decoder)
        if len(self.units) != config.units:
            raise ValueError(f"expected {config.units} units, got {len(self.units)}")

    # --- parameter access -------------------------------------------------

    def named_parameters(self):
        out = []
        for i, p in enumerate(self.encoder):
            out.append((f"encoder.{i}.w", p.weights))
            out.append((f"encoder.{i}.b", p.bias))
        for i, unit in enumerate(self.units):
            for j, p in enumerate(unit):
                out.append((f"unit.{i}.conv.{j}.w", p.weights))
                out.append((f"unit.{i}.conv.{j}.b", p.bias))
        for i, p in enumerate(self.decoder):
            out.append((f"decoder.{i}.w", p.weights))
            out.append((f"decoder.{i}.b", p.bias))
        return out

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    @property
    def dtype(self):
        return self.encoder[0].weights.dtype

    # --- forward ----------------------------------------------------------

    def encode(self, x):
        f = x
        for p in self.encoder:
            f = relu(conv2d_same(f, p))
        return f

    def decode(self, f):
        for p in self.decoder[:-1]:
            f = relu(conv2d_same(f, p))
        return conv2d_same(f, self.decoder[-1])  # no activation: regression output

    def unit_forward(self, f, index):
        return unit_forward(f, self.units[index], self.config.unit_kind)

    def forward_heads(self, x, heads):
        """Restored image per requested head; units run only up to max(heads)."""
        heads = sorted(set(int(h) for h in heads))
        valid = self.config.head_indices
        for h in heads:
            if h not in valid:
                raise ValueError(f"head {h} not available (valid: {list(valid)})")
        if not heads:
            raise ValueError("at least one head must be requested")
        outputs = {}
        f = self.encode(x)
        if 0 in heads:
            outputs[0] = self.decode(f)
        for i in range(1, max(heads) + 1):
            f = self.unit_forward(f, i - 1)
            if i in heads:
                outputs[i] = self.decode(f)
        return outputs

    def forward_all(self, x):
        outputs = self.forward_heads(x, self.config.head_indices)
        return [outputs[h] for h in self.config.head_indices]


def unit_forward(f, convs, kind):
    """Residual unit: f + branch(f), where the branch is conv-relu (classic)
    or conv-relu-conv (advanced)."""
    if kind == "classic":
        branch = relu(conv2d_same(f, convs[0]))
    elif kind == "advanced":
        branch = conv2d_same(relu(conv2d_same(f, convs[0])), convs[1])
    else:
        raise ValueError(f"unknown unit kind {kind!r}")
    return add(f, branch)


def _layer_plan(config):
    """(name-prefix, out_ch, in_ch, k) for every conv layer, canonical order."""
    ch, img = config.channels, config.image_channels
    plan = []
    in_ch = img
    for i, k in enumerate(config.encoder_kernels):
        plan.append((f"encoder.{i}", ch, in_ch, k))
        in_ch = ch
    for i in range(config.units):
        for j in range(config.convs_per_unit):
            plan.append((f"unit.{i}.conv.{j}", ch, ch, UNIT_KERNEL))
    n_dec = len(config.decoder_kernels)
    for i, k in enumerate(config.decoder_kernels):
        out = img if i == n_dec - 1 else ch
        plan.append((f"decoder.{i}", out, ch, k))
    return plan


def _assemble(config, make_conv):
    convs = {name: make_conv(name, oc, ic, k) for name, oc, ic, k in _layer_plan(config)}
    encoder = [convs[f"encoder.{i}"] for i in range(len(config.encoder_kernels))]
    units = [[convs[f"unit.{i}.conv.{j}"] for j in range(config.convs_per_unit)]
             for i in range(config.units)]
    decoder = [convs[f"decoder.{i}"] for i in range(len(config.decoder_kernels))]
    return SNetModel(config, encoder, units, decoder)


def init_params(config, seed, dtype=np.float32):
    """He-normal weights (std = sqrt(2 / fan-in)), zero biases, fixed seed."""
    rng = np.random.default_rng(seed)

    def make_conv(name, oc, ic, k):
        std = np.sqrt(2.0 / (ic * k * k))
        w = (rng.standard_normal((oc, ic, k, k)) * std).astype(dtype)
        return ConvParams(Tensor(w, requires_grad=True),
                          Tensor(np.zeros(oc, dtype=dtype), requires_grad=True))

    return _assemble(config, make_conv)


def zero_params(config, dtype=np.float32):
    """All-zero parameter set (checkpoint loading scaffold)."""

    def make_conv(name, oc, ic, k):
        return ConvParams(Tensor(np.zeros((oc, ic, k, k), dtype=dtype), requires_grad=True),
                          Tensor(np.zeros(oc, dtype=dtype), requires_grad=True))

    return _assemble(config, make_conv)


def truncate(model, k):
    """A fresh k-unit model carrying copies of the parent's parameters."""
    cfg = model.config
    if not 1 <= k <= cfg.units:
        raise ValueError(f"cannot truncate a {cfg.units}-unit model to {k} units")

    def copy_conv(p):
        return ConvParams(Tensor(p.weights.data.copy(), requires_grad=True),
                          Tensor(p.bias.data.copy(), requires_grad=True))

    return SNetModel(
        replace(cfg, units=k),
        [copy_conv(p) for p in model.encoder],
        [[copy_conv(p) for p in unit] for unit in model.units[:k]],
        [copy_conv(p) for p in model.decoder],
    )


# --- losses -----------------------------------------------------------------

def head_losses(outputs, target):
    return [mse(out, target) for out in outputs]


def average_losses(losses):
    """Equal weights summing to one across the given loss terms."""
    total = losses[0]
    for term in losses[1:]:
        total = add(total, term)
    return scale(total, 1.0 / len(losses)) if len(losses) > 1 else total


def greedy_loss(outputs, target):
    """Mean of the per-head MSE terms (equal weights, summing to one)."""
    return average_losses(head_losses(outputs, target))


def columnar_loss(outputs, target):
    """Conventional single-head training: penalize only the deepest output."""
    return mse(outputs[-1], target)


# --- parameter accounting -----------------------------------------------------

@dataclass
class ParamCounts:
    encoder: int
    decoder: int
    per_unit: int
    cumulative: list  # through unit k, k = 1..units; includes encoder+decoder

    @staticmethod
    def in_m(count):
        return count / 2 ** 20

    @property
    def total(self):
        return self.cumulative[-1]


def count_params(config):
    """Exact per-block parameter counts and cumulative totals through each unit."""
    plan = _layer_plan(config)
    sizes = {name: oc * ic * k * k + oc for name, oc, ic, k in plan}
    encoder = sum(v for n, v in sizes.items() if n.startswith("encoder."))
    decoder = sum(v for n, v in sizes.items() if n.startswith("decoder."))
    per_unit = sum(v for n, v in sizes.items() if n.startswith("unit.0."))
    cumulative = [encoder + decoder + per_unit * k for k in range(1, config.units + 1)]
    return ParamCounts(encoder, decoder, per_unit, cumulative)


# --- checkpoints ----------------------------------------------------------------

def _write_named_blobs(buf, named_arrays):
    """``(count, then name/length-prefixed float32 LE blobs)`` section."""
    buf.write(struct.pack("<I", len(named_arrays)))
    for name, arr in named_arrays:
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<I", len(blob)))
        buf.write(blob)


def _read_exact(f, n, path, what):
    data = f.read(n)
    if len(data) != n:
        raise CheckpointCorruptError(f"{path}: truncated while reading {what}")
    return data


def _read_named_blobs(f, expected, path):
    """Read blobs written by ``_write_named_blobs``; names, order, and byte
    lengths must match ``expected`` [(name, shape)] exactly."""
    (blob_count,) = struct.unpack("<I", _read_exact(f, 4, path, "blob count"))
    if blob_count != len(expected):
        raise CheckpointCorruptError(
            f"{path}: {blob_count} parameter blobs, expected {len(expected)}")
    arrays = []
    for name, shape in expected:
        (name_len,) = struct.unpack("<H", _read_exact(f, 2, path, "blob name length"))
        got_name = _read_exact(f, name_len, path, "blob name").decode("utf-8")
        if got_name != name:
            raise CheckpointCorruptError(
                f"{path}: blob {got_name!r} out of canonical order (expected {name!r})")
        (blob_len,) = struct.unpack("<I", _read_exact(f, 4, path, "blob length"))
        expected_len = int(np.prod(shape)) * 4
        if blob_len != expected_len:
            raise CheckpointCorruptError(
                f"{path}: blob {name!r} holds {blob_len} bytes, expected {expected_len}")
        raw = _read_exact(f, blob_len, path, f"blob {name!r}")
        arrays.append(np.frombuffer(raw, dtype="<f4").reshape(shape).copy())
    return arrays


def save_checkpoint(path, model):
    if model.dtype != np.float32:
        raise ValueError("checkpoints store float32 parameters; model is "
                         f"{np.dtype(model.dtype).name}")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    cfg = json.dumps(model.config.to_dict(), sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(cfg)))
    buf.write(cfg)
    _write_named_blobs(buf, [(n, t.data) for n, t in model.named_parameters()])
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path, expected_config=None):
    """Load (model, config); rejects version, config, and length mismatches."""
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointCorruptError(f"{path}: not a checkpoint file (magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(f, 4, path, "version"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointVersionError(
                f"{path}: format version {version} != supported {CHECKPOINT_VERSION}")
        (cfg_len,) = struct.unpack("<I", _read_exact(f, 4, path, "config length"))
        cfg_raw = _read_exact(f, cfg_len, path, "config record")
        try:
            config = SNetConfig.from_dict(json.loads(cfg_raw.decode("utf-8")))
        except (ValueError, TypeError) as exc:
            raise CheckpointCorruptError(f"{path}: bad embedded config: {exc}") from exc
        if expected_config is not None and config != expected_config:
            raise CheckpointConfigError(
                f"{path}: checkpoint architecture {config.to_dict()} does not match "
                f"expected {expected_config.to_dict()}")

        model = zero_params(config)
        named = model.named_parameters()
        arrays = _read_named_blobs(f, [(n, t.data.shape) for n, t in named], path)
        for (name, tensor), arr in zip(named, arrays):
            tensor.data = arr
        trailing = f.read(1)
        if trailing:
            raise CheckpointCorruptError(f"{path}: trailing bytes after last blob")
    return model, config
