"""Dataset scanning, randomized-stride patch extraction, batch assembly.

Patch pairs are cut from (degraded, original) image pairs at identical
coordinates on a raster whose step is drawn uniformly from
[step_min, step_max] after every patch.  Keeping the step off multiples
of eight means patches see the codec's block grid at varying phases.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import codec


class EmptyDatasetError(Exception):
    """Directory exists but holds no readable images."""


@dataclass(frozen=True)
class SamplerConfig:
    patch: int = 48
    step_min: int = 37
    step_max: int = 62
    seed: int = 0
    qf: int = 20

    def __post_init__(self):
        if self.patch < 1:
            raise ValueError("patch size must be positive")
        if not 1 <= self.step_min <= self.step_max:
            raise ValueError(f"need 1 <= step_min <= step_max, got "
                             f"[{self.step_min}, {self.step_max}]")
        codec._check_quality(self.qf)


@dataclass
class PatchPair:
    """Co-located degraded/original patches, CHW float32 in [0, 1]."""
    input: np.ndarray
    target: np.ndarray
    y: int
    x: int


def derive_rng(root_seed, *tags):
    """Deterministic sub-generator for (root, purpose, epoch, ...) tuples."""
    return np.random.default_rng(np.random.SeedSequence((int(root_seed),) + tuple(tags)))


def scan_dataset(directory):
    """Sorted list of readable image paths plus a skipped-file count."""
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"dataset directory not found: {directory}")
    paths, skipped = [], 0
    for name in sorted(os.listdir(directory)):
        full = os.path.join(directory, name)
        if not os.path.isfile(full):
            continue
        with open(full, "rb") as f:
            magic = f.read(2)
        if magic == b"P6":
            paths.append(full)
        else:
            skipped += 1
    if not paths:
        raise EmptyDatasetError(f"no readable images in {directory} "
                                f"({skipped} files skipped)")
    return paths, skipped


def _axis_positions(dim, patch, step_min, step_max, rng):
    if dim < patch:
        raise ValueError(f"image extent {dim} smaller than patch {patch}")
    positions = [0]
    pos = 0
    last = dim - patch
    while True:
        pos += int(rng.integers(step_min, step_max + 1))
        if pos >= last:
            if last > positions[-1]:
                positions.append(last)  # clamp the final position to fit
            return positions
        positions.append(pos)


def extract_patches(original, degraded, cfg, rng):
    """All patch pairs for one image; row positions first, then per-row columns."""
    if original.shape != degraded.shape:
        raise ValueError(f"image pair shapes differ: {original.shape} vs {degraded.shape}")
    h, w = original.shape[:2]
    orig = original.astype(np.float32) / 255.0
    degr = degraded.astype(np.float32) / 255.0
    pairs = []
    for y in _axis_positions(h, cfg.patch, cfg.step_min, cfg.step_max, rng):
        for x in _axis_positions(w, cfg.patch, cfg.step_min, cfg.step_max, rng):
            sl = np.s_[y:y + cfg.patch, x:x + cfg.patch]
            pairs.append(PatchPair(
                input=np.ascontiguousarray(degr[sl].transpose(2, 0, 1)),
                target=np.ascontiguousarray(orig[sl].transpose(2, 0, 1)),
                y=y, x=x))
    return pairs


def stack_pairs(pairs):
    x = np.stack([p.input for p in pairs])
    y = np.stack([p.target for p in pairs])
    return x, y


def batches(pool, batch_size, rng):
    """Shuffle the pool and yield full (input, target) batches; the final
    partial batch is dropped, and iterator exhaustion signals epoch end."""
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    order = rng.permutation(len(pool))
    for start in range(0, len(pool) - batch_size + 1, batch_size):
        chunk = [pool[i] for i in order[start:start + batch_size]]
        yield stack_pairs(chunk)


class PairSource:
    """Patch-pair pools over a dataset directory, one pool per epoch.

    Originals are read and degraded once (degradation is deterministic);
    patch positions are redrawn per epoch unless ``redraw_per_epoch`` is
    off, in which case every epoch reuses the epoch-0 positions.
    """

    def __init__(self, directory, cfg, subsampling="420", redraw_per_epoch=True):
        self.cfg = cfg
        self.paths, self.skipped = scan_dataset(directory)
        self.redraw_per_epoch = redraw_per_epoch
        self._images = [codec.read_image(p) for p in self.paths]
        self._degraded = [codec.degrade(img, cfg.qf, subsampling) for img in self._images]

    def epoch_pool(self, epoch):
        tag = epoch if self.redraw_per_epoch else 0
        pool = []
        for i, (orig, degr) in enumerate(zip(self._images, self._degraded)):
            rng = derive_rng(self.cfg.seed, 1, tag, i)
            pool.extend(extract_patches(orig, degr, self.cfg, rng))
        return pool

    def epoch_batches(self, epoch, batch_size):
        pool = self.epoch_pool(epoch)
        tag = epoch if self.redraw_per_epoch else 0
        return batches(pool, batch_size, derive_rng(self.cfg.seed, 2, tag)), len(pool)
