"""Luma-channel quality metrics and the throughput benchmark.

PSNR and SSIM are measured on the Y plane only.  The default Y transform
is the studio-swing BT.601 form (Y in [16, 235]) that numeric-environment
reference implementations use, which differs from the codec's full-range
transform; both are selectable.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import codec, data
from .tensor import Tensor

Y_MODES = ("studio", "full")


def to_y(rgb, y_mode="studio"):
    """Float64 luma plane from an RGB image in [0, 255]."""
    rgb = np.asarray(rgb, np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    if y_mode == "studio":
        return 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0
    if y_mode == "full":
        return 0.299 * r + 0.587 * g + 0.114 * b
    raise ValueError(f"unknown y_mode {y_mode!r} (choices: {Y_MODES})")


def psnr(a, b, peak=255.0):
    """10*log10(peak^2 / MSE); +inf when the planes are identical."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    err = np.mean((a - b) ** 2)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def psnr_y(a, b, y_mode="studio"):
    return psnr(to_y(a, y_mode), to_y(b, y_mode))


def _gaussian_window(size=11, sigma=1.5):
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def _filter_valid(plane, window):
    """Separable valid-mode correlation with a 1-D window."""
    out = sliding_window_view(plane, window.size, axis=0) @ window
    out = sliding_window_view(out, window.size, axis=1) @ window
    return out


def ssim_plane(a, b, peak=255.0, window_size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Mean local SSIM: Gaussian-weighted statistics on the valid region."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < window_size:
        raise ValueError(f"image {a.shape} smaller than the {window_size}x{window_size} window")
    win = _gaussian_window(window_size, sigma)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2

    mu_a = _filter_valid(a, win)
    mu_b = _filter_valid(b, win)
    var_a = _filter_valid(a * a, win) - mu_a * mu_a
    var_b = _filter_valid(b * b, win) - mu_b * mu_b
    cov = _filter_valid(a * b, win) - mu_a * mu_b

    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim_y(a, b, y_mode="studio"):
    return ssim_plane(to_y(a, y_mode), to_y(b, y_mode))


# --- model evaluation ---------------------------------------------------------


@dataclass
class HeadMetrics:
    head: int  # 0 stands for the JPEG baseline (no restoration)
    psnr_db: float
    ssim: float
    identical_images: int = 0  # images excluded from the PSNR mean (zero error)


@dataclass
class MetricReport:
    dataset: str
    qf: int
    image_count: int
    baseline: HeadMetrics = None
    heads: list = field(default_factory=list)


def restore_image(net, degraded, head):
    """Run one head of the network over a full degraded uint8 image."""
    x = degraded.astype(np.float32).transpose(2, 0, 1)[None] / 255.0
    out = net.forward_heads(Tensor(x), [head])[head]
    return out.data[0].transpose(1, 2, 0)


def to_uint8(img_float01):
    return np.rint(np.clip(img_float01, 0.0, 1.0) * 255.0).astype(np.uint8)


def _mean_metrics(head, per_image):
    psnrs = [p for p, _ in per_image if math.isfinite(p)]
    ssims = [s for _, s in per_image]
    excluded = len(per_image) - len(psnrs)
    mean_psnr = float(np.mean(psnrs)) if psnrs else math.inf
    return HeadMetrics(head, mean_psnr, float(np.mean(ssims)), excluded)


def evaluate(net, dataset_dir, qf, heads=None, subsampling="420", y_mode="studio",
             quantize_output=True):
    """Per-head mean y-PSNR/y-SSIM over a directory, plus the JPEG baseline.

    Each image is degraded at ``qf``, restored at every requested head, and
    compared against the original.  Restored images are quantized to 8 bits
    before measuring by default, matching file-based evaluation.
    """
    heads = list(net.config.head_indices if heads is None else heads)
    paths, _ = data.scan_dataset(dataset_dir)
    baseline_scores = []
    head_scores = {h: [] for h in heads}
    for path in paths:
        original = codec.read_image(path)
        degraded = codec.degrade(original, qf, subsampling)
        baseline_scores.append((psnr_y(original, degraded, y_mode),
                                ssim_y(original, degraded, y_mode)))
        x = degraded.astype(np.float32).transpose(2, 0, 1)[None] / 255.0
        outputs = net.forward_heads(Tensor(x), heads)
        for h in heads:
            restored = outputs[h].data[0].transpose(1, 2, 0)
            restored = to_uint8(restored) if quantize_output else np.clip(restored, 0, 1) * 255.0
            head_scores[h].append((psnr_y(original, restored, y_mode),
                                   ssim_y(original, restored, y_mode)))
    return MetricReport(
        dataset=str(dataset_dir),
        qf=int(qf),
        image_count=len(paths),
        baseline=_mean_metrics(0, baseline_scores),
        heads=[_mean_metrics(h, head_scores[h]) for h in heads],
    )


# --- throughput ---------------------------------------------------------------


@dataclass
class ThroughputEntry:
    head: int
    mcps: float  # million color pixels per second, from the best repeat
    seconds: float  # best repeat wall time
    iterations: int


@dataclass
class ThroughputReport:
    image_size: tuple
    warmup: int
    iterations: int
    repeats: int
    entries: list = field(default_factory=list)


def bench_throughput(net, image_size=(96, 96), heads=(1,), warmup=2, iterations=5,
                     repeats=3, seed=0):
    """Wall-clock forward throughput per head on a synthetic input.

    Color pixels are h*w*3 per forward pass.  Each head is timed over
    ``repeats`` batches of ``iterations`` forwards and the fastest batch is
    reported; the minimum filters scheduler noise, which otherwise swamps
    the strictly-increasing per-head compute on busy machines.
    """
    h, w = image_size
    rng = np.random.default_rng(seed)
    x = Tensor(rng.random((1, net.config.image_channels, h, w), dtype=np.float32))
    report = ThroughputReport(image_size=(h, w), warmup=warmup,
                              iterations=iterations, repeats=repeats)
    for head in heads:
        for _ in range(warmup):
            net.forward_heads(x, [head])
        best = math.inf
        for _ in range(repeats):
            start = time.perf_counter()
            for _ in range(iterations):
                net.forward_heads(x, [head])
            best = min(best, time.perf_counter() - start)
        mcps = (h * w * 3 * iterations) / (1e6 * best)
        report.entries.append(ThroughputEntry(int(head), mcps, best, iterations))
    return report
