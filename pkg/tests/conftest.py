import numpy as np
import pytest

import snet.kernels as kernels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=kernels.available_backends())
def kernel_backend(request):
    """Run the decorated test once per available kernel backend."""
    previous = kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(previous)


def synthetic_image(seed, h=96, w=96):
    """A deterministic photo-like RGB test image.

    Smooth low-frequency shading plus a few hard-edged shapes and mild
    blurred texture: enough structure for block-DCT quantization to create
    visible artifacts, which is what the codec and training tests need.
    """
    g = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((h, w, 3), dtype=np.float64)
    for ch in range(3):
        base = 128.0 + 90.0 * np.sin(2 * np.pi * (g.uniform(0.5, 2.5) * xx / w
                                                  + g.uniform(0.5, 2.5) * yy / h
                                                  + g.uniform()))
        img[:, :, ch] = base
    for _ in range(6):
        cy, cx = g.uniform(0, h), g.uniform(0, w)
        ry, rx = g.uniform(h / 12, h / 3), g.uniform(w / 12, w / 3)
        mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1.0
        shade = g.uniform(-70, 70, size=3)
        img[mask] += shade
    noise = g.normal(0.0, 14.0, size=(h, w, 3))
    # cheap 3x3 box blur so the texture is not pure white noise
    acc = np.zeros_like(noise)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            acc += np.roll(np.roll(noise, dy, axis=0), dx, axis=1)
    img += acc / 9.0
    return np.clip(img, 0, 255).astype(np.uint8)


@pytest.fixture
def natural_images():
    return [synthetic_image(seed) for seed in range(5)]
