"""Block-DCT quantization simulator for JPEG-style degradation, plus PPM I/O.

The encode-decode round trip is modeled without entropy coding: color
transform, optional 4:2:0 chroma subsampling, per-8x8-block DCT,
divide-and-round by quality-scaled quantization tables, and the inverse
chain.  Quantizing the DCT coefficients is where JPEG loses information,
so this reproduces the artifact structure of a real encoder while staying
fully deterministic.
"""

import numpy as np

BLOCK = 8

# Base luminance/chrominance quantization tables (ITU-T T.81 Annex K).
BASE_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.int64)

BASE_CHROMA = np.array([
    [17, 18, 24, 47, 99, 99, 99, 99],
    [18, 21, 26, 66, 99, 99, 99, 99],
    [24, 26, 56, 99, 99, 99, 99, 99],
    [47, 66, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
    [99, 99, 99, 99, 99, 99, 99, 99],
], dtype=np.int64)

SUBSAMPLING_MODES = {"444": "444", "4:4:4": "444", "420": "420", "4:2:0": "420"}


class ImageFormatError(Exception):
    """Base class for image file format problems."""


class MalformedImageError(ImageFormatError):
    """File claims a supported format but its contents are broken."""


class UnsupportedImageFormatError(ImageFormatError):
    """File is in a format this package does not read."""


def _check_quality(qf):
    if not isinstance(qf, (int, np.integer)):
        raise ValueError(f"quality factor must be an integer, got {type(qf).__name__}")
    if not 1 <= qf <= 100:
        raise ValueError(f"quality factor must be in [1, 100], got {qf}")
    return int(qf)


def scale_tables(qf, base_luma=BASE_LUMA, base_chroma=BASE_CHROMA):
    """IJG quality scaling: 5000/qf below 50, 200-2qf above, entries in [1,255]."""
    qf = _check_quality(qf)
    scale = 5000 // qf if qf < 50 else 200 - 2 * qf
    luma = np.clip((np.asarray(base_luma, np.int64) * scale + 50) // 100, 1, 255)
    chroma = np.clip((np.asarray(base_chroma, np.int64) * scale + 50) // 100, 1, 255)
    return luma, chroma


# Orthonormal type-II DCT basis: dct8(b) = M @ b @ M.T, idct8(c) = M.T @ c @ M
_DCT_M = np.zeros((BLOCK, BLOCK), dtype=np.float64)
for _u in range(BLOCK):
    _a = np.sqrt(1.0 / BLOCK) if _u == 0 else np.sqrt(2.0 / BLOCK)
    for _j in range(BLOCK):
        _DCT_M[_u, _j] = _a * np.cos((2 * _j + 1) * _u * np.pi / (2 * BLOCK))


def dct8(block):
    """Orthonormal 8x8 type-II DCT; accepts a single block or a stack."""
    return _DCT_M @ np.asarray(block, np.float64) @ _DCT_M.T


def idct8(coef):
    return _DCT_M.T @ np.asarray(coef, np.float64) @ _DCT_M


def rgb_to_ycbcr(rgb):
    """Full-range BT.601 RGB -> YCbCr on float planes in [0, 255]."""
    rgb = np.asarray(rgb, np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168735892 * r - 0.331264108 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418687589 * g - 0.081312411 * b
    return np.stack([y, cb, cr], axis=-1)


def ycbcr_to_rgb(ycc):
    """Inverse BT.601 transform; output clamped to [0, 255] float."""
    ycc = np.asarray(ycc, np.float64)
    y, cb, cr = ycc[..., 0], ycc[..., 1] - 128.0, ycc[..., 2] - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136286 * cb - 0.714136286 * cr
    b = y + 1.772 * cb
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 255.0)


def _pad_to_multiple(plane, size):
    h, w = plane.shape
    ph = (-h) % size
    pw = (-w) % size
    if ph or pw:
        plane = np.pad(plane, ((0, ph), (0, pw)), mode="edge")
    return plane


def _blockify(plane):
    h, w = plane.shape
    return (plane.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK)
                 .transpose(0, 2, 1, 3)
                 .reshape(-1, BLOCK, BLOCK))


def _unblockify(blocks, h, w):
    return (blocks.reshape(h // BLOCK, w // BLOCK, BLOCK, BLOCK)
                  .transpose(0, 2, 1, 3)
                  .reshape(h, w))


def _quantize_plane(plane, table):
    """Level shift, blockwise DCT, divide-round-multiply, inverse DCT."""
    padded = _pad_to_multiple(plane, BLOCK)
    ph, pw = padded.shape
    blocks = _blockify(padded) - 128.0
    coefs = dct8(blocks)
    coefs = np.rint(coefs / table) * table
    rec = idct8(coefs) + 128.0
    return _unblockify(rec, ph, pw)[:plane.shape[0], :plane.shape[1]]


def _downsample2(plane):
    p = _pad_to_multiple(plane, 2)
    return 0.25 * (p[0::2, 0::2] + p[0::2, 1::2] + p[1::2, 0::2] + p[1::2, 1::2])


def _upsample2(plane, h, w):
    return np.repeat(np.repeat(plane, 2, axis=0), 2, axis=1)[:h, :w]


def degrade(img, qf, subsampling="420"):
    """Round-trip an RGB image through the quantization pipeline.

    Returns a new uint8 image with JPEG-style artifacts at the given
    quality factor.  Sizes that are not multiples of 8 are edge-replicated
    before blocking and cropped afterwards.
    """
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) RGB image, got shape {img.shape}")
    h, w = img.shape[:2]
    if h == 0 or w == 0:
        raise ValueError("degenerate zero-area image")
    if h < BLOCK or w < BLOCK:
        raise ValueError(f"image must be at least {BLOCK}x{BLOCK} for codec use, got {h}x{w}")
    mode = SUBSAMPLING_MODES.get(str(subsampling))
    if mode is None:
        raise ValueError(f"unknown subsampling mode {subsampling!r} "
                         f"(choices: {sorted(set(SUBSAMPLING_MODES))})")
    luma_q, chroma_q = scale_tables(qf)

    ycc = rgb_to_ycbcr(img)
    y = _quantize_plane(ycc[:, :, 0], luma_q)
    if mode == "420":
        cb = _upsample2(_quantize_plane(_downsample2(ycc[:, :, 1]), chroma_q), h, w)
        cr = _upsample2(_quantize_plane(_downsample2(ycc[:, :, 2]), chroma_q), h, w)
    else:
        cb = _quantize_plane(ycc[:, :, 1], chroma_q)
        cr = _quantize_plane(ycc[:, :, 2], chroma_q)
    rgb = ycbcr_to_rgb(np.stack([y, cb, cr], axis=-1))
    return np.rint(rgb).astype(np.uint8)


def read_image(path):
    """Read a binary (P6) PPM file into an (h, w, 3) uint8 array."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 2:
        raise MalformedImageError(f"{path}: file too short to hold an image header")
    magic = raw[:2]
    if magic != b"P6":
        raise UnsupportedImageFormatError(
            f"{path}: unsupported format (magic {magic!r}); only binary PPM (P6) is read")

    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedImageError(f"{path}: truncated PPM header")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace byte after maxval

    try:
        w, h, maxval = (int(t) for t in fields)
    except ValueError as exc:
        raise MalformedImageError(f"{path}: non-numeric PPM header field") from exc
    if w < 1 or h < 1:
        raise MalformedImageError(f"{path}: bad dimensions {w}x{h}")
    if maxval != 255:
        raise UnsupportedImageFormatError(f"{path}: only 8-bit PPM supported (maxval {maxval})")

    need = w * h * 3
    pixels = raw[pos:pos + need]
    if len(pixels) < need:
        raise MalformedImageError(
            f"{path}: truncated pixel data ({len(pixels)} of {need} bytes)")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3).copy()


def write_image(path, img):
    """Write an (h, w, 3) uint8 array as binary PPM; bit-exact round trip."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"expected a uint8 (h, w, 3) image, got {img.dtype} {img.shape}")
    h, w = img.shape[:2]
    if h == 0 or w == 0:
        raise ValueError("refusing to write a zero-area image")
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(img).tobytes())
