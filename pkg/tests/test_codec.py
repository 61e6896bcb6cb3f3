import numpy as np
import pytest
import scipy.fft

from snet import codec


def psnr_y_full_range(a, b):
    ya = codec.rgb_to_ycbcr(a)[:, :, 0]
    yb = codec.rgb_to_ycbcr(b)[:, :, 0]
    err = np.mean((ya - yb) ** 2)
    return np.inf if err == 0 else 10.0 * np.log10(255.0 ** 2 / err)


class TestScaleTables:
    def test_qf50_is_identity(self):
        luma, chroma = codec.scale_tables(50)
        assert np.array_equal(luma, codec.BASE_LUMA)
        assert np.array_equal(chroma, codec.BASE_CHROMA)

    def test_qf100_clamps_to_ones(self):
        luma, chroma = codec.scale_tables(100)
        assert np.all(luma == 1) and np.all(chroma == 1)

    def test_qf10_dc_entry(self):
        # floor((16 * 500 + 50) / 100) = 80
        luma, _ = codec.scale_tables(10)
        assert luma[0, 0] == 80

    def test_out_of_range_rejected(self):
        for bad in (0, 101, -3):
            with pytest.raises(ValueError):
                codec.scale_tables(bad)
        with pytest.raises(ValueError):
            codec.scale_tables(40.0)

    def test_entries_always_in_range(self):
        for qf in range(1, 101):
            luma, chroma = codec.scale_tables(qf)
            for t in (luma, chroma):
                assert t.min() >= 1 and t.max() <= 255

    def test_lower_quality_never_finer(self):
        qfs = [1, 5, 10, 25, 50, 75, 90, 100]
        for q1, q2 in zip(qfs, qfs[1:]):
            l1, c1 = codec.scale_tables(q1)
            l2, c2 = codec.scale_tables(q2)
            assert np.all(l1 >= l2) and np.all(c1 >= c2)


class TestDct8:
    def test_zero_block(self):
        assert np.array_equal(codec.dct8(np.zeros((8, 8))), np.zeros((8, 8)))

    def test_constant_block_concentrates_in_dc(self):
        coefs = codec.dct8(np.full((8, 8), 8.0))
        assert coefs[0, 0] == pytest.approx(64.0, abs=1e-9)  # 8 * mean
        off_dc = coefs.copy()
        off_dc[0, 0] = 0.0
        assert np.abs(off_dc).max() < 1e-9

    def test_round_trip(self, rng):
        block = rng.uniform(-128, 127, (8, 8))
        assert np.abs(codec.idct8(codec.dct8(block)) - block).max() < 1e-4

    def test_preserves_l2_norm(self, rng):
        block = rng.uniform(-128, 127, (8, 8))
        assert np.linalg.norm(codec.dct8(block)) == pytest.approx(
            np.linalg.norm(block), abs=1e-4)

    def test_matches_scipy_orthonormal_dct(self, rng):
        block = rng.uniform(-128, 127, (8, 8))
        ref = scipy.fft.dctn(block, type=2, norm="ortho")
        assert np.abs(codec.dct8(block) - ref).max() < 1e-10
        ref_inv = scipy.fft.idctn(block, type=2, norm="ortho")
        assert np.abs(codec.idct8(block) - ref_inv).max() < 1e-10

    def test_batched_blocks(self, rng):
        blocks = rng.uniform(-128, 127, (5, 8, 8))
        batched = codec.dct8(blocks)
        for i in range(5):
            assert np.abs(batched[i] - codec.dct8(blocks[i])).max() < 1e-12


class TestColorTransforms:
    def test_achromatic_extremes(self):
        white = np.full((1, 1, 3), 255, np.uint8)
        black = np.zeros((1, 1, 3), np.uint8)
        yw = codec.rgb_to_ycbcr(white)[0, 0]
        yb = codec.rgb_to_ycbcr(black)[0, 0]
        assert yw[0] == pytest.approx(255.0, abs=1e-9)
        assert yw[1] == pytest.approx(128.0, abs=1e-9)
        assert yw[2] == pytest.approx(128.0, abs=1e-9)
        assert yb[0] == pytest.approx(0.0, abs=1e-9)
        assert yb[1] == pytest.approx(128.0, abs=1e-9)
        assert yb[2] == pytest.approx(128.0, abs=1e-9)

    def test_round_trip_within_one_step(self, rng):
        img = rng.integers(0, 256, (32, 17, 3), dtype=np.uint8)
        back = np.rint(codec.ycbcr_to_rgb(codec.rgb_to_ycbcr(img)))
        assert np.abs(back - img.astype(np.float64)).max() <= 1.0


class TestDegrade:
    def test_qf100_nearly_lossless(self, natural_images):
        img = natural_images[0]
        out = codec.degrade(img, 100, subsampling="444")
        assert psnr_y_full_range(img, out) > 50.0

    @pytest.mark.parametrize("mode", ["444", "420"])
    @pytest.mark.parametrize("qf", [10, 40, 75, 100])
    def test_constant_gray_round_trips(self, qf, mode):
        img = np.full((16, 24, 3), 128, np.uint8)
        out = codec.degrade(img, qf, subsampling=mode)
        assert np.abs(out.astype(int) - 128).max() <= 1

    def test_constant_gray_when_dc_divides(self):
        # DC of gray 138 is 8*(138-128) = 80, exactly the qf10 luma DC step
        img = np.full((8, 8, 3), 138, np.uint8)
        out = codec.degrade(img, 10, subsampling="444")
        assert np.abs(out.astype(int) - 138).max() <= 1

    def test_quality_ordering_on_natural_images(self, natural_images):
        for img in natural_images:
            values = [psnr_y_full_range(img, codec.degrade(img, qf)) for qf in (10, 20, 40)]
            assert values[0] < values[1] < values[2], values

    def test_never_beats_top_quality(self, natural_images):
        img = natural_images[1]
        top = psnr_y_full_range(img, codec.degrade(img, 100))
        for qf in (5, 20, 50, 80):
            assert psnr_y_full_range(img, codec.degrade(img, qf)) <= top

    def test_non_multiple_of_eight_sizes(self, natural_images):
        img = natural_images[2][:93, :85]
        for mode in ("444", "420"):
            out = codec.degrade(img, 30, subsampling=mode)
            assert out.shape == img.shape and out.dtype == np.uint8

    def test_deterministic(self, natural_images):
        img = natural_images[3]
        assert np.array_equal(codec.degrade(img, 20), codec.degrade(img, 20))

    def test_rejections(self):
        with pytest.raises(ValueError, match="zero-area"):
            codec.degrade(np.zeros((0, 8, 3), np.uint8), 50)
        with pytest.raises(ValueError, match="at least"):
            codec.degrade(np.zeros((4, 4, 3), np.uint8), 50)
        with pytest.raises(ValueError, match="subsampling"):
            codec.degrade(np.zeros((8, 8, 3), np.uint8), 50, subsampling="422")
        with pytest.raises(ValueError, match="quality"):
            codec.degrade(np.zeros((8, 8, 3), np.uint8), 0)


class TestPpmIO:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        img = rng.integers(0, 256, (21, 34, 3), dtype=np.uint8)
        path = tmp_path / "img.ppm"
        codec.write_image(path, img)
        assert np.array_equal(codec.read_image(path), img)

    def test_one_by_one_round_trip(self, tmp_path):
        img = np.array([[[7, 200, 13]]], np.uint8)
        path = tmp_path / "dot.ppm"
        codec.write_image(path, img)
        assert np.array_equal(codec.read_image(path), img)

    def test_header_comments_are_skipped(self, tmp_path):
        path = tmp_path / "c.ppm"
        path.write_bytes(b"P6\n# a comment\n2 1\n# more\n255\n" + bytes(6))
        img = codec.read_image(path)
        assert img.shape == (1, 2, 3)

    def test_truncated_pixels_rejected(self, tmp_path):
        path = tmp_path / "t.ppm"
        path.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
        with pytest.raises(codec.MalformedImageError, match="truncated"):
            codec.read_image(path)

    def test_truncated_header_rejected(self, tmp_path):
        path = tmp_path / "h.ppm"
        path.write_bytes(b"P6\n4")
        with pytest.raises(codec.MalformedImageError):
            codec.read_image(path)

    def test_unsupported_magic_rejected(self, tmp_path):
        path = tmp_path / "p5.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes(4))
        with pytest.raises(codec.UnsupportedImageFormatError):
            codec.read_image(path)

    def test_unsupported_depth_rejected(self, tmp_path):
        path = tmp_path / "deep.ppm"
        path.write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
        with pytest.raises(codec.UnsupportedImageFormatError, match="8-bit"):
            codec.read_image(path)

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(OSError):
            codec.read_image(tmp_path / "nope.ppm")

    def test_write_rejects_bad_arrays(self, tmp_path):
        with pytest.raises(ValueError):
            codec.write_image(tmp_path / "bad.ppm", np.zeros((4, 4), np.uint8))
        with pytest.raises(ValueError):
            codec.write_image(tmp_path / "bad.ppm", np.zeros((4, 4, 3), np.float32))
