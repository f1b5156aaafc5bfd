import io

import numpy as np
import pytest

from sceneraster.images import (
    depth_bytes,
    load_depth,
    load_ppm,
    png_bytes,
    ppm_bytes,
    save_depth,
    save_ppm,
)
from sceneraster.raster import Framebuffer


def checker_fb():
    fb = Framebuffer.create(5, 3)
    fb.color[::2, ::2] = (255, 0, 128)
    fb.depth[1, 2] = 7.5
    return fb


class TestPPM:
    def test_header_and_size(self):
        data = ppm_bytes(checker_fb())
        assert data.startswith(b"P6\n5 3\n255\n")
        assert len(data) == len(b"P6\n5 3\n255\n") + 5 * 3 * 3

    def test_roundtrip(self, tmp_path):
        fb = checker_fb()
        save_ppm(fb, tmp_path / "x.ppm")
        np.testing.assert_array_equal(load_ppm(tmp_path / "x.ppm"), fb.color)

    def test_deterministic(self):
        fb = checker_fb()
        assert ppm_bytes(fb) == ppm_bytes(fb)

    def test_load_rejects_non_ppm(self, tmp_path):
        p = tmp_path / "bad.ppm"
        p.write_bytes(b"P5\n1 1\n255\n\x00")
        with pytest.raises(ValueError):
            load_ppm(p)


class TestPNG:
    def test_pillow_decodes_identically(self):
        PIL_Image = pytest.importorskip("PIL.Image")
        fb = checker_fb()
        img = PIL_Image.open(io.BytesIO(png_bytes(fb)))
        assert img.size == (5, 3)
        np.testing.assert_array_equal(np.asarray(img.convert("RGB")), fb.color)

    def test_deterministic(self):
        fb = checker_fb()
        assert png_bytes(fb) == png_bytes(fb)


class TestDepth:
    def test_header_and_payload_size(self):
        data = depth_bytes(checker_fb())
        assert data[:8] == (5).to_bytes(4, "little") + (3).to_bytes(4, "little")
        assert len(data) == 8 + 5 * 3 * 4

    def test_roundtrip(self, tmp_path):
        fb = checker_fb()
        save_depth(fb, tmp_path / "d.raw")
        got = load_depth(tmp_path / "d.raw")
        assert got.shape == (3, 5)
        assert got[1, 2] == np.float32(7.5)
        assert np.isinf(got[0, 0])
