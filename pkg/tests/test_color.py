"""Colorimetry against an independently coded scalar oracle.

The oracle below walks the published sRGB -> XYZ (D65) -> CIELUV
equations one pixel at a time in plain Python arithmetic, with no numpy,
so it shares no code path with the vectorized implementation.
"""

from __future__ import annotations

import numpy as np
import pytest

from cola.color import luma, luv_frame_diff, rgb_to_luv

M = (
    (0.4124564, 0.3575761, 0.1804375),
    (0.2126729, 0.7151522, 0.0721750),
    (0.0193339, 0.1191920, 0.9503041),
)
WHITE = tuple(sum(row) for row in M)
WHITE_DENOM = WHITE[0] + 15.0 * WHITE[1] + 3.0 * WHITE[2]
UN = 4.0 * WHITE[0] / WHITE_DENOM
VN = 9.0 * WHITE[1] / WHITE_DENOM
EPS = (6.0 / 29.0) ** 3
KAPPA = (29.0 / 3.0) ** 3


def luv_oracle(r8: int, g8: int, b8: int) -> tuple[float, float, float]:
    def linearize(v8: int) -> float:
        c = v8 / 255.0
        return c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4

    rl, gl, bl = linearize(r8), linearize(g8), linearize(b8)
    x = M[0][0] * rl + M[0][1] * gl + M[0][2] * bl
    y = M[1][0] * rl + M[1][1] * gl + M[1][2] * bl
    z = M[2][0] * rl + M[2][1] * gl + M[2][2] * bl
    y_rel = y / WHITE[1]
    if y_rel > EPS:
        l_star = 116.0 * y_rel ** (1.0 / 3.0) - 16.0
    else:
        l_star = KAPPA * y_rel
    denom = x + 15.0 * y + 3.0 * z
    if denom > 0.0:
        u_prime, v_prime = 4.0 * x / denom, 9.0 * y / denom
    else:
        u_prime, v_prime = UN, VN
    return l_star, 13.0 * l_star * (u_prime - UN), 13.0 * l_star * (v_prime - VN)


def single_pixel(r: int, g: int, b: int) -> np.ndarray:
    return np.array([[[r, g, b]]], dtype=np.uint8)


class TestRgbToLuv:
    def test_white_maps_to_zero_chromaticity(self):
        l_star, u_star, v_star = rgb_to_luv(single_pixel(255, 255, 255))[0, 0]
        assert l_star == pytest.approx(100.0, abs=1e-9)
        assert abs(u_star) < 0.01
        assert abs(v_star) < 0.01

    def test_black_is_exactly_zero(self):
        assert tuple(rgb_to_luv(single_pixel(0, 0, 0))[0, 0]) == (0.0, 0.0, 0.0)

    def test_mid_gray_matches_oracle(self):
        expected = luv_oracle(119, 119, 119)
        got = rgb_to_luv(single_pixel(119, 119, 119))[0, 0]
        assert got == pytest.approx(expected, abs=1e-9)

    def test_thousand_random_pixels_match_oracle(self):
        rng = np.random.default_rng(123)
        pixels = rng.integers(0, 256, size=(1000, 3))
        got = rgb_to_luv(pixels.astype(np.uint8).reshape(1, -1, 3))[0]
        for i, (r, g, b) in enumerate(pixels):
            expected = luv_oracle(int(r), int(g), int(b))
            assert got[i] == pytest.approx(expected, abs=1e-6), (r, g, b)

    def test_l_star_range(self):
        rng = np.random.default_rng(5)
        img = rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8)
        l_star = rgb_to_luv(img)[..., 0]
        assert l_star.min() >= 0.0
        assert l_star.max() <= 100.0 + 1e-9


class TestLuvFrameDiff:
    def test_identical_frames_zero(self):
        luv = rgb_to_luv(np.full((4, 4, 3), 77, dtype=np.uint8))
        assert luv_frame_diff(luv, luv) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(9)
        a = rgb_to_luv(rng.integers(0, 256, (6, 6, 3)).astype(np.uint8))
        b = rgb_to_luv(rng.integers(0, 256, (6, 6, 3)).astype(np.uint8))
        assert luv_frame_diff(a, b) == luv_frame_diff(b, a)

    def test_constant_offset_is_the_offset(self):
        a = np.zeros((2, 1, 3))
        b = a + 3.0
        assert luv_frame_diff(a, b) == pytest.approx(3.0, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            luv_frame_diff(np.zeros((2, 2, 3)), np.zeros((3, 2, 3)))


def test_luma_is_exact_for_gray():
    for v in (0, 1, 119, 254, 255):
        plane = luma(np.full((2, 2, 3), v, dtype=np.uint8))
        assert plane[0, 0] == float(v)
