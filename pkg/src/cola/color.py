"""Colorimetry: sRGB decoding, Rec.601 luma, and CIELUV conversion.

The LUV path is sRGB (IEC 61966-2-1 piecewise transfer) -> linear RGB ->
CIE XYZ under D65 -> CIELUV:

    L* = 116 (Y/Yn)^(1/3) - 16        if Y/Yn > (6/29)^3
       = (29/3)^3 (Y/Yn)              otherwise
    u' = 4X / (X + 15Y + 3Z)          v' = 9Y / (X + 15Y + 3Z)
    u* = 13 L* (u' - u'n)             v* = 13 L* (v' - v'n)

The reference white (Xn, Yn, Zn) is the XYZ of linear RGB (1, 1, 1), so
pure white maps to exactly (100, 0, 0); at zero luminance u* and v* are
defined as 0.
"""

from __future__ import annotations

import numpy as np

from cola.frames import Frame

# sRGB -> XYZ (D65) matrix rows.
_M_X = (0.4124564, 0.3575761, 0.1804375)
_M_Y = (0.2126729, 0.7151522, 0.0721750)
_M_Z = (0.0193339, 0.1191920, 0.9503041)

_WHITE_X = sum(_M_X)
_WHITE_Y = sum(_M_Y)
_WHITE_Z = sum(_M_Z)
_WHITE_DENOM = _WHITE_X + 15.0 * _WHITE_Y + 3.0 * _WHITE_Z
_U_PRIME_N = 4.0 * _WHITE_X / _WHITE_DENOM
_V_PRIME_N = 9.0 * _WHITE_Y / _WHITE_DENOM

_EPS = (6.0 / 29.0) ** 3
_KAPPA = (29.0 / 3.0) ** 3


def _pixels_of(frame: Frame | np.ndarray) -> np.ndarray:
    return frame.pixels if isinstance(frame, Frame) else np.asarray(frame)


def srgb_to_linear(channel: np.ndarray) -> np.ndarray:
    """Gamma-decode sRGB values in [0, 1] to linear light."""
    channel = np.asarray(channel, dtype=np.float64)
    return np.where(
        channel <= 0.04045,
        channel / 12.92,
        ((channel + 0.055) / 1.055) ** 2.4,
    )


def luma(frame: Frame | np.ndarray) -> np.ndarray:
    """Rec.601 luma plane as float64 (0.299 R + 0.587 G + 0.114 B).

    Computed from integer milli-weights so that gray pixels (v, v, v)
    map to exactly v.
    """
    px = _pixels_of(frame).astype(np.int64)
    return (299 * px[..., 0] + 587 * px[..., 1] + 114 * px[..., 2]) / 1000.0


def rgb_to_luv(frame: Frame | np.ndarray) -> np.ndarray:
    """Convert 8-bit RGB pixels to CIELUV planes.

    Returns a (h, w, 3) float64 array of (L*, u*, v*); L* is in [0, 100].
    Total function: every 8-bit RGB triple has a defined image.
    """
    px = _pixels_of(frame).astype(np.float64) / 255.0
    lin = srgb_to_linear(px)
    r, g, b = lin[..., 0], lin[..., 1], lin[..., 2]
    x = _M_X[0] * r + _M_X[1] * g + _M_X[2] * b
    y = _M_Y[0] * r + _M_Y[1] * g + _M_Y[2] * b
    z = _M_Z[0] * r + _M_Z[1] * g + _M_Z[2] * b

    y_rel = y / _WHITE_Y
    l_star = np.where(y_rel > _EPS, 116.0 * np.cbrt(y_rel) - 16.0, _KAPPA * y_rel)

    denom = x + 15.0 * y + 3.0 * z
    # Black pixels have denom == 0; park u'/v' at the white point so that
    # u* = v* = 13 * 0 * 0 = 0 without dividing by zero.
    safe = denom > 0.0
    denom_safe = np.where(safe, denom, 1.0)
    u_prime = np.where(safe, 4.0 * x / denom_safe, _U_PRIME_N)
    v_prime = np.where(safe, 9.0 * y / denom_safe, _V_PRIME_N)

    u_star = 13.0 * l_star * (u_prime - _U_PRIME_N)
    v_star = 13.0 * l_star * (v_prime - _V_PRIME_N)
    return np.stack([l_star, u_star, v_star], axis=-1)


def luv_frame_diff(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute per-pixel-per-channel difference between LUV planes.

    Symmetric and zero iff the planes are identical.  Raises ValueError
    on dimension mismatch.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"LUV plane shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))
