"""Binary PPM image I/O, sRGB/CIELAB conversion, and pixel features.

Only the 8-bit binary flavor (magic ``P6``, maxval 255) is read and
written; parse failures report the byte offset.  In memory an
:class:`Image` holds channels as floats in ``[0, 1]``, so an 8-bit file
round-trips losslessly through ``load_image``/``save_image``.

The CIELAB conversion uses the standard sRGB transfer function and
primaries with the D65 reference white.  Feature extraction turns an
image into estimation-ready rows: raw color triples, or CIELAB color
plus the spatial gradient of lightness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Image",
    "PpmError",
    "load_image",
    "save_image",
    "srgb_to_lab",
    "lab_to_srgb",
    "extract_features",
    "FEATURE_MODES",
]

FEATURE_MODES = ("rgb3d", "lab_grad5d")


class PpmError(ValueError):
    """Malformed PPM input; ``offset`` is the failing byte position."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"{message} (byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Image:
    """Row-major RGB raster with unit-interval float channels."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3:
            raise ValueError("pixels must have shape (height, width, 3)")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must contain at least one pixel")
        if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
            raise ValueError("channel values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    """Next header token, skipping whitespace and ``#`` comments."""
    n = len(buf)
    while pos < n:
        c = buf[pos]
        if c in b" \t\r\n":
            pos += 1
        elif c == ord("#"):
            nl = buf.find(b"\n", pos)
            if nl < 0:
                raise PpmError(n, "unterminated comment in header")
            pos = nl + 1
        else:
            break
    if pos >= n:
        raise PpmError(n, "unexpected end of file in header")
    start = pos
    while pos < n and buf[pos] not in b" \t\r\n":
        pos += 1
    return buf[start:pos], pos


def _int_token(buf: bytes, pos: int, what: str) -> tuple[int, int]:
    tok, end = _next_token(buf, pos)
    if not tok.isdigit():
        raise PpmError(end - len(tok), f"expected a decimal {what}, got {tok[:16]!r}")
    return int(tok), end


def load_image(path) -> Image:
    """Read a binary PPM file; only ``P6`` with maxval 255 is accepted."""
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, pos = _next_token(buf, 0)
    if magic == b"P3":
        raise PpmError(0, "ASCII PPM (P3) is not supported; convert to binary P6")
    if magic != b"P6":
        raise PpmError(0, f"not a binary PPM file (magic {magic[:16]!r})")
    width, pos = _int_token(buf, pos, "width")
    height, pos = _int_token(buf, pos, "height")
    maxval, pos = _int_token(buf, pos, "maxval")
    if width < 1 or height < 1:
        raise PpmError(pos, f"dimensions must be positive, got {width}x{height}")
    if maxval != 255:
        raise PpmError(pos, f"only maxval 255 is supported, got {maxval}")
    if pos >= len(buf) or buf[pos] not in b" \t\r\n":
        raise PpmError(pos, "expected a whitespace byte after maxval")
    pos += 1
    need = width * height * 3
    have = len(buf) - pos
    if have < need:
        raise PpmError(len(buf), f"truncated pixel data: expected {need} bytes from byte {pos}, found {have}")
    raw = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos)
    pixels = raw.reshape(height, width, 3).astype(np.float64) / 255.0
    return Image(pixels)


def save_image(img: Image, path) -> None:
    """Write as binary PPM, quantizing channels to 8 bits."""
    quant = np.clip(np.rint(img.pixels * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        fh.write(quant.tobytes())


# --------------------------------------------------------------------------
# sRGB <-> CIELAB (D65)

_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
# rescale rows (a few parts in 1e7) so that sRGB white maps exactly to
# the reference white, hence to L*=100, a*=b*=0
_RGB_TO_XYZ *= (_WHITE_D65 / _RGB_TO_XYZ.sum(axis=1))[:, None]
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
_DELTA = 6.0 / 29.0


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Map ``(..., 3)`` sRGB values in ``[0, 1]`` to CIELAB (D65)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    xyz = lin @ _RGB_TO_XYZ.T / _WHITE_D65
    f = np.where(xyz > _DELTA**3, np.cbrt(xyz), xyz / (3.0 * _DELTA**2) + 4.0 / 29.0)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def lab_to_srgb(lab: np.ndarray) -> np.ndarray:
    """Inverse of :func:`srgb_to_lab`.

    Out-of-gamut colors come back outside ``[0, 1]``; callers decide how
    to clamp.
    """
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    xyz = np.where(f > _DELTA, f**3, 3.0 * _DELTA**2 * (f - 4.0 / 29.0)) * _WHITE_D65
    lin = xyz @ _XYZ_TO_RGB.T
    # negative linear values are out of gamut; keep them linear so the
    # magnitude of the overshoot survives for the caller to clamp
    return np.where(
        lin > 0.0031308,
        1.055 * np.power(np.maximum(lin, 0.0), 1.0 / 2.4) - 0.055,
        12.92 * lin,
    )


def extract_features(img: Image, mode: str) -> np.ndarray:
    """Rows of per-pixel features, one row per pixel in raster order.

    ``rgb3d`` yields the raw color triples.  ``lab_grad5d`` yields
    ``(L*, a*, b*, dx, dy)`` where ``dx``/``dy`` are the horizontal and
    vertical derivatives of lightness, central differences inside the
    image and one-sided on the borders.
    """
    if mode == "rgb3d":
        return img.pixels.reshape(-1, 3).copy()
    if mode == "lab_grad5d":
        lab = srgb_to_lab(img.pixels)
        lum = lab[..., 0]
        # a single row or column has no derivative along that axis
        dy = np.gradient(lum, axis=0) if lum.shape[0] > 1 else np.zeros_like(lum)
        dx = np.gradient(lum, axis=1) if lum.shape[1] > 1 else np.zeros_like(lum)
        return np.column_stack(
            [
                lab[..., 0].ravel(),
                lab[..., 1].ravel(),
                lab[..., 2].ravel(),
                dx.ravel(),
                dy.ravel(),
            ]
        )
    raise ValueError(f"unknown feature mode {mode!r}; choose from {FEATURE_MODES}")
