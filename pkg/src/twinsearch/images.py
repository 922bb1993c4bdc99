"""Image IO and geometry helpers.

Arrays are HxWxC float64 in [0, 1]. Resizing is bilinear with align-corners
sampling (grid np.linspace(0, extent-1, out)), which maps corner pixels to
corner pixels exactly; stock library resizers use half-pixel centres and do
not, so this stays hand-rolled.
"""

from __future__ import annotations

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DataError, DimensionError

SUPPORTED_SUFFIXES = (".png", ".ppm")


def _check_hwc(image: np.ndarray, name: str = "image") -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] < 1:
        raise DimensionError(f"{name} must be HxWxC, got shape {image.shape}")
    return image


def load_image(path) -> np.ndarray:
    """Decode a PNG or PPM file to HxWx3 float64 in [0, 1]."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float64)
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    return arr / 255.0


def save_image(image: np.ndarray, path) -> None:
    """Write an HxWx3 (or HxW grayscale) array in [0, 1] as PNG or PPM."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    image = _check_hwc(image)
    if image.shape[2] != 3:
        raise DimensionError(f"need 3 channels to save, got {image.shape[2]}")
    data = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


def encode_png(image: np.ndarray) -> bytes:
    """PNG bytes for an HxWx3 array in [0, 1]."""
    import io

    image = _check_hwc(image)
    if image.shape[2] != 3:
        raise DimensionError(f"need 3 channels to encode, got {image.shape[2]}")
    data = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(data, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_image_bytes(blob: bytes) -> np.ndarray:
    """Decode in-memory PNG/PPM bytes to HxWx3 float64 in [0, 1]."""
    import io

    try:
        with Image.open(io.BytesIO(blob)) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode image bytes: {exc}") from exc
    return arr / 255.0


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resample with align-corners bilinear interpolation.

    Output corners equal input corners by construction. A singleton input
    extent broadcasts that row/column.
    """
    image = _check_hwc(image)
    if out_h < 1 or out_w < 1:
        raise ConfigError(f"output extents must be >= 1, got {out_h}x{out_w}")
    h, w, _ = image.shape

    rows = np.linspace(0.0, h - 1.0, out_h)
    cols = np.linspace(0.0, w - 1.0, out_w)
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[:, None, None]
    fc = (cols - c0)[None, :, None]

    top = image[r0][:, c0] * (1 - fc) + image[r0][:, c1] * fc
    bottom = image[r1][:, c0] * (1 - fc) + image[r1][:, c1] * fc
    return top * (1 - fr) + bottom * fr


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Channel mean as an HxW array."""
    return _check_hwc(image).mean(axis=2)
