"""Image decoding, resizing, rescaling and the fixed augmentation set.

Images are float32 ``[h, w, 3]`` arrays. Decoded images hold values in
[0, 255]; after :func:`rescale` they lie in [0, 1].
"""

import math
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import CorruptImageError, MissingImageError, UnsupportedFormatError

SUPPORTED_FORMATS = ("PNG", "JPEG")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
AUGMENTATIONS = ("flip_h", "flip_v", "zoom", "rotate")
PROVENANCES = ("original",) + AUGMENTATIONS


def decode_image(path):
    path = Path(path)
    if not path.is_file():
        raise MissingImageError(f"image not found: {path}")
    try:
        with Image.open(path) as im:
            fmt = im.format
            if fmt not in SUPPORTED_FORMATS:
                raise UnsupportedFormatError(f"{path}: unsupported image format {fmt}")
            im.load()
            if im.mode in ("L", "I", "I;16", "F", "1"):
                rgb = np.asarray(im.convert("L"))[..., None].repeat(3, axis=2)
            else:
                # RGBA -> RGB drops alpha without compositing
                rgb = np.asarray(im.convert("RGB"))
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"{path}: not a PNG or JPEG image") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        if isinstance(exc, (UnsupportedFormatError, MissingImageError)):
            raise
        raise CorruptImageError(f"{path}: corrupt {fmt or 'image'} data ({exc})") from exc
    return rgb.astype(np.float32)


def _sample_bilinear(img, ys, xs):
    """Sample ``img`` at fractional coordinates with edge replication."""
    h, w = img.shape[:2]
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[..., None].astype(img.dtype)
    wx = (xs - x0)[..., None].astype(img.dtype)
    top = img[y0, x0] * (1 - wx) + img[y0, x1] * wx
    bottom = img[y1, x0] * (1 - wx) + img[y1, x1] * wx
    out = top * (1 - wy) + bottom * wy
    # guard against rounding pushing a convex combination outside the inputs
    return np.clip(out, img.min(), img.max())


def resize_bilinear(img, size=(256, 256)):
    """Bilinear resize using half-pixel centres (no antialiasing)."""
    if isinstance(size, int):
        size = (size, size)
    h, w = img.shape[:2]
    if h < 1 or w < 1:
        raise ValueError(f"cannot resize an empty image of shape {img.shape}")
    oh, ow = size
    ys = (np.arange(oh) + 0.5) * (h / oh) - 0.5
    xs = (np.arange(ow) + 0.5) * (w / ow) - 0.5
    return _sample_bilinear(img, ys[:, None], xs[None, :])


def rescale(img):
    return (img * np.float32(1 / 255)).astype(np.float32)


def flip_h(img):
    return img[:, ::-1].copy()


def flip_v(img):
    return img[::-1].copy()


def zoom(img, crop_fraction=0.8):
    """Centre zoom: the central ``crop_fraction`` of each side resampled to full size."""
    if not 0 < crop_fraction <= 1:
        raise ValueError(f"crop_fraction must lie in (0, 1], got {crop_fraction}")
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2, (w - 1) / 2
    ys = cy + (np.arange(h) - cy) * crop_fraction
    xs = cx + (np.arange(w) - cx) * crop_fraction
    return _sample_bilinear(img, ys[:, None], xs[None, :])


def rotate(img, degrees=10.0):
    """Rotate counter-clockwise (as displayed) about the image centre.

    Output pixels are pulled from the inverse-rotated source position with
    bilinear interpolation; samples falling outside replicate the border.
    """
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2, (w - 1) / 2
    t = math.radians(degrees)
    cos, sin = math.cos(t), math.sin(t)
    dy = np.arange(h)[:, None] - cy
    dx = np.arange(w)[None, :] - cx
    # rows grow downwards, so a visual CCW turn maps (dx, dy) ->
    # (dx cos + dy sin, -dx sin + dy cos); invert it here
    src_x = cx + dx * cos - dy * sin
    src_y = cy + dx * sin + dy * cos
    return _sample_bilinear(img, src_y, src_x)


def augment_record(img, crop_fraction=0.8, degrees=10.0):
    """The four derived images of one preprocessed image, keyed by provenance."""
    return {
        "flip_h": flip_h(img),
        "flip_v": flip_v(img),
        "zoom": zoom(img, crop_fraction),
        "rotate": rotate(img, degrees),
    }


def apply_provenance(img, provenance, crop_fraction=0.8, degrees=10.0):
    if provenance == "original":
        return img
    if provenance == "flip_h":
        return flip_h(img)
    if provenance == "flip_v":
        return flip_v(img)
    if provenance == "zoom":
        return zoom(img, crop_fraction)
    if provenance == "rotate":
        return rotate(img, degrees)
    raise ValueError(f"unknown provenance {provenance!r}")


def preprocess(path, size=256):
    return rescale(resize_bilinear(decode_image(path), size))


def save_png(img, path):
    """Write a [0, 1] float image as 8-bit PNG."""
    arr = np.clip(np.rint(np.asarray(img) * 255), 0, 255).astype(np.uint8)
    Image.fromarray(arr, "RGB").save(path, format="PNG")
