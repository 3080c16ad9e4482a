"""Synthetic blob images for smoke tests and demos."""

from pathlib import Path

import numpy as np
from PIL import Image


def blob_image(rng, label, num_classes, size=32):
    """A noisy background with one Gaussian blob whose position and colour encode ``label``."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    angle = 2 * np.pi * label / num_classes
    cy = size / 2 + size / 4 * np.sin(angle) + rng.normal(0, size / 32)
    cx = size / 2 + size / 4 * np.cos(angle) + rng.normal(0, size / 32)
    blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * (size / 8) ** 2))
    colour = np.roll(np.array([1.0, 0.35, 0.1]), label % 3)
    img = 40 + 20 * rng.random((size, size, 3)) + 180 * blob[..., None] * colour
    return np.clip(img, 0, 255).astype(np.uint8)


def make_blob_dataset(root, num_classes=2, per_class=20, size=32, seed=0):
    """Write ``root/class_<k>/img_<i>.png`` and return the class names."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    names = [f"class_{k}" for k in range(num_classes)]
    for k, name in enumerate(names):
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            Image.fromarray(blob_image(rng, k, num_classes, size)).save(d / f"img_{i:03d}.png")
    return names
