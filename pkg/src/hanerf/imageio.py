"""8-bit PNG reading and writing for float images in [0, 1]."""

from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(image):
    return np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_rgb(path, image):
    path = Path(path)
    Image.fromarray(to_uint8(image)).save(path, format="PNG")
    return path


def write_gray(path, image):
    """Write a single-channel float map in [0,1] (or a bool mask) as 8-bit grayscale."""
    path = Path(path)
    arr = np.asarray(image)
    if arr.dtype == bool:
        arr = arr.astype(np.float64)
    Image.fromarray(to_uint8(arr)).save(path, format="PNG")
    return path


def read_rgb(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def read_gray(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
