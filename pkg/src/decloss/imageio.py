"""PNG / PPM / PGM ingestion and egress.

Images load as channels-first float64 tensors in [0, 1]. Grayscale inputs
are expanded to three channels. Saving quantizes with ``round(v * 255)``
clamped to [0, 255].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError
from .tensor import Tensor

SUFFIXES = (".png", ".ppm", ".pgm")
_FORMATS = {"PNG", "PPM"}


@dataclass
class ImageFile:
    pixels: Tensor  # C x H x W
    path: Path
    bit_depth: int = 8


def load_image(path) -> ImageFile:
    path = Path(path)
    try:
        with Image.open(path) as im:
            fmt, mode = im.format, im.mode
            if fmt not in _FORMATS:
                raise FormatError(f"{path}: unsupported format {fmt}")
            if mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise FormatError(f"{path}: unsupported bit depth (mode {mode}); only 8-bit images are read")
            if mode not in ("L", "RGB"):
                raise FormatError(f"{path}: unsupported pixel mode {mode}; expected 8-bit RGB or gray")
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"{path}: cannot read image ({exc})") from exc
    if arr.ndim == 2:
        arr = np.repeat(arr[None], 3, axis=0)
    else:
        arr = np.transpose(arr, (2, 0, 1))
    return ImageFile(Tensor(arr / 255.0), path, 8)


def quantize(pixels) -> np.ndarray:
    arr = pixels.data if isinstance(pixels, Tensor) else np.asarray(pixels, dtype=np.float64)
    return np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)


def save_image(img, path) -> None:
    """Write a C x H x W array (or ImageFile) as PNG, PPM or PGM by suffix."""
    path = Path(path)
    pixels = img.pixels if isinstance(img, ImageFile) else img
    q = quantize(pixels)
    if q.ndim == 3 and q.shape[0] == 1:
        q = q[0]
    if q.ndim == 3:
        if q.shape[0] != 3:
            raise FormatError(f"{path}: cannot save {q.shape[0]} channels")
        q = np.transpose(q, (1, 2, 0))
    suffix = path.suffix.lower()
    if suffix not in SUFFIXES:
        raise FormatError(f"{path}: unsupported output suffix {suffix!r}")
    if suffix == ".pgm" and q.ndim == 3:
        if not (np.array_equal(q[..., 0], q[..., 1]) and np.array_equal(q[..., 0], q[..., 2])):
            raise FormatError(f"{path}: PGM needs a grayscale image")
        q = q[..., 0]
    fmt = "PNG" if suffix == ".png" else "PPM"
    Image.fromarray(q).save(path, format=fmt)


def list_images(directory) -> dict:
    """Map filename stem to path for every supported image in a directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"{directory}: not a directory")
    out = {}
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() in SUFFIXES:
            if p.stem in out:
                raise FormatError(f"{p}: duplicate image stem {p.stem!r}")
            out[p.stem] = p
    return out


def pair_directories(sr_dir, hr_dir) -> list:
    """``(stem, sr_path, hr_path)`` triples matched by stem, sorted by stem."""
    sr, hr = list_images(sr_dir), list_images(hr_dir)
    for stem in sorted(set(sr) ^ set(hr)):
        orphan = sr.get(stem) or hr.get(stem)
        raise FormatError(f"{orphan}: no counterpart with stem {stem!r} in the other directory")
    return [(stem, sr[stem], hr[stem]) for stem in sorted(sr)]
