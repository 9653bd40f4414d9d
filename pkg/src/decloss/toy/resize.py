"""Separable bicubic resampling (Catmull-Rom, a = -0.5) with edge clamping.

When shrinking, the kernel is stretched by ``1 / scale`` to act as an
anti-aliasing filter, following the usual bicubic degradation used for SR
training data.
"""

from __future__ import annotations

import functools
import math
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from ..errors import ContractError
from ..tensor import Tensor

A = -0.5


def cubic(x: np.ndarray) -> np.ndarray:
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    near = (A + 2) * ax3 - (A + 3) * ax2 + 1
    far = A * ax3 - 5 * A * ax2 + 8 * A * ax - 4 * A
    return np.where(ax <= 1, near, np.where(ax < 2, far, 0.0))


@functools.lru_cache(maxsize=64)
def resize_matrix(in_size: int, out_size: int, antialias: bool = True) -> np.ndarray:
    """Row i holds the weights of output sample i over the input samples."""
    if in_size < 1 or out_size < 1:
        raise ContractError(f"resize extents must be >= 1, got {in_size} -> {out_size}")
    scale = out_size / in_size
    stretch = scale if (antialias and scale < 1) else 1.0
    support = 2.0 / stretch
    m = np.zeros((out_size, in_size))
    for i in range(out_size):
        center = (i + 0.5) / scale - 0.5
        taps = np.arange(math.floor(center - support), math.ceil(center + support) + 1)
        w = stretch * cubic(stretch * (center - taps))
        w /= w.sum()
        np.add.at(m[i], np.clip(taps, 0, in_size - 1), w)
    m.setflags(write=False)
    return m


def bicubic_resize(
    image,
    scale: Union[float, Fraction, None] = None,
    size: Optional[tuple] = None,
    antialias: bool = True,
) -> Tensor:
    """Resize a C x H x W (or H x W) image by ``scale`` or to ``size=(h, w)``."""
    arr = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ContractError(f"expected an H x W or C x H x W image, got shape {arr.shape}")
    h, w = arr.shape[-2:]
    if size is None:
        if scale is None or scale <= 0:
            raise ContractError(f"scale must be positive, got {scale}")
        size = (int(round(h * scale)), int(round(w * scale)))
    oh, ow = size
    if oh < 1 or ow < 1:
        raise ContractError(f"target extent must be >= 1, got {oh} x {ow}")
    mh = resize_matrix(h, oh, antialias)
    mw = resize_matrix(w, ow, antialias)
    return Tensor(mh @ arr @ mw.T)


def nearest_upscale(image, factor: int) -> np.ndarray:
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    return np.repeat(np.repeat(arr, factor, axis=-2), factor, axis=-1)
