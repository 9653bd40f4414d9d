"""Seeded synthetic HR images: smooth gradients, sharp-edged shapes and texture."""

from __future__ import annotations

import numpy as np


def synthetic_image(rng: np.random.Generator, size: int = 96, channels: int = 3) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    img = np.empty((channels, size, size))
    for c in range(channels):
        a, b, d = rng.uniform(-0.4, 0.4, size=3)
        img[c] = 0.5 + a * (xx - 0.5) + b * (yy - 0.5) + d * (xx - 0.5) * (yy - 0.5)

    for _ in range(rng.integers(3, 7)):
        color = rng.uniform(0.0, 1.0, size=channels)[:, None, None]
        if rng.random() < 0.5:
            cy, cx = rng.uniform(0, 1, size=2)
            r = rng.uniform(0.08, 0.3)
            inside = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        else:
            y0, x0 = rng.uniform(0, 0.8, size=2)
            y1, x1 = y0 + rng.uniform(0.1, 0.5), x0 + rng.uniform(0.1, 0.5)
            inside = (yy >= y0) & (yy < y1) & (xx >= x0) & (xx < x1)
        img = np.where(inside[None], color, img)

    # oriented stripes plus mild pixel noise as texture
    theta = rng.uniform(0, np.pi)
    freq = rng.uniform(4, 12)
    stripes = np.sin(2 * np.pi * freq * (xx * np.cos(theta) + yy * np.sin(theta)))
    img = img + 0.08 * stripes[None] + rng.normal(0.0, 0.02, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def synthetic_dataset(count: int = 50, size: int = 96, seed: int = 0, channels: int = 3) -> list:
    rng = np.random.default_rng(seed)
    return [synthetic_image(rng, size, channels) for _ in range(count)]
