"""Intensity of the center-oriented-optimization problem (ICOO).

For each generated mini-patch, the distance to its nearest real patch is
divided by the summed distances to all other real patches. The scores of a
round are summed and mapped through ``-10 log10``; rounds are averaged.
Distances are Euclidean in raw pixel space.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, ContractError
from .tensor import Tensor

AGGREGATIONS = ("score", "ratio")


@dataclass(frozen=True)
class IcooConfig:
    """Sampling protocol.

    ``nearest_k`` limits the denominator to the k nearest HR patches (the
    nearest one included, then excluded from the sum). ``aggregate="score"``
    averages per-round scores; ``"ratio"`` averages the per-round sums before
    taking the log.
    """

    patch_size: int = 12
    sr_patches: int = 8
    hr_patches: int = 100
    rounds: int = 10
    eps: float = 1e-8
    nearest_k: Optional[int] = None
    seed: int = 0
    aggregate: str = "score"

    def __post_init__(self):
        for name in ("patch_size", "sr_patches", "hr_patches", "rounds"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.nearest_k is not None and self.nearest_k < 2:
            raise ConfigError(f"nearest_k must be >= 2, got {self.nearest_k}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        if self.aggregate not in AGGREGATIONS:
            raise ConfigError(f"aggregate must be one of {AGGREGATIONS}, got {self.aggregate!r}")


@dataclass
class IcooReport:
    score: float
    per_round: list
    sr_patch_count: int
    hr_patch_count: int
    seed: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "score": self.score,
            "rounds": len(self.per_round),
            "per_round": list(self.per_round),
            "sr_patch_count": self.sr_patch_count,
            "hr_patch_count": self.hr_patch_count,
            "seed": self.seed,
            "config": dict(self.config),
        }


def _as_chw(image) -> np.ndarray:
    arr = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ContractError(f"expected a C x H x W image, got shape {arr.shape}")
    return arr


def sample_coordinates(height: int, width: int, count: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` top-left corners, uniform and with replacement."""
    if height < size or width < size:
        raise ContractError(f"image {height} x {width} is smaller than patch size {size}")
    rows = rng.integers(0, height - size + 1, size=count)
    cols = rng.integers(0, width - size + 1, size=count)
    return np.stack([rows, cols], axis=1)


def sample_mini_patches(image, count: int, size: int, rng: np.random.Generator) -> np.ndarray:
    arr = _as_chw(image)
    coords = sample_coordinates(arr.shape[1], arr.shape[2], count, size, rng)
    return np.stack([arr[:, r:r + size, c:c + size] for r, c in coords])


def p_star(sr_patch, hr_patches, eps: float = 1e-8, nearest_k: Optional[int] = None) -> float:
    """Nearest-HR distance over the summed distance to the remaining HR patches.

    Ties for the nearest patch go to the lowest index.
    """
    sr = np.asarray(sr_patch, dtype=np.float64).ravel()
    hr = np.asarray(hr_patches, dtype=np.float64)
    if hr.shape[0] < 2:
        raise ContractError(f"p_star needs at least 2 HR patches, got {hr.shape[0]}")
    hr = hr.reshape(hr.shape[0], -1)
    if hr.shape[1] != sr.size:
        raise ContractError(f"patch sizes differ: SR has {sr.size} values, HR has {hr.shape[1]}")
    d = np.sqrt(np.einsum("ij,ij->i", hr - sr, hr - sr))
    k = int(np.argmin(d))
    rest = np.delete(d, k)
    if nearest_k is not None:
        rest = np.sort(rest)[: nearest_k - 1]
    # every HR patch coinciding with the SR patch would leave an empty denominator
    return max(d[k], eps) / max(math.fsum(rest), eps)


def _rng(seed: int, round_index: int, kind: int, image_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, round_index, kind, image_index]))


def _round_sum(srs, hrs, cfg: IcooConfig, r: int, pool: Optional[ThreadPoolExecutor]) -> tuple:
    p = cfg.patch_size
    hr_pool = np.concatenate(
        [sample_mini_patches(img, cfg.hr_patches, p, _rng(cfg.seed, r, 1, i)) for i, img in enumerate(hrs)]
    )
    sr_sets = [sample_mini_patches(img, cfg.sr_patches, p, _rng(cfg.seed, r, 0, i)) for i, img in enumerate(srs)]

    def image_total(patches: np.ndarray) -> float:
        return math.fsum(p_star(patch, hr_pool, cfg.eps, cfg.nearest_k) for patch in patches)

    totals = list(pool.map(image_total, sr_sets)) if pool else [image_total(s) for s in sr_sets]
    # correctly rounded sums do not depend on order, so parallel runs match serial ones
    return math.fsum(totals), sum(len(s) for s in sr_sets), len(hr_pool)


def icoo(sr_images: Sequence, hr_images: Sequence, cfg: IcooConfig = IcooConfig(), max_workers: int = 1) -> IcooReport:
    srs = [_as_chw(im) for im in sr_images]
    hrs = [_as_chw(im) for im in hr_images]
    if not srs or not hrs:
        raise ContractError("icoo needs non-empty SR and HR image sets")
    channels = {im.shape[0] for im in srs + hrs}
    if len(channels) != 1:
        raise ContractError(f"images disagree on channel count: {sorted(channels)}")

    pool = ThreadPoolExecutor(max_workers) if max_workers > 1 else None
    try:
        rounds = [_round_sum(srs, hrs, cfg, r, pool) for r in range(cfg.rounds)]
    finally:
        if pool:
            pool.shutdown()
    sums = [s for s, _, _ in rounds]
    per_round = [-10.0 * math.log10(s) for s in sums]
    if cfg.aggregate == "score":
        score = math.fsum(per_round) / len(per_round)
    else:
        score = float(-10.0 * np.log10(np.mean(sums)))
    return IcooReport(
        score=score,
        per_round=[float(v) for v in per_round],
        sr_patch_count=rounds[0][1],
        hr_patch_count=rounds[0][2],
        seed=cfg.seed,
        config=asdict(cfg),
    )
