"""Spatial contrastive loss over mini-patches, L1, and the weighted total.

Pairs of mini-patches are split into positives and negatives by a PSNR-style
mask computed on the enhanced HR patches only. Scores combine SR-to-SR and
SR-to-HR cosine similarities; gradients reach the SR input through both
similarity matrices and never through the mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DegeneratePartitionError, DimensionError
from .fourier import EnhanceConfig, enhance
from .patching import patchify
from .tensor import Tensor, as_tensor, matmul, reduce_sum

TEMP_MODES = ("inside_exp", "paper_literal")
L1_REDUCTIONS = ("sum", "mean")


@dataclass(frozen=True)
class ContrastConfig:
    """Mini-patch contrastive settings.

    With ``temp_mode="inside_exp"`` each similarity is divided by its
    temperature inside the exponential. ``paper_literal`` divides the summed
    exponentials instead, which only shifts the loss by a constant.
    ``include_self`` keeps the j == i pair in the sums.
    """

    patch_size: int = 8
    eta: float = 16.3
    t_pos: float = 0.5
    t_neg: float = 1.5
    temp_mode: str = "inside_exp"
    max_value: float = 1.0
    mask_clamp: float = 100.0
    cos_epsilon: float = 1e-12
    include_self: bool = True

    def __post_init__(self):
        if self.patch_size < 1:
            raise ConfigError(f"patch_size must be >= 1, got {self.patch_size}")
        if not (self.t_pos > 0 and self.t_neg > 0):
            raise ConfigError(f"temperatures must be positive, got ({self.t_pos}, {self.t_neg})")
        if not self.max_value > 0:
            raise ConfigError(f"max_value must be positive, got {self.max_value}")
        if not self.mask_clamp > self.eta:
            raise ConfigError(f"mask_clamp ({self.mask_clamp}) must exceed eta ({self.eta})")
        if not self.cos_epsilon > 0:
            raise ConfigError(f"cos_epsilon must be positive, got {self.cos_epsilon}")
        if self.temp_mode not in TEMP_MODES:
            raise ConfigError(f"temp_mode must be one of {TEMP_MODES}, got {self.temp_mode!r}")


@dataclass(frozen=True)
class LossWeights:
    w1: float = 1e-2
    w2: float = 0.0
    w3: float = 3e-5

    def __post_init__(self):
        for name in ("w1", "w2", "w3"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ConfigError(f"{name} must be finite and >= 0, got {v}")

    @classmethod
    def paper(cls) -> "LossWeights":
        """The published second-stage weights (needs a perceptual hook)."""
        return cls(w1=1e-2, w2=1.0, w3=3e-5)


@dataclass
class SimilarityBundle:
    s_sr_hr: Tensor
    s_sr_sr: Tensor
    mask: np.ndarray
    pos_indicator: np.ndarray

    @property
    def neg_indicator(self) -> np.ndarray:
        return ~self.pos_indicator


def _row_norms(x: Tensor, eps: float) -> Tensor:
    return reduce_sum(x * x, axes=1, keepdims=True).sqrt().clamp_min(eps)


def cosine_similarity_matrix(a, b, eps: float = 1e-12) -> Tensor:
    """Entry (i, j) is <a_i, b_j> / (max(|a_i|, eps) * max(|b_j|, eps))."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or a.shape != b.shape:
        raise DimensionError(f"cosine similarity needs equal 2-d shapes, got {a.shape} and {b.shape}")
    num = matmul(a, b.T)
    na = _row_norms(a, eps)
    nb = na if b is a else _row_norms(b, eps)
    return num / matmul(na, nb.T)


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    """Symmetric Euclidean distance matrix between rows, exact zero on the diagonal."""
    x = np.asarray(x, dtype=np.float64)
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    d2 = 0.5 * (d2 + d2.T)
    np.maximum(d2, 0.0, out=d2)
    # the Gram expansion cancels badly for near-identical rows; redo those directly
    close = np.argwhere(d2 <= 1e-10 * (sq[:, None] + sq[None, :]))
    close = close[close[:, 0] < close[:, 1]]
    if len(close):
        diff = x[close[:, 0]] - x[close[:, 1]]
        exact = np.einsum("ij,ij->i", diff, diff)
        d2[close[:, 0], close[:, 1]] = exact
        d2[close[:, 1], close[:, 0]] = exact
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def psnr_mask(hr_patches, cfg: ContrastConfig = ContrastConfig()) -> np.ndarray:
    """M_ij = -20 log10(|y_i - y_j| / MAX), capped at ``mask_clamp``."""
    hr = hr_patches.data if isinstance(hr_patches, Tensor) else np.asarray(hr_patches, dtype=np.float64)
    if hr.ndim != 2:
        raise DimensionError(f"psnr_mask needs flattened patches, got shape {hr.shape}")
    d = pairwise_distances(hr)
    with np.errstate(divide="ignore"):
        m = -20.0 * np.log10(d / cfg.max_value)
    return np.minimum(m, cfg.mask_clamp)


def similarity_bundle(sr_patches, hr_patches, cfg: ContrastConfig = ContrastConfig()) -> SimilarityBundle:
    sr = as_tensor(sr_patches)
    hr = as_tensor(hr_patches).detach()
    if sr.ndim != 2 or sr.shape != hr.shape:
        raise DimensionError(f"SR and HR patches must share a 2-d shape, got {sr.shape} and {hr.shape}")
    mask = psnr_mask(hr, cfg)
    return SimilarityBundle(
        s_sr_hr=cosine_similarity_matrix(sr, hr, cfg.cos_epsilon),
        s_sr_sr=cosine_similarity_matrix(sr, sr, cfg.cos_epsilon),
        mask=mask,
        pos_indicator=mask >= cfg.eta,
    )


def _pair_scores(bundle: SimilarityBundle, t: Optional[float]) -> Tensor:
    if t is None:
        return bundle.s_sr_sr.exp() + 2.0 * bundle.s_sr_hr.exp()
    inv = 1.0 / t
    return (bundle.s_sr_sr * inv).exp() + 2.0 * (bundle.s_sr_hr * inv).exp()


def spatial_contrastive_loss(sr_patches, hr_patches, cfg: ContrastConfig = ContrastConfig()) -> Tensor:
    """Contrastive loss between flattened SR and HR mini-patches (B* x D each)."""
    bundle = similarity_bundle(sr_patches, hr_patches, cfg)
    n = bundle.mask.shape[0]
    pos = bundle.pos_indicator.copy()
    neg = ~pos
    if not cfg.include_self:
        np.fill_diagonal(pos, False)
        np.fill_diagonal(neg, False)
    for row in range(n):
        if not pos[row].any():
            raise DegeneratePartitionError(row, "positive")
        if not neg[row].any():
            raise DegeneratePartitionError(row, "negative")
    pos_w = Tensor(pos.astype(np.float64))
    neg_w = Tensor(neg.astype(np.float64))

    if cfg.temp_mode == "inside_exp":
        q_pos = reduce_sum(_pair_scores(bundle, cfg.t_pos) * pos_w, axes=1)
        q_neg = reduce_sum(_pair_scores(bundle, cfg.t_neg) * neg_w, axes=1)
        log_ratio = q_pos.log() - q_neg.log()
    else:
        scores = _pair_scores(bundle, None)
        q_pos = reduce_sum(scores * pos_w, axes=1)
        q_neg = reduce_sum(scores * neg_w, axes=1)
        # log(q / t) = log q - log t keeps the gradient independent of t
        log_ratio = (q_pos.log() - np.log(cfg.t_pos)) - (q_neg.log() - np.log(cfg.t_neg))
    return reduce_sum(log_ratio) * (-1.0 / n)


def flatten_patches(images: Tensor, p: int) -> Tensor:
    return patchify(images, p).flat


def decloss(sr, hr, ecfg: EnhanceConfig = EnhanceConfig(), ccfg: ContrastConfig = ContrastConfig()) -> Tensor:
    """Enhance, cut into mini-patches, and score SR against HR. HR carries no gradient."""
    sr = as_tensor(sr)
    hr = as_tensor(hr).detach()
    if sr.shape != hr.shape:
        raise DimensionError(f"SR and HR batches differ in shape: {sr.shape} vs {hr.shape}")
    p = ccfg.patch_size
    return spatial_contrastive_loss(
        flatten_patches(enhance(sr, ecfg), p),
        flatten_patches(enhance(hr, ecfg), p),
        ccfg,
    )


def l1_loss(sr, hr, reduction: str = "sum") -> Tensor:
    sr, hr = as_tensor(sr), as_tensor(hr).detach()
    if sr.shape != hr.shape:
        raise DimensionError(f"l1_loss: shapes differ: {sr.shape} vs {hr.shape}")
    if reduction not in L1_REDUCTIONS:
        raise ConfigError(f"reduction must be one of {L1_REDUCTIONS}, got {reduction!r}")
    total = reduce_sum((sr - hr).abs())
    return total * (1.0 / sr.size) if reduction == "mean" else total


PerceptualHook = Callable[[Tensor, Tensor], Tensor]


def loss_terms(
    sr,
    hr,
    w: LossWeights = LossWeights(),
    ecfg: EnhanceConfig = EnhanceConfig(),
    ccfg: ContrastConfig = ContrastConfig(),
    perceptual_hook: Optional[PerceptualHook] = None,
    l1_reduction: str = "sum",
) -> dict:
    """Individual loss terms; a term whose weight is zero is left out."""
    if w.w2 > 0 and perceptual_hook is None:
        raise ConfigError("w2 > 0 needs a perceptual feature-distance hook")
    terms = {}
    if w.w1 > 0:
        terms["l1"] = l1_loss(sr, hr, l1_reduction)
    if w.w2 > 0:
        terms["lp"] = as_tensor(perceptual_hook(as_tensor(sr), as_tensor(hr).detach()))
    if w.w3 > 0:
        terms["ld"] = decloss(sr, hr, ecfg, ccfg)
    return terms


def combine(terms: dict, w: LossWeights) -> Tensor:
    weights = {"l1": w.w1, "lp": w.w2, "ld": w.w3}
    total = None
    for name, value in terms.items():
        part = value * weights[name]
        total = part if total is None else total + part
    if total is None:
        raise ConfigError("all loss weights are zero")
    return total.reshape(())


def total_loss(
    sr,
    hr,
    w: LossWeights = LossWeights(),
    ecfg: EnhanceConfig = EnhanceConfig(),
    ccfg: ContrastConfig = ContrastConfig(),
    perceptual_hook: Optional[PerceptualHook] = None,
    l1_reduction: str = "sum",
) -> Tensor:
    return combine(loss_terms(sr, hr, w, ecfg, ccfg, perceptual_hook, l1_reduction), w)
