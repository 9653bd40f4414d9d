"""High-frequency enhancement in the Fourier domain.

The 2-D DFT is written as explicit matrix products, ``Y_f = F_H @ Y @ F_W``,
so enhancement is a real-linear map assembled from taped matmuls and its
adjoint comes for free. The frequency weight is the outer product of two
Gaussian profiles peaking at index ``(n - 1) / 2``. Without an fftshift that
index is the Nyquist region and index 0 is DC, so the weight attenuates low
frequencies and keeps the high ones.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, DomainError
from .tensor import Tensor, as_tensor, matmul

ENHANCE_MODES = ("exact", "paper_literal")


@dataclass(frozen=True)
class FourierPlan:
    size: int
    forward: np.ndarray
    inverse: np.ndarray

    @functools.cached_property
    def parts(self) -> tuple:
        """Real and imaginary parts of the forward matrix as constant tensors."""
        return Tensor(self.forward.real), Tensor(self.forward.imag)


@dataclass(frozen=True)
class EnhanceConfig:
    """``alpha`` scales the kernel, ``mu`` is its width in index units.

    ``mu=None`` means a quarter of the extent, chosen per dimension.
    ``mode="paper_literal"`` replaces the exact inverse transform with the
    real matrix ``(Re F - Im F)^T``.
    """

    alpha: float = 1.0
    mu: Optional[float] = None
    mode: str = "exact"
    per_channel: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.mu is not None and not self.mu > 0:
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if self.mode not in ENHANCE_MODES:
            raise ConfigError(f"mode must be one of {ENHANCE_MODES}, got {self.mode!r}")
        if not self.per_channel:
            raise ConfigError("channels are always enhanced independently")

    def width(self, n: int) -> float:
        return self.mu if self.mu is not None else n / 4.0


@functools.lru_cache(maxsize=None)
def dft_matrix(n: int) -> FourierPlan:
    if n < 1:
        raise ContractError(f"DFT size must be >= 1, got {n}")
    jk = np.outer(np.arange(n), np.arange(n)) % n
    forward = np.exp(-2j * np.pi * jk / n)
    forward.setflags(write=False)
    inverse = forward.conj()
    inverse.setflags(write=False)
    return FourierPlan(n, forward, inverse)


def transform2d(y, direction: str = "forward") -> np.ndarray:
    """Untaped 2-D DFT over the last two axes.

    ``forward`` returns the complex spectrum. ``inverse`` divides by H*W and
    returns the real part.
    """
    arr = np.asarray(y.data if isinstance(y, Tensor) else y)
    if arr.ndim < 2:
        raise DimensionError(f"transform2d needs at least 2 axes, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("transform2d input contains non-finite values")
    h, w = arr.shape[-2:]
    ph, pw = dft_matrix(h), dft_matrix(w)
    if direction == "forward":
        return ph.forward @ arr @ pw.forward
    if direction == "inverse":
        return (ph.inverse @ arr @ pw.inverse).real / (h * w)
    raise ContractError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def gaussian_kernel(n: int, cfg: EnhanceConfig = EnhanceConfig()) -> np.ndarray:
    if n < 1:
        raise ContractError(f"kernel length must be >= 1, got {n}")
    mu = cfg.width(n)
    i = np.arange(n, dtype=np.float64)
    return cfg.alpha * np.exp(-((i - (n - 1) / 2.0) ** 2) / (2.0 * mu * mu))


def frequency_weight(h: int, w: int, cfg: EnhanceConfig) -> np.ndarray:
    return np.outer(gaussian_kernel(h, cfg), gaussian_kernel(w, cfg))


def enhance(y, cfg: EnhanceConfig = EnhanceConfig()) -> Tensor:
    """Weight the spectrum of every channel and transform back.

    Works on any tensor whose last two axes are spatial, typically B x C x H x W.
    """
    y = as_tensor(y)
    if y.ndim < 2:
        raise DimensionError(f"enhance needs at least 2 axes, got shape {y.shape}")
    if not np.all(np.isfinite(y.data)):
        raise DomainError("enhance input contains non-finite values")
    h, w = y.shape[-2:]
    hr_, hi_ = dft_matrix(h).parts
    wr_, wi_ = dft_matrix(w).parts
    weight = Tensor(np.broadcast_to(frequency_weight(h, w, cfg), y.shape))

    p = matmul(hr_, y)
    q = matmul(hi_, y)
    spec_re = matmul(p, wr_) - matmul(q, wi_)
    spec_im = matmul(p, wi_) + matmul(q, wr_)
    z_re = weight * spec_re
    z_im = weight * spec_im

    if cfg.mode == "paper_literal":
        # (Re F - Im F)^T is real and symmetric; only Re(Z) survives the real part
        cas_h = hr_ - hi_
        cas_w = wr_ - wi_
        return matmul(matmul(cas_h, z_re), cas_w) * (1.0 / (h * w))

    # Re(conj(F_H) Z conj(F_W)) with conj(F) = Fr - i Fi
    a_re = matmul(hr_, z_re) + matmul(hi_, z_im)
    a_im = matmul(hr_, z_im) - matmul(hi_, z_re)
    return (matmul(a_re, wr_) + matmul(a_im, wi_)) * (1.0 / (h * w))
