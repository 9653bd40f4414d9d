"""Detail-enhanced contrastive loss, the ICOO metric, and a toy SR trainer."""

from .errors import (
    ConfigError,
    ContractError,
    DegeneratePartitionError,
    DimensionError,
    DomainError,
    FormatError,
    TrainingError,
)
from .fourier import EnhanceConfig, dft_matrix, enhance, gaussian_kernel, transform2d
from .icoo import IcooConfig, IcooReport, icoo, p_star, sample_mini_patches
from .losses import (
    ContrastConfig,
    LossWeights,
    cosine_similarity_matrix,
    decloss,
    l1_loss,
    psnr_mask,
    spatial_contrastive_loss,
    total_loss,
)
from .patching import MiniPatchBatch, patchify, unpatchify
from .tensor import Tape, Tensor, backward, finite_diff_check, map_elementwise, matmul, reduce_sum

__version__ = "0.1.0"
