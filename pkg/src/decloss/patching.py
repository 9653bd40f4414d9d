"""Split image batches into non-overlapping P x P mini-patches and back.

Patches are ordered batch-major, then row-major over the patch grid. SR and HR
batches must go through the same routine so that pairings line up.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError, DimensionError
from .tensor import Tensor, as_tensor


@dataclass(frozen=True)
class MiniPatchBatch:
    patches: Tensor  # (B*N) x C x P x P
    batch: int
    height: int
    width: int
    patch_size: int

    @property
    def channels(self) -> int:
        return self.patches.shape[1]

    @property
    def per_image(self) -> int:
        return (self.height // self.patch_size) * (self.width // self.patch_size)

    @property
    def flat(self) -> Tensor:
        n = self.patches.shape[0]
        return self.patches.reshape(n, -1)


def patchify(batch, p: int) -> MiniPatchBatch:
    x = as_tensor(batch)
    if x.ndim != 4:
        raise DimensionError(f"patchify needs a B x C x H x W tensor, got shape {x.shape}")
    b, c, h, w = x.shape
    if p < 1 or h % p or w % p:
        raise ContractError(f"patch size {p} must divide both H={h} and W={w}")
    gh, gw = h // p, w // p
    patches = (
        x.reshape(b, c, gh, p, gw, p)
        .transpose(0, 2, 4, 1, 3, 5)
        .reshape(b * gh * gw, c, p, p)
    )
    return MiniPatchBatch(patches, b, h, w, p)


def unpatchify(mp: MiniPatchBatch) -> Tensor:
    p = mp.patch_size
    if p < 1 or mp.height % p or mp.width % p:
        raise ContractError(f"patch size {p} does not tile {mp.height} x {mp.width}")
    gh, gw = mp.height // p, mp.width // p
    n, c = mp.patches.shape[:2]
    if n != mp.batch * gh * gw or mp.patches.shape[2:] != (p, p):
        raise ContractError(
            f"patches of shape {mp.patches.shape} do not match batch={mp.batch}, "
            f"H={mp.height}, W={mp.width}, P={p}"
        )
    return (
        mp.patches.reshape(mp.batch, gh, gw, c, p, p)
        .transpose(0, 3, 1, 4, 2, 5)
        .reshape(mp.batch, c, mp.height, mp.width)
    )
