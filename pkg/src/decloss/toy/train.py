"""Two-phase training of the toy upsampler.

Phase 1 minimizes L1 alone. Phase 2 minimizes the weighted total of L1,
the optional perceptual term and the contrastive loss. Each phase has its own
cosine-decayed learning rate. Batches are drawn from a generator seeded by
``(seed, phase, step)``, so assembling them in any order gives the same data.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import ConfigError, ContractError, DomainError, TrainingError
from ..fourier import EnhanceConfig
from ..losses import L1_REDUCTIONS, ContrastConfig, LossWeights, PerceptualHook, combine, l1_loss, loss_terms
from ..tensor import Tensor, backward
from .adam import Adam, cosine_lr
from .metrics import psnr
from .model import ToyModelParams, toy_forward
from .resize import bicubic_resize, nearest_upscale


@dataclass(frozen=True)
class TrainConfig:
    phase1_epochs: int = 10
    phase2_epochs: int = 20
    steps_per_epoch: int = 10
    warmup_epochs: int = 0
    lr_phase1: float = 2e-3
    lr_phase2: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 16
    lr_crop: int = 12
    scale: int = 4
    l1_reduction: str = "sum"
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    enhance: EnhanceConfig = field(default_factory=EnhanceConfig)
    contrast: ContrastConfig = field(default_factory=ContrastConfig)

    def __post_init__(self):
        for name in ("phase1_epochs", "phase2_epochs", "steps_per_epoch", "batch_size", "lr_crop", "scale"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.warmup_epochs < 0 or self.warmup_epochs > self.phase1_epochs:
            raise ConfigError("warmup_epochs must lie in [0, phase1_epochs]")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError(f"Adam betas must lie in (0, 1), got ({self.beta1}, {self.beta2})")
        if self.lr_phase1 < 0 or self.lr_phase2 < 0:
            raise ConfigError("learning rates must be >= 0")
        if self.l1_reduction not in L1_REDUCTIONS:
            raise ConfigError(f"l1_reduction must be one of {L1_REDUCTIONS}, got {self.l1_reduction!r}")

    @property
    def hr_crop(self) -> int:
        return self.lr_crop * self.scale

    @property
    def phase1_steps(self) -> int:
        return self.phase1_epochs * self.steps_per_epoch

    @property
    def phase2_steps(self) -> int:
        return self.phase2_epochs * self.steps_per_epoch


@dataclass
class TraceRow:
    step: int
    phase: int
    l1: float
    ld: Optional[float]
    total: float


@dataclass
class TrainResult:
    params: ToyModelParams
    trace: list
    config: TrainConfig

    def phase_totals(self, phase: int) -> np.ndarray:
        return np.array([r.total for r in self.trace if r.phase == phase])


def sample_batch(dataset: Sequence[np.ndarray], cfg: TrainConfig, phase: int, step: int) -> tuple:
    """Random aligned HR crops and their bicubic LR counterparts."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, phase, step]))
    crop = cfg.hr_crop
    hrs, lrs = [], []
    for _ in range(cfg.batch_size):
        img = dataset[rng.integers(len(dataset))]
        _, h, w = img.shape
        r = rng.integers(0, h - crop + 1)
        c = rng.integers(0, w - crop + 1)
        hr = img[:, r:r + crop, c:c + crop]
        hrs.append(hr)
        lrs.append(bicubic_resize(hr, size=(cfg.lr_crop, cfg.lr_crop)).data)
    return Tensor(np.stack(lrs)), Tensor(np.stack(hrs))


def _check_dataset(dataset, cfg: TrainConfig) -> list:
    if not len(dataset):
        raise ContractError("training needs at least one HR image")
    images = [np.asarray(im.data if isinstance(im, Tensor) else im, dtype=np.float64) for im in dataset]
    for i, im in enumerate(images):
        if im.ndim != 3 or im.shape[1] < cfg.hr_crop or im.shape[2] < cfg.hr_crop:
            raise ContractError(f"image {i} with shape {im.shape} cannot hold a {cfg.hr_crop}px crop")
    return images


def train(
    dataset: Sequence,
    cfg: TrainConfig = TrainConfig(),
    params: Optional[ToyModelParams] = None,
    perceptual_hook: Optional[PerceptualHook] = None,
    on_step: Optional[Callable[[TraceRow], None]] = None,
) -> TrainResult:
    images = _check_dataset(dataset, cfg)
    channels = images[0].shape[0]
    if params is None:
        params = ToyModelParams.init(cfg.scale, cfg.seed, channels)
    trace = []
    global_step = 0
    phases = ((1, cfg.phase1_steps, cfg.lr_phase1), (2, cfg.phase2_steps, cfg.lr_phase2))
    for phase, steps, base_lr in phases:
        adam = Adam(cfg.beta1, cfg.beta2)
        warmup = cfg.warmup_epochs * cfg.steps_per_epoch if phase == 1 else 0
        for step in range(steps):
            lr_batch, hr_batch = sample_batch(images, cfg, phase, step)
            leaves = params.with_grad()
            try:
                sr = toy_forward(leaves, lr_batch)
                if phase == 1:
                    l1 = l1_loss(sr, hr_batch, cfg.l1_reduction)
                    total, ld = l1, None
                else:
                    terms = loss_terms(
                        sr, hr_batch, cfg.weights, cfg.enhance, cfg.contrast, perceptual_hook, cfg.l1_reduction
                    )
                    total = combine(terms, cfg.weights)
                    l1 = terms["l1"] if "l1" in terms else l1_loss(sr.detach(), hr_batch, cfg.l1_reduction)
                    ld = terms["ld"].item() if "ld" in terms else None
            except DomainError as exc:
                raise TrainingError(global_step, str(exc)) from exc
            value = total.item()
            if not np.isfinite(value):
                raise TrainingError(global_step, f"non-finite loss {value}")
            backward(total)
            lr = cosine_lr(base_lr, step, steps, warmup)
            with np.errstate(over="ignore", invalid="ignore"):
                updated = adam.step(leaves.arrays(), leaves.grads(), lr)
            if not all(np.all(np.isfinite(a)) for a in updated.values()):
                raise TrainingError(global_step, "parameters became non-finite")
            params = ToyModelParams.from_arrays(updated, params.scale)
            row = TraceRow(global_step, phase, l1.item(), ld, value)
            trace.append(row)
            if on_step:
                on_step(row)
            global_step += 1
    return TrainResult(params, trace, cfg)


def write_trace_csv(path, trace: Sequence[TraceRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "l1", "ld", "total"])
        for r in trace:
            writer.writerow([r.step, repr(r.l1), "" if r.ld is None else repr(r.ld), repr(r.total)])


def smooth(values, window: int = 10) -> np.ndarray:
    """Means over consecutive non-overlapping windows."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values) // window
    return values[: n * window].reshape(n, window).mean(axis=1)


def evaluate(params: ToyModelParams, hr_images: Sequence, crop: int, seed: int = 0, crops_per_image: int = 1) -> dict:
    """Mean PSNR of the model and of nearest-neighbour upscaling on random crops."""
    rng = np.random.default_rng(seed)
    s = params.scale
    model_scores, nn_scores = [], []
    for img in hr_images:
        img = np.asarray(img.data if isinstance(img, Tensor) else img)
        for _ in range(crops_per_image):
            r = rng.integers(0, img.shape[1] - crop + 1)
            c = rng.integers(0, img.shape[2] - crop + 1)
            hr = img[:, r:r + crop, c:c + crop]
            lr = bicubic_resize(hr, size=(crop // s, crop // s)).data
            sr = toy_forward(params, Tensor(lr[None])).data[0]
            model_scores.append(psnr(np.clip(sr, 0, 1), hr))
            nn_scores.append(psnr(nearest_upscale(lr, s), hr))
    return {"model_psnr": float(np.mean(model_scores)), "nearest_psnr": float(np.mean(nn_scores))}


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
