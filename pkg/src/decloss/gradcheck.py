"""Finite-difference verification of every taped operation in the package."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .fourier import EnhanceConfig, enhance
from .losses import ContrastConfig, cosine_similarity_matrix, decloss, l1_loss
from .patching import patchify, unpatchify
from .tensor import Tensor, finite_diff_check, map_elementwise, matmul, reduce_sum
from .toy.model import ToyModelParams, pixel_shuffle, toy_forward

TOLERANCE = 1e-4


@dataclass
class GradcheckResult:
    name: str
    seed: int
    error: float
    tol: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.error < self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name:<22} seed={self.seed} max_rel_err={self.error:.3e} tol={self.tol:.0e}"


def _weighted(rng: np.random.Generator, shape) -> Callable[[Tensor], Tensor]:
    """Scalarize an output with fixed random weights so no coordinate cancels out."""
    w = Tensor(rng.normal(size=shape))
    return lambda y: reduce_sum(y * w)


def _cases(rng: np.random.Generator) -> list:
    cases = []
    shape = (3, 4)
    other = Tensor(rng.normal(size=shape))
    positive = rng.uniform(0.5, 2.0, size=shape)
    away_from_zero = rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.1, 1.0, size=shape)
    s = _weighted(rng, shape)

    for kind in ("add", "sub", "mul"):
        cases.append((kind, lambda x, k=kind: s(map_elementwise(k, x, other)), rng.normal(size=shape)))
    cases.append(("div", lambda x: s(map_elementwise("div", other, x)), positive))
    cases.append(("exp", lambda x: s(map_elementwise("exp", x)), rng.normal(size=shape)))
    cases.append(("log", lambda x: s(map_elementwise("log", x)), positive))
    cases.append(("scale", lambda x: s(map_elementwise("scale", x, factor=-2.5)), rng.normal(size=shape)))
    cases.append(("sqrt", lambda x: s(x.sqrt()), positive))
    cases.append(("abs", lambda x: s(x.abs()), away_from_zero))
    cases.append(("relu", lambda x: s(x.relu()), away_from_zero))
    cases.append(("clamp_min", lambda x: s(x.clamp_min(0.0)), away_from_zero))

    b = Tensor(rng.normal(size=(4, 5)))
    sm = _weighted(rng, (3, 5))
    cases.append(("matmul_left", lambda x: sm(matmul(x, b)), rng.normal(size=(3, 4))))
    a = Tensor(rng.normal(size=(3, 4)))
    cases.append(("matmul_right", lambda x: sm(matmul(a, x)), rng.normal(size=(4, 5))))
    sb = _weighted(rng, (2, 3, 5))
    cases.append(("matmul_batched", lambda x: sb(matmul(x, b)), rng.normal(size=(2, 3, 4))))
    sr = _weighted(rng, (3,))
    cases.append(("reduce_sum", lambda x: sr(reduce_sum(x, axes=1)), rng.normal(size=shape)))

    img_shape = (2, 3, 8, 8)
    si = _weighted(rng, img_shape)
    cases.append(("enhance", lambda x: si(enhance(x, EnhanceConfig())), rng.random(img_shape)))
    cases.append(
        ("enhance_literal", lambda x: si(enhance(x, EnhanceConfig(mode="paper_literal"))), rng.random(img_shape))
    )
    sp = _weighted(rng, (8, 3, 4, 4))
    cases.append(("patchify", lambda x: sp(patchify(x, 4).patches), rng.random(img_shape)))
    cases.append(("unpatchify", lambda x: si(unpatchify(patchify(x, 4))), rng.random(img_shape)))
    sc = _weighted(rng, (6, 6))
    ref = Tensor(rng.normal(size=(6, 5)))
    cases.append(("cosine_similarity", lambda x: sc(cosine_similarity_matrix(x, ref)), rng.normal(size=(6, 5))))
    cases.append(("cosine_self", lambda x: sc(cosine_similarity_matrix(x, x)), rng.normal(size=(6, 5))))
    hr_l1 = Tensor(rng.random(img_shape))
    l1_start = hr_l1.data + rng.choice([-1.0, 1.0], size=img_shape) * rng.uniform(0.01, 0.5, size=img_shape)
    cases.append(("l1_loss", lambda x: l1_loss(x, hr_l1), l1_start))
    ss = _weighted(rng, (1, 3, 8, 8))
    cases.append(("pixel_shuffle", lambda x: ss(pixel_shuffle(x, 2)), rng.normal(size=(1, 12, 4, 4))))

    hr = Tensor(rng.random(img_shape))
    ccfg = ContrastConfig(patch_size=4)
    cases.append(("decloss", lambda x: decloss(x, hr, EnhanceConfig(), ccfg), rng.random(img_shape)))

    template = ToyModelParams.init(scale=2, seed=int(rng.integers(1 << 30)))
    lr = Tensor(rng.random((1, 3, 4, 4)))
    st = _weighted(rng, (1, 3, 8, 8))
    vec = template.to_vector()
    # all of conv1 and the output biases, plus a sample of the large conv2 kernel
    n1 = template.conv1_w.size + template.conv1_b.size
    n2 = template.conv2_w.size
    sampled = n1 + rng.choice(n2, size=300, replace=False)
    coords = np.concatenate([np.arange(n1), np.sort(sampled), np.arange(n1 + n2, vec.size)])
    cases.append(("toy_forward_params", lambda v: st(toy_forward(template.from_vector(v), lr)), vec, coords))
    cases.append(("toy_forward_input", lambda x: st(toy_forward(template, x)), rng.random((1, 3, 4, 4))))
    return cases


def run_suite(seeds: Iterable[int] = range(5), tol: float = TOLERANCE, h: float = 1e-4) -> list:
    results = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        for name, f, x, *coords in _cases(rng):
            error = finite_diff_check(f, x, h, coords[0] if coords else None)
            results.append(GradcheckResult(name, seed, error, tol))
    return results
