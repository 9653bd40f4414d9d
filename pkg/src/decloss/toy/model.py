"""A two-layer convolutional upsampler with a pixel-shuffle head."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError
from ..tensor import Function, Tensor, as_tensor

HIDDEN = 16


class Conv2d(Function):
    """Stride-1 convolution with zero padding ``k // 2`` (odd square kernels)."""

    def forward(self, x, weight, bias):
        b, c, h, w = x.shape
        k = weight.shape[-1]
        self.pad = k // 2
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad), (self.pad, self.pad)))
        # rows are output pixels (b, h, w); columns are (c, i, j) taps
        windows = sliding_window_view(xp, (k, k), axis=(2, 3))
        self.cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * k * k)
        out = self.cols @ weight.reshape(weight.shape[0], -1).T + bias
        return out.reshape(b, h, w, -1).transpose(0, 3, 1, 2)

    def backward(self, grad):
        x, weight, bias = self.inputs
        b, c, h, w = x.shape
        o, _, k, _ = weight.shape
        g = grad.transpose(0, 2, 3, 1).reshape(-1, o)
        gx = gw = gb = None
        if self.needs_grad(1):
            gw = (g.T @ self.cols).reshape(weight.shape)
        if self.needs_grad(2):
            gb = g.sum(axis=0)
        if self.needs_grad(0):
            gcols = (g @ weight.data.reshape(o, -1)).reshape(b, h, w, c, k, k)
            gxp = np.zeros((b, c, h + 2 * self.pad, w + 2 * self.pad))
            for i in range(k):
                for j in range(k):
                    gxp[:, :, i:i + h, j:j + w] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, self.pad:self.pad + h, self.pad:self.pad + w]
        return gx, gw, gb


def conv2d(x, weight, bias) -> Tensor:
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d needs 4-d input and weight, got {x.shape} and {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape} vs weight {weight.shape}")
    k = weight.shape[-1]
    if weight.shape[-2] != k or k % 2 == 0:
        raise DimensionError(f"conv2d needs an odd square kernel, got {weight.shape}")
    if bias.shape != (weight.shape[0],):
        raise DimensionError(f"conv2d bias shape {bias.shape} does not match {weight.shape[0]} outputs")
    return Conv2d.apply(x, weight, bias)


def pixel_shuffle(x, s: int) -> Tensor:
    """B x (C s^2) x h x w -> B x C x (h s) x (w s); channel c*s*s + i*s + j lands at offset (i, j)."""
    x = as_tensor(x)
    b, cs2, h, w = x.shape
    if cs2 % (s * s):
        raise DimensionError(f"pixel_shuffle: {cs2} channels are not divisible by {s}^2")
    c = cs2 // (s * s)
    return x.reshape(b, c, s, s, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(b, c, h * s, w * s)


@dataclass(frozen=True)
class ToyModelParams:
    conv1_w: Tensor
    conv1_b: Tensor
    conv2_w: Tensor
    conv2_b: Tensor
    scale: int

    @classmethod
    def init(cls, scale: int = 4, seed: int = 0, channels: int = 3) -> "ToyModelParams":
        rng = np.random.default_rng(seed)
        out = channels * scale * scale
        w1 = rng.normal(0.0, np.sqrt(2.0 / (channels * 9)), size=(HIDDEN, channels, 3, 3))
        w2 = rng.normal(0.0, np.sqrt(1.0 / (HIDDEN * 9)), size=(out, HIDDEN, 3, 3))
        return cls(Tensor(w1), Tensor(np.zeros(HIDDEN)), Tensor(w2), Tensor(np.full(out, 0.5)), scale)

    @classmethod
    def zeros(cls, scale: int = 4, channels: int = 3) -> "ToyModelParams":
        out = channels * scale * scale
        return cls(
            Tensor(np.zeros((HIDDEN, channels, 3, 3))),
            Tensor(np.zeros(HIDDEN)),
            Tensor(np.zeros((out, HIDDEN, 3, 3))),
            Tensor(np.zeros(out)),
            scale,
        )

    @staticmethod
    def names() -> tuple:
        return tuple(f.name for f in fields(ToyModelParams) if f.name != "scale")

    def arrays(self) -> dict:
        return {name: getattr(self, name).data for name in self.names()}

    @classmethod
    def from_arrays(cls, arrays: dict, scale: int, requires_grad: bool = False) -> "ToyModelParams":
        return cls(**{n: Tensor(arrays[n], requires_grad=requires_grad) for n in cls.names()}, scale=scale)

    def with_grad(self) -> "ToyModelParams":
        """Fresh leaf tensors that record gradients."""
        return self.from_arrays(self.arrays(), self.scale, requires_grad=True)

    def grads(self) -> dict:
        return {n: getattr(self, n).grad for n in self.names()}

    @property
    def count(self) -> int:
        return sum(a.size for a in self.arrays().values())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    def from_vector(self, vec) -> "ToyModelParams":
        """Same layout as ``self``; ``vec`` may be a Tensor, in which case slices stay on the tape."""
        vec = as_tensor(vec)
        parts = {}
        offset = 0
        for n, a in self.arrays().items():
            parts[n] = _slice(vec, offset, a.size).reshape(a.shape)
            offset += a.size
        return ToyModelParams(**parts, scale=self.scale)


class _Slice(Function):
    def forward(self, x, start, stop):
        self.start, self.stop = start, stop
        return x[start:stop]

    def backward(self, grad):
        g = np.zeros(self.inputs[0].shape)
        g[self.start:self.stop] = grad
        return (g,)


def _slice(vec: Tensor, start: int, length: int) -> Tensor:
    return _Slice.apply(vec, start=start, stop=start + length)


def toy_forward(params: ToyModelParams, lr_batch) -> Tensor:
    x = as_tensor(lr_batch)
    hidden = conv2d(x, params.conv1_w, params.conv1_b).relu()
    return pixel_shuffle(conv2d(hidden, params.conv2_w, params.conv2_b), params.scale)
