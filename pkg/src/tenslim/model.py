"""Desk-scale reference classifier with hand-derived backprop.

Architecture (fixed): 3x3 valid convolution -> ReLU -> global average pool
-> fully-connected -> ReLU -> classifier.  The convolution kernel and the
first FC weight are compressible (may be LowRankSparseLayer); the
classifier weight and all biases stay dense.

Gradients are computed by the chain rule per layer; gradients w.r.t.
low-rank factors and sparse entries flow through the weight reconstruction
performed on every forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteGradient, NonFiniteLogits, ShapeMismatch
from .grads import factor_grads, trainable_arrays
from .lrs import LowRankSparseLayer, weight_gradients

COMPRESSIBLE = ("conv.w", "fc1.w")  # classifier fc2.w and biases excluded


@dataclass
class Architecture:
    height: int = 8
    width: int = 8
    in_channels: int = 1
    conv_channels: int = 8
    kernel: int = 3
    hidden: int = 32
    classes: int = 10

    def to_dict(self) -> dict:
        return {"height": self.height, "width": self.width,
                "in_channels": self.in_channels,
                "conv_channels": self.conv_channels, "kernel": self.kernel,
                "hidden": self.hidden, "classes": self.classes}

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(**d)


@dataclass
class ReferenceModel:
    arch: Architecture
    params: dict = field(default_factory=dict)

    def weight(self, key: str) -> np.ndarray:
        """Effective dense value of a parameter (reconstructing if needed)."""
        p = self.params[key]
        return p.effective_weight() if isinstance(p, LowRankSparseLayer) else p

    def compressed_layers(self) -> list:
        return [p for p in self.params.values()
                if isinstance(p, LowRankSparseLayer)]

    def trainables(self) -> list:
        """(key, array) pairs for every trainable array, in a stable order."""
        out = []
        for key in sorted(self.params):
            p = self.params[key]
            if isinstance(p, LowRankSparseLayer):
                if p.low_rank is not None:
                    for i, arr in enumerate(trainable_arrays(p.low_rank)):
                        out.append((f"{key}/L/{i}", arr))
                if p.sparse is not None:
                    out.append((f"{key}/sparse", p.sparse))
            else:
                out.append((key, p))
        return out


def build_reference_model(arch: Architecture, seed: int = 0) -> ReferenceModel:
    rng = np.random.default_rng(seed)
    k, cin, cout = arch.kernel, arch.in_channels, arch.conv_channels

    def he(shape, fan_in):
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)

    params = {
        "conv.w": he((k, k, cin, cout), k * k * cin),
        "conv.b": np.zeros(cout),
        "fc1.w": he((cout, arch.hidden), cout),
        "fc1.b": np.zeros(arch.hidden),
        "fc2.w": he((arch.hidden, arch.classes), arch.hidden),
        "fc2.b": np.zeros(arch.classes),
    }
    return ReferenceModel(arch, params)


def forward(model: ReferenceModel, x: np.ndarray):
    """Run a batch (B, H, W, C) through the model.

    Returns (logits, cache); the cache feeds :func:`backward`.
    """
    if x.ndim != 4:
        raise ShapeMismatch(f"expected (B, H, W, C) batch, got {x.shape}")
    k = model.arch.kernel
    conv_w = model.weight("conv.w")
    b, h, w, _ = x.shape
    ho, wo = h - k + 1, w - k + 1
    conv = np.zeros((b, ho, wo, model.arch.conv_channels))
    for di in range(k):
        for dj in range(k):
            conv += x[:, di:di + ho, dj:dj + wo, :] @ conv_w[di, dj]
    conv += model.params["conv.b"]
    relu1 = np.maximum(conv, 0.0)
    pooled = relu1.mean(axis=(1, 2))
    fc1_w = model.weight("fc1.w")
    pre1 = pooled @ fc1_w + model.params["fc1.b"]
    relu2 = np.maximum(pre1, 0.0)
    logits = relu2 @ model.weight("fc2.w") + model.params["fc2.b"]
    if not np.isfinite(logits).all():
        raise NonFiniteLogits("non-finite logits in forward pass")
    cache = {"x": x, "conv": conv, "relu1": relu1, "pooled": pooled,
             "pre1": pre1, "relu2": relu2, "conv_w": conv_w, "fc1_w": fc1_w}
    return logits, cache


def backward(model: ReferenceModel, cache: dict, d_logits: np.ndarray) -> dict:
    """Gradients of the scalar loss w.r.t. every trainable array.

    Keys match ``model.trainables()``; masked sparse entries get zero.
    """
    x, relu2 = cache["x"], cache["relu2"]
    k = model.arch.kernel
    grads = {}

    grads["fc2.w"] = relu2.T @ d_logits
    grads["fc2.b"] = d_logits.sum(axis=0)
    d_relu2 = d_logits @ model.weight("fc2.w").T
    d_pre1 = d_relu2 * (cache["pre1"] > 0)

    d_fc1_w = cache["pooled"].T @ d_pre1
    grads["fc1.b"] = d_pre1.sum(axis=0)
    d_pooled = d_pre1 @ cache["fc1_w"].T

    b, ho, wo, _ = cache["relu1"].shape
    d_relu1 = np.broadcast_to(d_pooled[:, None, None, :] / (ho * wo),
                              cache["relu1"].shape)
    d_conv = d_relu1 * (cache["conv"] > 0)
    grads["conv.b"] = d_conv.sum(axis=(0, 1, 2))
    d_conv_w = np.zeros_like(cache["conv_w"])
    for di in range(k):
        for dj in range(k):
            patch = x[:, di:di + ho, dj:dj + wo, :]
            d_conv_w[di, dj] = np.einsum("bijc,bijf->cf", patch, d_conv)

    _spread(model, grads, "conv.w", d_conv_w)
    _spread(model, grads, "fc1.w", d_fc1_w)
    for g in grads.values():
        if not np.isfinite(g).all():
            raise NonFiniteGradient("non-finite gradient")
    return grads


def _spread(model: ReferenceModel, grads: dict, key: str,
            d_weight: np.ndarray) -> None:
    p = model.params[key]
    if not isinstance(p, LowRankSparseLayer):
        grads[key] = d_weight
        return
    d_sparse, d_low = weight_gradients(p, d_weight)
    if p.low_rank is not None and d_low is not None:
        for i, g in enumerate(factor_grads(p.low_rank, d_low)):
            grads[f"{key}/L/{i}"] = g
    if d_sparse is not None:
        grads[f"{key}/sparse"] = d_sparse
