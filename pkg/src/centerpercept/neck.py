"""Reference numerics for the neck: conv, transposed conv, resampling, BiFPN fusion.

All feature maps are ``(C, H, W)`` float32 arrays. Kernels are
``(out_ch, in_ch, kH, kW)``; convolution means cross-correlation, as in the
usual deep-learning frameworks.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ConvParams:
    weights: np.ndarray
    bias: np.ndarray | None = None
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float32)
        if self.weights.ndim != 4:
            raise ValueError(f"weights must be (out, in, kH, kW), got {self.weights.shape}")
        if self.bias is None:
            self.bias = np.zeros(self.weights.shape[0], dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32).reshape(-1)
        if self.bias.shape[0] != self.weights.shape[0]:
            raise ValueError("bias length must equal the number of output channels")
        if not np.all(np.isfinite(self.weights)) or not np.all(np.isfinite(self.bias)):
            raise ValueError("conv parameters must be finite")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def identity(cls, channels: int) -> ConvParams:
        w = np.zeros((channels, channels, 1, 1), dtype=np.float32)
        w[np.arange(channels), np.arange(channels)] = 1.0
        return cls(w)


def _check_input(x: np.ndarray, params: ConvParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3:
        raise ValueError(f"input must be (C, H, W), got {x.shape}")
    if x.shape[0] != params.in_channels:
        raise ValueError(f"input has {x.shape[0]} channels, kernel expects {params.in_channels}")
    return x


def conv2d_ref(x: np.ndarray, params: ConvParams) -> np.ndarray:
    """Zero-padded cross-correlation: ``out = floor((H + 2p - k) / s) + 1`` per axis."""
    x = _check_input(x, params)
    _, kh, kw = params.weights.shape[1:]
    s, p = params.stride, params.padding
    xp = np.pad(x.astype(np.float64), ((0, 0), (p, p), (p, p)))
    h_out = (xp.shape[1] - kh) // s + 1
    w_out = (xp.shape[2] - kw) // s + 1
    if h_out < 1 or w_out < 1:
        raise ValueError("kernel larger than padded input")
    w = params.weights.astype(np.float64)
    out = np.zeros((params.out_channels, h_out, w_out), dtype=np.float64)
    # one tap at a time: a strided view of the input times a (out, in) matrix
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + s * (h_out - 1) + 1:s, j:j + s * (w_out - 1) + 1:s]
            out += np.einsum("oc,chw->ohw", w[:, :, i, j], patch)
    out += params.bias[:, None, None]
    return out.astype(np.float32)


def transposed_conv2d_ref(x: np.ndarray, params: ConvParams, stride: int | None = None) -> np.ndarray:
    """Transposed convolution; kernel layout is ``(out, in, kH, kW)`` like ``conv2d_ref``.

    ``out = (H - 1) * s - 2p + k`` per axis. Each input pixel stamps the kernel,
    scaled by its value, at ``s * position - p``.
    """
    x = _check_input(x, params)
    s = params.stride if stride is None else stride
    p = params.padding
    _, kh, kw = params.weights.shape[1:]
    c, h, w_in = x.shape
    full = np.zeros((params.out_channels, (h - 1) * s + kh, (w_in - 1) * s + kw), dtype=np.float64)
    w = params.weights.astype(np.float64)
    xd = x.astype(np.float64)
    for i in range(kh):
        for j in range(kw):
            full[:, i:i + s * (h - 1) + 1:s, j:j + s * (w_in - 1) + 1:s] += np.einsum(
                "oc,chw->ohw", w[:, :, i, j], xd
            )
    h_out = (h - 1) * s - 2 * p + kh
    w_out = (w_in - 1) * s - 2 * p + kw
    if h_out < 1 or w_out < 1:
        raise ValueError("padding removes the whole output")
    out = full[:, p:p + h_out, p:p + w_out] + params.bias[:, None, None]
    return out.astype(np.float32)


def bilinear_kernel(channels: int, kernel_size: int = 4) -> ConvParams:
    """Per-channel transposed-conv weights that upsample by ``kernel_size // 2``."""
    if kernel_size % 2:
        raise ValueError("bilinear kernel size must be even")
    factor = (kernel_size + 1) // 2
    center = factor - 0.5
    og = np.arange(kernel_size, dtype=np.float64)
    filt = 1.0 - np.abs(og - center) / factor
    k2 = np.outer(filt, filt)
    w = np.zeros((channels, channels, kernel_size, kernel_size), dtype=np.float32)
    w[np.arange(channels), np.arange(channels)] = k2
    return ConvParams(w, stride=factor, padding=(kernel_size - factor) // 2)


def upsample_nearest(x: np.ndarray, factor: int = 2) -> np.ndarray:
    if factor <= 0:
        raise ValueError(f"upsample factor must be positive, got {factor}")
    x = np.asarray(x)
    return np.repeat(np.repeat(x, factor, axis=-2), factor, axis=-1)


def maxpool(x: np.ndarray, k: int = 2, stride: int = 2) -> np.ndarray:
    if k <= 0 or stride <= 0:
        raise ValueError("pool size and stride must be positive")
    x = np.asarray(x)
    h, w = x.shape[-2:]
    h_out = (h - k) // stride + 1
    w_out = (w - k) // stride + 1
    out = None
    for i in range(k):
        for j in range(k):
            v = x[..., i:i + stride * (h_out - 1) + 1:stride, j:j + stride * (w_out - 1) + 1:stride]
            out = v.copy() if out is None else np.maximum(out, v)
    return out


@dataclass
class FusionWeights:
    """Scalar fusion weights keyed by stride. Negative values are clamped to 0."""

    top_down: dict[int, float] = field(default_factory=dict)
    bottom_up: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        for table in (self.top_down, self.bottom_up):
            for key, value in table.items():
                if not np.isfinite(value):
                    raise ValueError(f"fusion weight for stride {key} is not finite")
                table[key] = max(float(value), 0.0)

    @classmethod
    def constant(cls, strides, value: float) -> FusionWeights:
        strides = sorted(strides)
        return cls({s: value for s in strides[:-1]}, {s: value for s in strides[1:]})


@dataclass
class FusionConvs:
    top_down: dict[int, ConvParams]
    bottom_up: dict[int, ConvParams]

    @classmethod
    def identity(cls, strides, channels: int) -> FusionConvs:
        ident = ConvParams.identity(channels)
        return cls({s: ident for s in strides}, {s: ident for s in strides})


def _same_conv(x: np.ndarray, params: ConvParams) -> np.ndarray:
    kh, kw = params.weights.shape[2:]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("fusion convs need odd kernels")
    same = ConvParams(params.weights, params.bias, 1, kh // 2)
    return conv2d_ref(x, same)


def bifpn_fuse(
    features: Mapping[int, np.ndarray],
    weights: FusionWeights,
    convs: FusionConvs | Mapping[int, ConvParams],
) -> dict[int, np.ndarray]:
    """Two-pass fusion over a pyramid keyed by stride.

    Top-down, coarse to fine: ``T = F`` at the coarsest level, otherwise
    ``T_s = conv(F_s + up(T_2s) * w_td[s])``. Bottom-up, fine to coarse:
    ``B = T`` at the finest level, otherwise ``B_s = conv(T_s + down(B_s/2) * w_bu[s])``.
    A one-level pyramid is passed through that level's bottom-up conv.
    """
    if not isinstance(convs, FusionConvs):
        convs = FusionConvs(dict(convs), dict(convs))
    strides = sorted(features)
    if not strides:
        raise ValueError("empty feature pyramid")
    feats = {s: np.asarray(features[s], dtype=np.float32) for s in strides}
    channels = {f.shape[0] for f in feats.values()}
    if len(channels) != 1 or any(f.ndim != 3 for f in feats.values()):
        raise ValueError("all pyramid levels need the same (C, H, W) layout and channel count")
    for fine, coarse in zip(strides, strides[1:]):
        if coarse != 2 * fine:
            raise ValueError(f"strides must double between levels, got {fine} -> {coarse}")
        fh, fw = feats[fine].shape[1:]
        ch, cw = feats[coarse].shape[1:]
        if (fh, fw) != (2 * ch, 2 * cw):
            raise ValueError(
                f"level {coarse} has spatial {(ch, cw)}, expected half of {(fh, fw)}"
            )

    if len(strides) == 1:
        s = strides[0]
        conv = convs.bottom_up.get(s) or convs.top_down.get(s)
        if conv is None:
            raise ValueError(f"no conv for stride {s}")
        return {s: _same_conv(feats[s], conv)}

    top = {strides[-1]: feats[strides[-1]]}
    for s in reversed(strides[:-1]):
        fused = feats[s] + upsample_nearest(top[2 * s], 2) * np.float32(weights.top_down.get(s, 0.0))
        top[s] = _same_conv(fused, convs.top_down[s])

    out = {strides[0]: top[strides[0]]}
    for s in strides[1:]:
        fused = top[s] + maxpool(out[s // 2], 2, 2) * np.float32(weights.bottom_up.get(s, 0.0))
        out[s] = _same_conv(fused, convs.bottom_up[s])
    return out


def simple_neck(
    feature: np.ndarray,
    convs: list[ConvParams],
    upconvs: list[ConvParams],
) -> tuple[np.ndarray, np.ndarray]:
    """Conv / transposed-conv ladder from stride 32 up to stride 4.

    Returns ``(high_res, tagging)``; the tagging map is the first conv's output.
    """
    if len(convs) != len(upconvs) or not convs:
        raise ValueError("need one transposed conv per conv layer")
    x = np.asarray(feature, dtype=np.float32)
    tagging = None
    for conv, up in zip(convs, upconvs):
        x = _same_conv(x, conv)
        if tagging is None:
            tagging = x
        x = transposed_conv2d_ref(x, up)
    return x, tagging
