"""Training objectives with analytic gradients. All arithmetic is float64."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_ALPHA = 4.0
DEFAULT_BETA = 2.0


@dataclass(frozen=True)
class HeatmapLossParams:
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    n_k: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.n_k < 1:
            raise ValueError(f"n_k must be >= 1, got {self.n_k}")


def count_peaks(target: np.ndarray) -> int:
    """Number of exact-1 cells in a target heatmap, floored at 1."""
    return max(int(np.count_nonzero(np.asarray(target) == 1.0)), 1)


def params_for_target(target: np.ndarray, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA):
    return HeatmapLossParams(alpha, beta, count_peaks(target))


def _pair(target, pred) -> tuple[np.ndarray, np.ndarray]:
    h = np.asarray(target, dtype=np.float64)
    hp = np.asarray(pred, dtype=np.float64)
    if h.shape != hp.shape:
        raise ValueError(f"shape mismatch: target {h.shape} vs prediction {hp.shape}")
    return h, hp


def weighted_l2_loss(target, pred, params: HeatmapLossParams = HeatmapLossParams()) -> float:
    """``sum(max((1+H)^a, (1+P)^b) * (H - P)^2) / n_k``."""
    h, hp = _pair(target, pred)
    weight = np.maximum((1.0 + h) ** params.alpha, (1.0 + hp) ** params.beta)
    return float(np.sum(weight * (h - hp) ** 2) / params.n_k)


def weighted_l2_grad(target, pred, params: HeatmapLossParams = HeatmapLossParams()) -> np.ndarray:
    """d loss / d pred. Where the two weights tie, the target branch is used."""
    h, hp = _pair(target, pred)
    wt = (1.0 + h) ** params.alpha
    wp = (1.0 + hp) ** params.beta
    d = h - hp
    g_target = -2.0 * wt * d
    g_pred = params.beta * (1.0 + hp) ** (params.beta - 1.0) * d * d - 2.0 * wp * d
    return np.where(wt >= wp, g_target, g_pred) / params.n_k


def offset_l1_loss(pred, target, mask) -> float:
    """Mean absolute error over all channels at masked cells; 0 for an empty mask."""
    p, t = _pair(pred, target)
    m = np.asarray(mask, dtype=bool)
    if p.shape[-2:] != m.shape:
        raise ValueError(f"mask shape {m.shape} does not match spatial shape {p.shape[-2:]}")
    if not m.any():
        return 0.0
    return float(np.mean(np.abs(p[..., m] - t[..., m])))


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    return z - np.log(np.sum(np.exp(z)))


def cross_entropy(logits, label: int) -> float:
    z = np.asarray(logits, dtype=np.float64).reshape(-1)
    if not 0 <= label < len(z):
        raise ValueError(f"label {label} outside [0, {len(z)})")
    return float(-log_softmax(z)[label])


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def occlusion_bce(occl_map, centers, flags) -> float:
    """Binary cross-entropy of occlusion logits read at object centers, averaged.

    ``centers`` are ``(gx, gy)`` cells; ``flags`` are the true occlusion states.
    """
    m = np.asarray(occl_map, dtype=np.float64)
    if m.ndim == 3:
        m = m[0]
    centers = list(centers)
    flags = np.asarray(list(flags), dtype=np.float64)
    if len(centers) != len(flags):
        raise ValueError("one flag per center required")
    if not centers:
        return 0.0
    gh, gw = m.shape
    for gx, gy in centers:
        if not (0 <= gx < gw and 0 <= gy < gh):
            raise ValueError(f"center ({gx}, {gy}) outside {gw}x{gh} grid")
    z = np.array([m[gy, gx] for gx, gy in centers])
    # log(1 + exp(-|z|)) + max(z, 0) - z * y
    per_object = np.logaddexp(0.0, -np.abs(z)) + np.maximum(z, 0.0) - z * flags
    return float(per_object.mean())
