"""Desk-scale numeric kernels: dual-backbone stage composition, seesaw loss,
checkpoint averaging, and the cyclical learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    ChannelMismatch,
    ConfigError,
    DimensionMismatch,
    EmptyList,
    ShapeMismatch,
    StageCountMismatch,
)

StageFn = Callable[[np.ndarray], np.ndarray]


def _as_feature_map(values) -> np.ndarray:
    m = np.asarray(values, dtype=np.float64)
    if m.ndim == 2:
        m = m[:, :, None]
    if m.ndim != 3 or min(m.shape) < 1:
        raise ShapeMismatch(f"feature map must be HxWxC with positive dims, got {m.shape}")
    if not np.isfinite(m).all():
        raise ShapeMismatch("feature map values must be finite")
    return m


def nearest_resize(values, target_h: int, target_w: int) -> np.ndarray:
    """Nearest-neighbor resize: output(r, c) = input(floor(r*h/th), floor(c*w/tw))."""
    m = _as_feature_map(values)
    if target_h < 1 or target_w < 1:
        raise ShapeMismatch(f"target dims must be positive, got {target_h}x{target_w}")
    h, w = m.shape[:2]
    rows = np.floor(np.arange(target_h) * (h / target_h)).astype(np.intp)
    cols = np.floor(np.arange(target_w) * (w / target_w)).astype(np.intp)
    return m[np.ix_(rows, cols)]


def identity_stage() -> StageFn:
    return lambda x: x


def affine_stage(scale, bias) -> StageFn:
    """Per-channel affine stage function x -> x * scale + bias."""
    s = np.asarray(scale, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    return lambda x: x * s + b


def _halved(dim: int) -> int:
    return (dim + 1) // 2  # halving rounds up


def validate_pyramid(stages: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Check the strictly-halving shape contract and uniform channel count."""
    if not stages:
        raise StageCountMismatch("pyramid has no stages")
    maps = [_as_feature_map(s) for s in stages]
    channels = maps[0].shape[2]
    for j in range(1, len(maps)):
        prev, cur = maps[j - 1], maps[j]
        want = (_halved(prev.shape[0]), _halved(prev.shape[1]))
        if cur.shape[:2] != want:
            raise ShapeMismatch(
                f"stage {j} is {cur.shape[:2]}, expected {want} (half of stage {j - 1})"
            )
        if cur.shape[2] != channels:
            raise ChannelMismatch(
                f"stage {j} has {cur.shape[2]} channels, expected {channels}"
            )
    return maps


def cbnet_compose(
    lead_init,
    aux_stages: Sequence[np.ndarray],
    stage_fns: Sequence[StageFn],
) -> list[np.ndarray]:
    """Dense auxiliary-to-lead stage composition.

    For each stage j = 1..L the lead map is
    ``G_j( sum_{i=j..L} resize(aux_i, stage-j dims) + resize(lead_{j-1}, stage-j dims) )``
    where resize is nearest-neighbor and lead_0 is ``lead_init`` at stage-0
    resolution (one halving above the first auxiliary stage).
    """
    aux = validate_pyramid(aux_stages)
    L = len(aux)
    if len(stage_fns) != L:
        raise StageCountMismatch(f"{len(stage_fns)} stage fns for {L} stages")
    lead = _as_feature_map(lead_init)
    want0 = (_halved(lead.shape[0]), _halved(lead.shape[1]))
    if aux[0].shape[:2] != want0:
        raise ShapeMismatch(
            f"stage 1 is {aux[0].shape[:2]}, expected {want0} (half of lead init"
            f" {lead.shape[:2]})"
        )
    if lead.shape[2] != aux[0].shape[2]:
        raise ChannelMismatch(
            f"lead init has {lead.shape[2]} channels, aux has {aux[0].shape[2]}"
        )

    out: list[np.ndarray] = []
    prev = lead
    for j in range(L):
        hj, wj = aux[j].shape[:2]
        acc = nearest_resize(prev, hj, wj)
        for i in range(j, L):
            acc = acc + nearest_resize(aux[i], hj, wj)
        cur = np.asarray(stage_fns[j](acc), dtype=np.float64)
        if cur.shape[:2] != (hj, wj):
            raise ShapeMismatch(
                f"stage fn {j + 1} changed spatial dims {acc.shape[:2]} -> {cur.shape[:2]}"
            )
        out.append(cur)
        prev = cur
    return out


# ---------------------------------------------------------------------------
# Seesaw loss


@dataclass(frozen=True)
class SeesawParams:
    """Mitigation/compensation exponents plus cumulative class counts."""

    class_counts: tuple[float, ...]
    p: float = 0.8
    q: float = 2.0

    def __post_init__(self) -> None:
        if self.p < 0 or self.q < 0:
            raise ConfigError(f"p and q must be >= 0, got p={self.p} q={self.q}")
        if len(self.class_counts) == 0 or any(c <= 0 for c in self.class_counts):
            raise ConfigError("class counts must be positive")


def seesaw_loss(
    logits, label: int, params: SeesawParams
) -> tuple[float, np.ndarray]:
    """Seesaw cross-entropy for one sample, with its analytic gradient.

    Negative-class logits are reweighted by S_ij = M_ij * C_ij where
    M_ij = min(1, (N_j / N_i)^p) and C_ij = max(1, (sigma_j / sigma_i)^q)
    with sigma the plain softmax of the logits and i the true label. The
    compensation factor C is treated as constant in the gradient
    (stop-gradient), so d(loss)/dz is the softmax of the reweighted logits
    minus the one-hot label.
    """
    z = np.asarray(logits, dtype=np.float64)
    counts = np.asarray(params.class_counts, dtype=np.float64)
    if z.ndim != 1 or z.shape != counts.shape:
        raise DimensionMismatch(
            f"logits shape {z.shape} does not match {counts.shape} class counts"
        )
    if not 0 <= label < z.size:
        raise DimensionMismatch(f"label {label} out of range for {z.size} classes")

    # log S_ij, computed in log space so large logits cannot overflow:
    # log M = min(0, p*log(N_j/N_i));  log C = max(0, q*(z_j - z_i)).
    log_m = np.minimum(0.0, params.p * (np.log(counts) - math.log(counts[label])))
    log_c = np.maximum(0.0, params.q * (z - z[label]))
    log_s = log_m + log_c
    log_s[label] = 0.0

    logw = z + log_s
    mx = logw.max()
    lse = mx + math.log(np.exp(logw - mx).sum())
    loss = lse - z[label]
    grad = np.exp(logw - lse)
    grad[label] -= 1.0
    return float(loss), grad


# ---------------------------------------------------------------------------
# SWA utilities

Checkpoint = Mapping[str, np.ndarray]


def swa_average(checkpoints: Sequence[Checkpoint]) -> dict[str, np.ndarray]:
    """Element-wise mean of named parameter arrays across checkpoints."""
    if not checkpoints:
        raise EmptyList("no checkpoints to average")
    names = list(checkpoints[0].keys())
    name_set = set(names)
    out: dict[str, np.ndarray] = {}
    for ckpt in checkpoints:
        if set(ckpt.keys()) != name_set:
            raise ShapeMismatch("checkpoints carry different parameter names")
    for name in names:
        arrays = [np.asarray(c[name], dtype=np.float64) for c in checkpoints]
        shape = arrays[0].shape
        if any(a.shape != shape for a in arrays):
            raise ShapeMismatch(f"parameter {name!r} has inconsistent shapes")
        out[name] = np.mean(arrays, axis=0)
    return out


def cyclical_lr(
    iteration: int, iters_per_cycle: int, lr_max: float, lr_min: float
) -> float:
    """Linear descent from lr_max to lr_min within each cycle of iterations."""
    if iters_per_cycle < 1:
        raise ConfigError(f"iters_per_cycle must be >= 1, got {iters_per_cycle}")
    if not (lr_max >= lr_min > 0):
        raise ConfigError(f"need lr_max >= lr_min > 0, got {lr_max}, {lr_min}")
    if iters_per_cycle == 1:
        return lr_max
    pos = iteration % iters_per_cycle
    return lr_max - (lr_max - lr_min) * pos / (iters_per_cycle - 1)
