"""Weighted Boxes Fusion and its mask extension, Weighted Segmentation Fusion.

Detections from several models are clustered per category by IoU against the
cluster's running fused box; each cluster is replaced by one instance whose
box coordinates are averaged with weights w_i * s_i (model weight times
score), whose score is the weight-normalized score mean, and (for WSF) whose
mask is a weighted pixel vote over the member masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import Detection, DetectionSet
from .errors import ConfigError, MaskSizeMismatch, NoModels, WeightMismatch
from .masks import Box, RleMask, box_iou, mask_iou, rle_decode, rle_encode


@dataclass(frozen=True)
class ModelOutput:
    """One model's detections plus its ensemble weight."""

    weight: float
    detections: DetectionSet


@dataclass(frozen=True)
class FusionConfig:
    iou_threshold: float = 0.55
    skip_score: float = 0.0
    mask_threshold: float = 0.5
    score_rescale: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.iou_threshold < 1:
            raise ConfigError(f"iou_threshold must be in (0, 1): {self.iou_threshold}")
        if not 0 <= self.skip_score < 1:
            raise ConfigError(f"skip_score must be in [0, 1): {self.skip_score}")
        if not 0 < self.mask_threshold < 1:
            raise ConfigError(f"mask_threshold must be in (0, 1): {self.mask_threshold}")

    @classmethod
    def from_json_dict(cls, data: dict) -> "FusionConfig":
        known = {f for f in cls.__dataclass_fields__}
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown fusion config keys: {sorted(bad)}")
        return cls(**data)


@dataclass
class FusedInstance:
    category_id: int
    bbox: Box
    score: float
    mask: RleMask | None
    cluster: list[tuple[int, int]]  # (model index, index into that model's entries)


@dataclass
class _Cluster:
    category_id: int
    members: list[tuple[int, int]] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)  # w_i
    scores: list[float] = field(default_factory=list)  # s_i
    boxes: list[Box] = field(default_factory=list)
    model_ids: set[int] = field(default_factory=set)
    fused_box: Box = (0.0, 0.0, 0.0, 0.0)

    def add(self, model_idx: int, det_idx: int, w: float, det: Detection) -> None:
        self.members.append((model_idx, det_idx))
        self.weights.append(w)
        self.scores.append(det.score)
        self.boxes.append(det.bbox)
        self.model_ids.add(model_idx)
        if len(self.members) == 1:  # keep single-detection clusters bit-exact
            self.fused_box = det.bbox
            return
        ws = np.array(self.weights) * np.array(self.scores)
        coords = np.array(self.boxes, dtype=np.float64)
        self.fused_box = tuple((coords * ws[:, None]).sum(axis=0) / ws.sum())

    def fused_score(self) -> float:
        if len(self.members) == 1:
            return self.scores[0]
        ws = np.array(self.weights, dtype=np.float64)
        ss = np.array(self.scores, dtype=np.float64)
        return float((ws * ss).sum() / ws.sum())


def _check_models(models) -> None:
    if not models:
        raise NoModels("fusion needs at least one model output")
    for m in models:
        if not m.weight > 0:
            raise WeightMismatch(f"model weight must be positive, got {m.weight}")


def _build_clusters(models, image_id, cfg) -> list[_Cluster]:
    items = []  # (sort key, model_idx, det_idx, det)
    for model_idx, model in enumerate(models):
        for det_idx, det in enumerate(model.detections.entries):
            if det.image_id != image_id or det.score < cfg.skip_score:
                continue
            items.append((model_idx, det_idx, det))
    # Score-descending greedy clustering; ties resolved by box coordinates so
    # the outcome is independent of model/detection ordering.
    items.sort(key=lambda it: (-it[2].score, it[2].bbox, it[0], it[1]))

    clusters: dict[int, list[_Cluster]] = {}
    for model_idx, det_idx, det in items:
        group = clusters.setdefault(det.category_id, [])
        best, best_iou = None, cfg.iou_threshold
        for cluster in group:
            iou = box_iou(det.bbox, cluster.fused_box)
            if iou > best_iou:
                best, best_iou = cluster, iou
        if best is None:
            best = _Cluster(category_id=det.category_id)
            group.append(best)
        best.add(model_idx, det_idx, models[model_idx].weight, det)
    return [c for group in clusters.values() for c in group]


def _finalize(clusters, models, cfg) -> list[FusedInstance]:
    total_weight = sum(m.weight for m in models)
    out = []
    for cluster in clusters:
        score = cluster.fused_score()
        if cfg.score_rescale:
            contributing = sum(models[i].weight for i in cluster.model_ids)
            score *= min(1.0, contributing / total_weight)
        out.append(
            FusedInstance(
                category_id=cluster.category_id,
                bbox=cluster.fused_box,
                score=score,
                mask=None,
                cluster=sorted(cluster.members),
            )
        )
    out.sort(key=lambda f: (-f.score, f.category_id, f.bbox))
    return out


def wbf(
    models: list[ModelOutput], image_id: int, cfg: FusionConfig = FusionConfig()
) -> list[FusedInstance]:
    """Weighted Boxes Fusion for one image: fused boxes, scores, clusters."""
    _check_models(models)
    return _finalize(_build_clusters(models, image_id, cfg), models, cfg)


def wsf(
    models: list[ModelOutput], image_id: int, cfg: FusionConfig = FusionConfig()
) -> list[FusedInstance]:
    """Weighted Segmentation Fusion: WBF clusters plus weighted mask votes.

    A fused-mask pixel is set iff the w_i*s_i-weighted mean of the member
    masks at that pixel reaches ``cfg.mask_threshold``; instances whose fused
    mask comes out empty are dropped.
    """
    _check_models(models)
    clusters = _build_clusters(models, image_id, cfg)
    fused = _finalize(clusters, models, cfg)
    by_members = {tuple(sorted(c.members)): c for c in clusters}

    out = []
    for inst in fused:
        cluster = by_members[tuple(inst.cluster)]
        vote = None
        total = 0.0
        size = None
        for (model_idx, det_idx), w, s in zip(
            cluster.members, cluster.weights, cluster.scores
        ):
            det = models[model_idx].detections.entries[det_idx]
            if det.segmentation is None:
                raise MaskSizeMismatch(
                    f"detection {det_idx} of model {model_idx} carries no mask"
                )
            rle = det.segmentation
            if size is None:
                size = (rle.height, rle.width)
            elif (rle.height, rle.width) != size:
                raise MaskSizeMismatch(
                    f"mask sizes differ within image {image_id}: "
                    f"{size} vs {(rle.height, rle.width)}"
                )
            m = rle_decode(rle).astype(np.float64)
            vote = m * (w * s) if vote is None else vote + m * (w * s)
            total += w * s
        fused_mask = (vote / total) >= cfg.mask_threshold
        if not fused_mask.any():
            continue
        out.append(replace(inst, mask=rle_encode(fused_mask)))
    return out


def fused_to_detections(fused: list[FusedInstance], image_id: int) -> DetectionSet:
    """Convert fused instances back to the results-file detection format."""
    return DetectionSet(
        tuple(
            Detection(image_id, f.category_id, f.score, f.bbox, f.mask) for f in fused
        )
    )


def nms_baseline(
    dets: DetectionSet, iou_threshold: float = 0.5, use_mask_iou: bool = False
) -> DetectionSet:
    """Greedy per-category NMS baseline (box IoU or mask IoU)."""
    order: dict[tuple[int, int], list[tuple[int, Detection]]] = {}
    for idx, det in enumerate(dets.entries):
        order.setdefault((det.image_id, det.category_id), []).append((idx, det))

    keep_indices = []
    for group in order.values():
        group.sort(key=lambda it: (-it[1].score, it[0]))
        kept: list[tuple[int, Detection]] = []
        decoded: dict[int, np.ndarray] = {}

        def _mask(idx: int, det: Detection) -> np.ndarray:
            if idx not in decoded:
                if det.segmentation is None:
                    raise MaskSizeMismatch(f"detection {idx} carries no mask")
                decoded[idx] = rle_decode(det.segmentation)
            return decoded[idx]

        for idx, det in group:
            suppressed = False
            for kidx, kdet in kept:
                if use_mask_iou:
                    iou = mask_iou(_mask(idx, det), _mask(kidx, kdet))
                else:
                    iou = box_iou(det.bbox, kdet.bbox)
                if iou > iou_threshold:
                    suppressed = True
                    break
            if not suppressed:
                kept.append((idx, det))
        keep_indices.extend(idx for idx, _ in kept)

    keep_indices.sort()
    return DetectionSet(tuple(dets.entries[i] for i in keep_indices))
