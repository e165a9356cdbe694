"""Contest-compatible mask mAP50: greedy matching, 101-point AP, macro mean."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, DetectionSet, annotation_mask
from .errors import NoGroundTruth, ShapeMismatch, ValidationError
from .masks import mask_intersection_matrix, rle_decode

RECALL_SAMPLES = np.linspace(0.0, 1.0, 101)


class MatchFlag(enum.Enum):
    TP = "TP"
    FP = "FP"
    IGNORED = "Ignored"


@dataclass(frozen=True)
class MatchResult:
    """Per-detection match flags in score order, plus the non-crowd GT count."""

    flags: tuple[MatchFlag, ...]
    scores: tuple[float, ...]
    n_gt: int


@dataclass(frozen=True)
class EvalReport:
    ap_per_category: dict  # category_id -> AP (only categories with GT)
    map50: float
    pr_curves: dict  # category_id -> list of (recall, precision)
    gt_counts: dict  # category_id -> non-crowd GT count

    def to_json_dict(self) -> dict:
        return {
            "mAP50": self.map50,
            "per_category": {
                str(cid): {
                    "AP": ap,
                    "gt_count": self.gt_counts[cid],
                    "pr_curve": [list(pt) for pt in self.pr_curves[cid]],
                }
                for cid, ap in self.ap_per_category.items()
            },
        }

    def to_table(self, ds: Dataset | None = None) -> str:
        names = {c.id: c.name for c in ds.categories} if ds else {}
        rows = [("category", "GT", "AP")]
        for cid in sorted(self.ap_per_category):
            label = f"{names.get(cid, 'category')} ({cid})"
            rows.append((label, str(self.gt_counts[cid]), f"{self.ap_per_category[cid]:.4f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = [
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
            for row in rows
        ]
        lines.append(f"mAP50 = {self.map50:.4f}")
        return "\n".join(lines)


def match_detections(
    pred_scores,
    pred_masks,
    gt_masks,
    gt_iscrowd=None,
    iou_threshold: float = 0.5,
) -> MatchResult:
    """Greedy score-descending matching of detections to ground truth.

    Each detection claims the unclaimed non-crowd GT with the highest mask
    IoU >= threshold. Detections with no qualifying non-crowd GT whose
    overlap with some crowd GT reaches the threshold are Ignored (crowd
    overlap is intersection over detection area, never claimed); the rest
    are FPs.
    """
    scores = np.asarray(pred_scores, dtype=np.float64)
    preds = np.asarray(pred_masks)
    gts = np.asarray(gt_masks)
    if preds.ndim != 3 or (gts.size and gts.ndim != 3):
        raise ShapeMismatch("masks must be stacked as (n, h, w)")
    if scores.shape[0] != preds.shape[0]:
        raise ShapeMismatch("one score per prediction mask required")
    crowd = (
        np.zeros(gts.shape[0], dtype=bool)
        if gt_iscrowd is None
        else np.asarray(gt_iscrowd, dtype=bool)
    )
    n_gt = int((~crowd).sum()) if gts.size else 0

    order = np.argsort(-scores, kind="stable")
    if gts.shape[0] == 0 or preds.shape[0] == 0:
        flags = tuple(MatchFlag.FP for _ in order)
        return MatchResult(flags, tuple(float(scores[i]) for i in order), n_gt)

    if preds.shape[1:] != gts.shape[1:]:
        raise ShapeMismatch(
            f"prediction masks {preds.shape[1:]} vs GT masks {gts.shape[1:]}"
        )
    inter = mask_intersection_matrix(preds, gts)
    pred_area = preds.reshape(preds.shape[0], -1).sum(axis=1, dtype=np.float64)
    gt_area = gts.reshape(gts.shape[0], -1).sum(axis=1, dtype=np.float64)
    union = pred_area[:, None] + gt_area[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
        # Crowd regions absorb detections: overlap relative to the detection.
        crowd_overlap = np.where(pred_area[:, None] > 0, inter / pred_area[:, None], 0.0)

    claimed = np.zeros(gts.shape[0], dtype=bool)
    flags: list[MatchFlag] = []
    for d in order:
        best = -1
        best_iou = iou_threshold
        for g in range(gts.shape[0]):
            if crowd[g] or claimed[g]:
                continue
            if iou[d, g] >= best_iou:
                best = g
                best_iou = iou[d, g]
        if best >= 0:
            claimed[best] = True
            flags.append(MatchFlag.TP)
            continue
        if any(
            crowd[g] and crowd_overlap[d, g] >= iou_threshold
            for g in range(gts.shape[0])
        ):
            flags.append(MatchFlag.IGNORED)
        else:
            flags.append(MatchFlag.FP)
    return MatchResult(tuple(flags), tuple(float(scores[i]) for i in order), n_gt)


def average_precision(flags, scores, n_gt: int) -> tuple[float, list[tuple[float, float]]]:
    """101-point interpolated AP from pooled match flags.

    Flags/scores are pooled over images; they are re-sorted by score here
    (stable, so input order breaks ties). Returns (AP, raw P/R points).
    """
    if n_gt < 1:
        raise NoGroundTruth("category has no ground-truth instances")
    flags = list(flags)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    tp = fp = 0
    recalls: list[float] = []
    precisions: list[float] = []
    for i in order:
        if flags[i] is MatchFlag.IGNORED:
            continue
        if flags[i] is MatchFlag.TP:
            tp += 1
        else:
            fp += 1
        recalls.append(tp / n_gt)
        precisions.append(tp / (tp + fp))
    if not recalls:
        return 0.0, []

    envelope = np.array(precisions, dtype=np.float64)
    for i in range(len(envelope) - 1, 0, -1):
        envelope[i - 1] = max(envelope[i - 1], envelope[i])
    rc = np.array(recalls, dtype=np.float64)
    idx = np.searchsorted(rc, RECALL_SAMPLES, side="left")
    sampled = np.where(idx < len(envelope), envelope[np.minimum(idx, len(envelope) - 1)], 0.0)
    return float(sampled.mean()), list(zip(recalls, precisions))


def map50(
    ds: Dataset,
    results: DetectionSet,
    iou_threshold: float = 0.5,
    max_dets: int | None = 100,
) -> EvalReport:
    """Macro-averaged mask AP at the given IoU threshold (default 0.5).

    Detections are capped at ``max_dets`` per image by score (None disables
    the cap); categories without ground truth are excluded from the mean.
    """
    image_ids = {img.id for img in ds.images}
    for det in results.entries:
        if det.image_id not in image_ids:
            raise ValidationError(f"detection references missing image {det.image_id}")
        if det.segmentation is None:
            raise ValidationError("evaluation requires a mask on every detection")

    gt_by_image: dict[int, list] = {img.id: [] for img in ds.images}
    for ann in ds.annotations:
        gt_by_image[ann.image_id].append(ann)
    det_by_image: dict[int, list] = {img.id: [] for img in ds.images}
    for det in results.entries:
        det_by_image[det.image_id].append(det)

    pooled_flags: dict[int, list[MatchFlag]] = {}
    pooled_scores: dict[int, list[float]] = {}
    gt_counts: dict[int, int] = {}

    for img in ds.images:
        dets = det_by_image[img.id]
        if max_dets is not None and len(dets) > max_dets:
            idx = np.argsort([-d.score for d in dets], kind="stable")[:max_dets]
            dets = [dets[i] for i in sorted(idx)]
        dets_by_cat: dict[int, list] = {}
        for det in dets:
            dets_by_cat.setdefault(det.category_id, []).append(det)
        gts_by_cat: dict[int, list] = {}
        for ann in gt_by_image[img.id]:
            gts_by_cat.setdefault(ann.category_id, []).append(ann)

        for cat in set(dets_by_cat) | set(gts_by_cat):
            cat_dets = dets_by_cat.get(cat, [])
            cat_gts = gts_by_cat.get(cat, [])
            gt_masks = np.stack(
                [annotation_mask(a, img.height, img.width) for a in cat_gts]
            ) if cat_gts else np.zeros((0, img.height, img.width), dtype=np.uint8)
            pred_masks = np.stack(
                [rle_decode(d.segmentation) for d in cat_dets]
            ) if cat_dets else np.zeros((0, img.height, img.width), dtype=np.uint8)
            res = match_detections(
                [d.score for d in cat_dets],
                pred_masks,
                gt_masks,
                [a.iscrowd for a in cat_gts],
                iou_threshold,
            )
            pooled_flags.setdefault(cat, []).extend(res.flags)
            pooled_scores.setdefault(cat, []).extend(res.scores)
            gt_counts[cat] = gt_counts.get(cat, 0) + res.n_gt

    ap_per_category: dict[int, float] = {}
    pr_curves: dict[int, list] = {}
    for cat, n_gt in gt_counts.items():
        if n_gt < 1:
            continue
        ap, curve = average_precision(
            pooled_flags.get(cat, []), pooled_scores.get(cat, []), n_gt
        )
        ap_per_category[cat] = ap
        pr_curves[cat] = curve
    mean = (
        float(np.mean(list(ap_per_category.values()))) if ap_per_category else 0.0
    )
    final_counts = {cat: n for cat, n in gt_counts.items() if n >= 1}
    return EvalReport(ap_per_category, mean, pr_curves, final_counts)
