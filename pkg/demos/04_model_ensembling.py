"""Fuse detections from two synthetic models with WBF (boxes) and WSF
(boxes + masks), and compare against a plain NMS baseline."""

import numpy as np

from segfuse import (
    Detection,
    DetectionSet,
    FusionConfig,
    ModelOutput,
    nms_baseline,
    rle_decode,
    rle_encode,
    wbf,
    wsf,
)

SIZE = 48
IMAGE_ID = 1


def rect_mask(r0, c0, h, w):
    m = np.zeros((SIZE, SIZE), dtype=np.uint8)
    m[r0:r0 + h, c0:c0 + w] = 1
    return m


def det(cat, score, r0, c0, h, w):
    return Detection(IMAGE_ID, cat, score, (float(c0), float(r0), float(w), float(h)),
                     rle_encode(rect_mask(r0, c0, h, w)))


# Model A is confident and slightly oversized; model B is shifted by a pixel.
model_a = ModelOutput(1.0, DetectionSet((
    det(1, 0.90, 4, 4, 12, 12),
    det(1, 0.40, 30, 30, 8, 8),     # proposal only model A saw
    det(2, 0.75, 20, 6, 9, 9),
)))
model_b = ModelOutput(1.0, DetectionSet((
    det(1, 0.70, 5, 5, 12, 12),
    det(2, 0.65, 21, 7, 9, 9),
)))

cfg = FusionConfig(iou_threshold=0.55, mask_threshold=0.5, score_rescale=True)

print("WBF (boxes + scores):")
for inst in wbf([model_a, model_b], IMAGE_ID, cfg):
    members = ", ".join(f"model{m}/det{d}" for m, d in inst.cluster)
    print(f"  cat={inst.category_id} score={inst.score:.3f} "
          f"box=({inst.bbox[0]:.1f},{inst.bbox[1]:.1f},{inst.bbox[2]:.1f},{inst.bbox[3]:.1f}) "
          f"from [{members}]")
print("  note: the single-model proposal is down-weighted by the rescale rule")

print("\nWSF (adds weighted mask votes):")
for inst in wsf([model_a, model_b], IMAGE_ID, cfg):
    area = rle_decode(inst.mask).sum()
    print(f"  cat={inst.category_id} score={inst.score:.3f} mask_area={area}")

print("\nNMS baseline keeps the highest-scoring overlapping detection instead:")
merged = DetectionSet(model_a.detections.entries + model_b.detections.entries)
for d in nms_baseline(merged, 0.5, use_mask_iou=True).entries:
    print(f"  cat={d.category_id} score={d.score:.2f} bbox={d.bbox}")
