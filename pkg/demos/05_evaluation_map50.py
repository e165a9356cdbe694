"""Score detection results against ground truth with the mask mAP50
evaluator, from perfect results down to noisy ones."""

import numpy as np

from segfuse import (
    Annotation,
    Category,
    Dataset,
    Detection,
    DetectionSet,
    ImageInfo,
    map50,
    rle_encode,
)

SIZE = 32
rng = np.random.default_rng(1)


def rect_mask(r0, c0, h, w):
    m = np.zeros((SIZE, SIZE), dtype=np.uint8)
    m[r0:r0 + h, c0:c0 + w] = 1
    return m


# Ground truth: two images, two categories, four instances.
gt_specs = [
    (1, 1, (2, 2, 10, 10)),
    (1, 2, (16, 16, 8, 8)),
    (2, 1, (4, 10, 9, 9)),
    (2, 2, (20, 4, 7, 7)),
]
annotations = []
for i, (image_id, cat, (r0, c0, h, w)) in enumerate(gt_specs, start=1):
    m = rect_mask(r0, c0, h, w)
    annotations.append(
        Annotation(i, image_id, cat, rle_encode(m),
                   (float(c0), float(r0), float(w), float(h)), float(m.sum()), 0)
    )
ds = Dataset(
    (ImageInfo(1, SIZE, SIZE, "a.png"), ImageInfo(2, SIZE, SIZE, "b.png")),
    (Category(1, "flat"), Category(2, "gable")),
    tuple(annotations),
)


def results_from(specs):
    return DetectionSet(tuple(
        Detection(image_id, cat, score,
                  (float(c0), float(r0), float(w), float(h)),
                  rle_encode(rect_mask(r0, c0, h, w)))
        for image_id, cat, score, (r0, c0, h, w) in specs
    ))


# 1) GT fed back as results: every category reaches AP 1.0.
perfect = results_from(
    [(img, cat, 1.0, box) for img, cat, box in gt_specs]
)
print("perfect results:")
print(map50(ds, perfect).to_table(ds))

# 2) Jittered boxes plus a false positive: scores drop.
noisy = results_from([
    (1, 1, 0.95, (3, 3, 10, 10)),    # 1px shift, still above the IoU bar
    (1, 2, 0.90, (16, 19, 8, 8)),    # shifted too far: below 0.5 IoU
    (2, 1, 0.85, (4, 10, 9, 9)),
    (2, 2, 0.80, (20, 4, 7, 7)),
    (2, 1, 0.70, (22, 22, 6, 6)),    # false positive
])
print("\nnoisy results:")
report = map50(ds, noisy)
print(report.to_table(ds))

print("\nper-category precision/recall points:")
for cat, curve in report.pr_curves.items():
    pts = " ".join(f"({r:.2f},{p:.2f})" for r, p in curve)
    print(f"  category {cat}: {pts}")
