"""Build a deliberately long-tailed synthetic dataset, print its statistics
table, and derive balanced-sampling repeat factors."""

import numpy as np

from segfuse import (
    Annotation,
    Category,
    Dataset,
    ImageInfo,
    dataset_stats,
    repeat_factors,
    rle_encode,
)

rng = np.random.default_rng(0)

N_IMAGES = 40
SIZE = 64
categories = (
    Category(1, "flat"),
    Category(2, "gable"),
    Category(3, "revolved"),  # the tail class: appears in very few images
)
images = tuple(ImageInfo(i + 1, SIZE, SIZE, f"tile_{i:03d}.png") for i in range(N_IMAGES))

annotations = []
ann_id = 1
for img in images:
    # every image holds a handful of common roofs and, rarely, a revolved one
    for _ in range(int(rng.integers(2, 6))):
        cat = 1 if rng.random() < 0.8 else 2
        side = int(rng.integers(3, 30))
        r0 = int(rng.integers(0, SIZE - side))
        c0 = int(rng.integers(0, SIZE - side))
        mask = np.zeros((SIZE, SIZE), dtype=np.uint8)
        mask[r0:r0 + side, c0:c0 + side] = 1
        annotations.append(
            Annotation(ann_id, img.id, cat, rle_encode(mask),
                       (float(c0), float(r0), float(side), float(side)),
                       float(side * side), 0)
        )
        ann_id += 1
    if img.id <= 2:  # only two images contain the tail class
        mask = np.zeros((SIZE, SIZE), dtype=np.uint8)
        mask[5:9, 5:9] = 1
        annotations.append(
            Annotation(ann_id, img.id, 3, rle_encode(mask), (5.0, 5.0, 4.0, 4.0), 16.0, 0)
        )
        ann_id += 1

ds = Dataset(images, categories, tuple(annotations))

report = dataset_stats(ds)
print(report.to_table())

print("\nrepeat factors (threshold t = 0.1):")
factors = repeat_factors(ds, t=0.1)
tail_images = [img_id for img_id, f in factors.items() if f > 1.0]
print(f"  images oversampled: {tail_images}")
for img_id in tail_images:
    print(f"  image {img_id}: factor {factors[img_id]:.3f}")
print("  every other image keeps factor 1.0")
