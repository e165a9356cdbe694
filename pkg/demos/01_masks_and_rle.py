"""Walk through the mask toolbox: RLE codec, COCO strings, IoU, rasterization,
and instance transforms."""

import numpy as np

from segfuse import (
    TransformParams,
    box_iou,
    mask_iou,
    polygon_to_mask,
    rle_decode,
    rle_encode,
    rle_from_string,
    rle_to_string,
    transform_instance,
)

# A small mask with an L-shaped blob.
mask = np.zeros((6, 8), dtype=np.uint8)
mask[1:5, 2] = 1
mask[4, 2:6] = 1
print("mask:")
print(mask)

# Run-length encoding is column-major and starts with a run of zeros.
rle = rle_encode(mask)
print("\nRLE counts:", rle.counts)
print("area from RLE:", rle.area, "== mask.sum():", int(mask.sum()))
assert (rle_decode(rle) == mask).all()

# The compressed ASCII form is what COCO JSON files carry.
s = rle_to_string(rle)
print("compressed string:", repr(s))
assert rle_from_string(s, rle.height, rle.width) == rle

# Overlap kernels.
other = np.zeros((6, 8), dtype=np.uint8)
other[3:6, 2:5] = 1
print("\nmask IoU vs a 3x3 square:", round(mask_iou(mask, other), 4))
print("box IoU of (0,0,10,10) and (5,0,10,10):", round(box_iou((0, 0, 10, 10), (5, 0, 10, 10)), 4))

# Polygons rasterize with a pixel-center even-odd rule.
triangle = [0, 0, 8, 0, 0, 6]
raster = polygon_to_mask(triangle, 6, 8)
print("\nrasterized right triangle:")
print(raster)

# Instance transforms: scale, rotate, flip; output is tightly cropped.
patch = np.array([[1, 1, 0], [1, 0, 0], [1, 0, 0]], dtype=np.uint8)
print("\npatch:")
print(patch)
print("scaled x2:")
print(transform_instance(patch, TransformParams(scale=2)))
print("rotated 90 degrees:")
print(transform_instance(patch, TransformParams(rotation=90)))
print("rotated 45 degrees (nearest neighbor):")
print(transform_instance(patch, TransformParams(rotation=45)))
