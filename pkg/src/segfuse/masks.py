"""Binary masks, the COCO RLE codec, and the geometry kernels built on them.

A binary mask is a plain 2-D numpy array of 0/1 values (any integer or bool
dtype); every function here normalizes its inputs through :func:`as_mask`.
Run-length encodings follow the COCO convention: counts are alternating runs
of 0s and 1s in column-major scan order, starting with a (possibly empty) run
of 0s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegeneratePolygon, EmptyPatch, LengthMismatch, ShapeMismatch

Box = tuple[float, float, float, float]  # (x, y, w, h), top-left + size


@dataclass(frozen=True)
class RleMask:
    """Column-major run-length encoding of a binary mask."""

    height: int
    width: int
    counts: tuple[int, ...]

    @property
    def area(self) -> int:
        return int(sum(self.counts[1::2]))


@dataclass(frozen=True)
class TransformParams:
    """Geometric transform applied to an instance patch before pasting."""

    scale: float = 1.0
    rotation: float = 0.0  # degrees, about the patch center
    hflip: bool = False
    vflip: bool = False

    def __post_init__(self) -> None:
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")


def as_mask(mask) -> np.ndarray:
    """Normalize an array-like to a 2-D uint8 mask of 0/1 values."""
    m = np.asarray(mask)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeMismatch(f"mask must be 2-D and non-empty, got shape {m.shape}")
    if m.dtype == bool:
        return m.astype(np.uint8)
    if not np.isin(m, (0, 1)).all():
        raise ValueError("mask entries must all be 0 or 1")
    return m.astype(np.uint8, copy=False)


# ---------------------------------------------------------------------------
# RLE codec


def rle_encode(mask) -> RleMask:
    """Encode a binary mask as canonical column-major run lengths."""
    m = as_mask(mask)
    flat = m.ravel(order="F")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(bounds)
    if flat[0]:
        counts = np.concatenate(([0], counts))
    return RleMask(m.shape[0], m.shape[1], tuple(int(c) for c in counts))


def rle_decode(rle: RleMask) -> np.ndarray:
    """Decode run lengths back to a dense uint8 mask."""
    counts = np.asarray(rle.counts, dtype=np.int64)
    if counts.size and counts.min() < 0:
        raise LengthMismatch(f"negative run length in counts: {rle.counts}")
    total = int(counts.sum())
    if total != rle.height * rle.width:
        raise LengthMismatch(
            f"counts sum to {total}, expected {rle.height}x{rle.width}"
            f"={rle.height * rle.width}"
        )
    values = (np.arange(counts.size, dtype=np.int64) & 1).astype(np.uint8)
    flat = np.repeat(values, counts)
    return flat.reshape((rle.height, rle.width), order="F")


def rle_to_string(rle: RleMask) -> str:
    """Compress run lengths to the COCO ASCII string format.

    Counts from index 3 onward are stored as the difference to the count two
    positions earlier (the reference codec leaves indices 0..2 raw); each
    value is emitted low-bits-first in 5-bit groups, one ASCII char per group
    (char = group + 48, bit 0x20 set on all groups but the last), negatives
    via two's-complement continuation.
    """
    out = bytearray()
    counts = rle.counts
    for i, count in enumerate(counts):
        x = int(count)
        if i > 2:
            x -= int(counts[i - 2])
        more = True
        while more:
            group = x & 0x1F
            x >>= 5  # arithmetic shift: negatives converge to -1
            more = (x != -1) if (group & 0x10) else (x != 0)
            if more:
                group |= 0x20
            out.append(group + 48)
    return out.decode("ascii")


def rle_from_string(s: str, height: int, width: int) -> RleMask:
    """Decompress a COCO ASCII string back to run lengths."""
    counts: list[int] = []
    p = 0
    while p < len(s):
        x = 0
        k = 0
        more = True
        while more:
            if p >= len(s):
                raise LengthMismatch("truncated RLE string")
            c = ord(s[p]) - 48
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            p += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    rle = RleMask(height, width, tuple(counts))
    if any(c < 0 for c in counts) or sum(counts) != height * width:
        raise LengthMismatch(
            f"decoded counts do not fill a {height}x{width} mask: {counts}"
        )
    return rle


def rle_to_coco(rle: RleMask, compressed: bool = True) -> dict:
    """Render an RLE as a COCO segmentation object for JSON interchange."""
    counts = rle_to_string(rle) if compressed else list(rle.counts)
    return {"size": [rle.height, rle.width], "counts": counts}


def rle_from_coco(obj: dict) -> RleMask:
    """Parse a COCO segmentation object ({"size": [h, w], "counts": ...})."""
    try:
        height, width = (int(v) for v in obj["size"])
        counts = obj["counts"]
    except (KeyError, TypeError, ValueError) as exc:
        raise LengthMismatch(f"malformed RLE object: {obj!r}") from exc
    if isinstance(counts, str):
        return rle_from_string(counts, height, width)
    rle = RleMask(height, width, tuple(int(c) for c in counts))
    if any(c < 0 for c in rle.counts) or sum(rle.counts) != height * width:
        raise LengthMismatch(f"counts do not fill a {height}x{width} mask")
    return rle


# ---------------------------------------------------------------------------
# Overlap kernels


def mask_iou(a, b) -> float:
    """Intersection over union of two same-sized masks (0 when both empty)."""
    ma = as_mask(a).astype(bool)
    mb = as_mask(b).astype(bool)
    if ma.shape != mb.shape:
        raise ShapeMismatch(f"mask shapes differ: {ma.shape} vs {mb.shape}")
    inter = int(np.logical_and(ma, mb).sum())
    union = int(np.logical_or(ma, mb).sum())
    return inter / union if union else 0.0


def mask_intersection_matrix(a_stack: np.ndarray, b_stack: np.ndarray) -> np.ndarray:
    """Pairwise intersection pixel counts between two stacks of masks.

    ``a_stack``/``b_stack`` are (n, h, w) arrays; the result is (n, m).
    Counts are exact (computed in float64 on 0/1 values).
    """
    a = a_stack.reshape(a_stack.shape[0], -1).astype(np.float64)
    b = b_stack.reshape(b_stack.shape[0], -1).astype(np.float64)
    return a @ b.T


def mask_iou_matrix(a_stack: np.ndarray, b_stack: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two stacks of same-sized masks; 0/0 gives 0."""
    if a_stack.shape[1:] != b_stack.shape[1:]:
        raise ShapeMismatch(
            f"mask shapes differ: {a_stack.shape[1:]} vs {b_stack.shape[1:]}"
        )
    inter = mask_intersection_matrix(a_stack, b_stack)
    area_a = a_stack.reshape(a_stack.shape[0], -1).sum(axis=1, dtype=np.float64)
    area_b = b_stack.reshape(b_stack.shape[0], -1).sum(axis=1, dtype=np.float64)
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    return iou


def box_iou(a: Box, b: Box) -> float:
    """IoU of two (x, y, w, h) boxes; 0 when either box is degenerate."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    area_a = aw * ah
    area_b = bw * bh
    if area_a <= 0 or area_b <= 0:
        return 0.0
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


def mask_to_box(mask) -> Box:
    """Tight (x, y, w, h) bounding box of a mask's set pixels."""
    m = as_mask(mask)
    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    if rows.size == 0:
        raise EmptyPatch("cannot compute the bounding box of an empty mask")
    return (
        float(cols[0]),
        float(rows[0]),
        float(cols[-1] - cols[0] + 1),
        float(rows[-1] - rows[0] + 1),
    )


# ---------------------------------------------------------------------------
# Polygon rasterization


def _check_polygon(poly: Sequence[float]) -> np.ndarray:
    pts = np.asarray(poly, dtype=np.float64)
    if pts.ndim != 1 or pts.size % 2 != 0 or pts.size < 6:
        raise DegeneratePolygon(
            f"polygon needs >= 3 (x, y) points as a flat list, got {pts.size} values"
        )
    if not np.isfinite(pts).all():
        raise DegeneratePolygon("polygon coordinates must be finite")
    return pts.reshape(-1, 2)


def polygon_to_mask(polygons, height: int, width: int) -> np.ndarray:
    """Rasterize one or more flat polygons into a height x width mask.

    A pixel (r, c) is set iff its center (c + 0.5, r + 0.5) lies inside the
    polygon under the even-odd rule; multiple polygons are OR-ed together.
    """
    if height < 1 or width < 1:
        raise ShapeMismatch(f"canvas must be non-empty, got {height}x{width}")
    polys = polygons
    if len(polys) and np.isscalar(polys[0]):
        polys = [polys]
    if not polys:
        raise DegeneratePolygon("no polygons given")

    out = np.zeros((height, width), dtype=np.uint8)
    for poly in polys:
        pts = _check_polygon(poly)
        xs, ys = pts[:, 0], pts[:, 1]
        # Restrict the even-odd test to the rows/cols the polygon can touch.
        r0 = max(0, int(math.floor(ys.min() - 0.5)))
        r1 = min(height, int(math.ceil(ys.max() + 0.5)))
        c0 = max(0, int(math.floor(xs.min() - 0.5)))
        c1 = min(width, int(math.ceil(xs.max() + 0.5)))
        if r0 >= r1 or c0 >= c1:
            continue
        py = np.arange(r0, r1, dtype=np.float64)[:, None] + 0.5
        px = np.arange(c0, c1, dtype=np.float64)[None, :] + 0.5
        inside = np.zeros((r1 - r0, c1 - c0), dtype=bool)
        n = len(pts)
        for k in range(n):
            x1, y1 = pts[k]
            x2, y2 = pts[(k + 1) % n]
            if y1 == y2:
                continue
            crosses = (y1 > py) != (y2 > py)
            x_at = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (px < x_at)
        out[r0:r1, c0:c1] |= inside.astype(np.uint8)
    return out


# ---------------------------------------------------------------------------
# Instance transforms


def _nearest_axis_indices(src_len: int, dst_len: int) -> np.ndarray:
    return np.floor(np.arange(dst_len) * (src_len / dst_len)).astype(np.intp)


def transform_patch(
    mask, pixels: np.ndarray | None, params: TransformParams
) -> tuple[np.ndarray, np.ndarray | None]:
    """Scale, rotate, and flip a mask patch (and congruent pixels) together.

    Returns the transformed mask cropped to the tight bounding box of its
    content, plus the identically transformed pixel patch when one is given.
    Raises EmptyPatch when the input mask is empty or the transform leaves
    no set pixels (possible under heavy minification).
    """
    m = as_mask(mask)
    if not m.any():
        raise EmptyPatch("instance patch has no set pixels")
    px = None
    if pixels is not None:
        px = np.asarray(pixels)
        if px.shape[:2] != m.shape:
            raise ShapeMismatch(
                f"pixels {px.shape[:2]} do not match mask {m.shape}"
            )

    if params.scale != 1.0:
        h, w = m.shape
        oh = max(1, int(round(h * params.scale)))
        ow = max(1, int(round(w * params.scale)))
        rows = _nearest_axis_indices(h, oh)
        cols = _nearest_axis_indices(w, ow)
        m = m[np.ix_(rows, cols)]
        if px is not None:
            px = px[np.ix_(rows, cols)]

    rot = params.rotation % 360.0
    if rot % 90.0 == 0.0:
        k = int(rot // 90.0)
        if k:
            m = np.rot90(m, k)
            if px is not None:
                px = np.rot90(px, k)
    else:
        m, px = _rotate_nearest(m, px, rot)

    if params.hflip:
        m = m[:, ::-1]
        if px is not None:
            px = px[:, ::-1]
    if params.vflip:
        m = m[::-1, :]
        if px is not None:
            px = px[::-1, :]

    rows = np.flatnonzero(m.any(axis=1))
    cols = np.flatnonzero(m.any(axis=0))
    if rows.size == 0:
        raise EmptyPatch("transform left no set pixels")
    m = np.ascontiguousarray(m[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1])
    if px is not None:
        px = np.ascontiguousarray(px[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1])
    return m, px


def _rotate_nearest(
    m: np.ndarray, px: np.ndarray | None, degrees: float
) -> tuple[np.ndarray, np.ndarray | None]:
    """Rotate about the patch center with nearest-neighbor inverse mapping."""
    h, w = m.shape
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    ow = int(math.ceil(w * abs(c) + h * abs(s)))
    oh = int(math.ceil(h * abs(c) + w * abs(s)))
    yy, xx = np.indices((oh, ow), dtype=np.float64)
    xc = xx + 0.5 - ow / 2.0
    yc = yy + 0.5 - oh / 2.0
    xs = c * xc + s * yc + w / 2.0
    ys = -s * xc + c * yc + h / 2.0
    ci = np.floor(xs).astype(np.intp)
    ri = np.floor(ys).astype(np.intp)
    valid = (ri >= 0) & (ri < h) & (ci >= 0) & (ci < w)
    out = np.zeros((oh, ow), dtype=m.dtype)
    out[valid] = m[ri[valid], ci[valid]]
    out_px = None
    if px is not None:
        out_px = np.zeros((oh, ow) + px.shape[2:], dtype=px.dtype)
        out_px[valid] = px[ri[valid], ci[valid]]
    return out, out_px


def transform_instance(patch, params: TransformParams) -> np.ndarray:
    """Apply a :class:`TransformParams` to a mask patch (mask only)."""
    mask, _ = transform_patch(patch, None, params)
    return mask
