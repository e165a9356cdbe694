"""COCO-style dataset and detection-results IO, statistics, repeat factors."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyDataset, ParseError, ValidationError
from .masks import (
    Box,
    RleMask,
    polygon_to_mask,
    rle_decode,
    rle_from_coco,
    rle_to_coco,
)

Segmentation = RleMask | list[list[float]]

COCO_SIZE_THRESHOLDS = (32.0, 96.0)  # side lengths; buckets compare area to t**2


@dataclass(frozen=True)
class ImageInfo:
    id: int
    width: int
    height: int
    file_name: str


@dataclass(frozen=True)
class Category:
    id: int
    name: str


@dataclass(frozen=True)
class Annotation:
    id: int
    image_id: int
    category_id: int
    segmentation: Segmentation
    bbox: Box
    area: float
    iscrowd: int = 0


@dataclass(frozen=True)
class Dataset:
    images: tuple[ImageInfo, ...]
    categories: tuple[Category, ...]
    annotations: tuple[Annotation, ...]

    def image(self, image_id: int) -> ImageInfo:
        for img in self.images:
            if img.id == image_id:
                return img
        raise KeyError(image_id)

    def annotations_for(self, image_id: int) -> list[Annotation]:
        return [a for a in self.annotations if a.image_id == image_id]


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    score: float
    bbox: Box
    segmentation: RleMask | None = None


@dataclass(frozen=True)
class DetectionSet:
    entries: tuple[Detection, ...]

    def for_image(self, image_id: int) -> list[Detection]:
        return [d for d in self.entries if d.image_id == image_id]


def annotation_mask(ann: Annotation, height: int, width: int) -> np.ndarray:
    """Decode an annotation's segmentation to a dense mask at image size."""
    if isinstance(ann.segmentation, RleMask):
        return rle_decode(ann.segmentation)
    return polygon_to_mask(ann.segmentation, height, width)


# ---------------------------------------------------------------------------
# Loading / saving


def _parse_segmentation(raw, height: int, width: int, ann_id) -> Segmentation:
    if isinstance(raw, dict):
        rle = rle_from_coco(raw)
        if (rle.height, rle.width) != (height, width):
            raise ValidationError(
                f"annotation {ann_id}: RLE size {rle.height}x{rle.width} does not"
                f" match image {height}x{width}"
            )
        return rle
    if isinstance(raw, list):
        return [[float(v) for v in poly] for poly in raw]
    raise ValidationError(f"annotation {ann_id}: unsupported segmentation {type(raw)}")


def _clamp_bbox(bbox: Box, width: int, height: int) -> Box:
    x, y, w, h = bbox
    x0 = min(max(x, 0.0), float(width))
    y0 = min(max(y, 0.0), float(height))
    x1 = min(max(x + w, x0), float(width))
    y1 = min(max(y + h, y0), float(height))
    return (x0, y0, x1 - x0, y1 - y0)


def dataset_from_dict(data: dict) -> Dataset:
    """Build and validate a Dataset from already-parsed COCO JSON."""
    try:
        images = tuple(
            ImageInfo(int(i["id"]), int(i["width"]), int(i["height"]), str(i["file_name"]))
            for i in data["images"]
        )
        categories = tuple(Category(int(c["id"]), str(c["name"])) for c in data["categories"])
        raw_anns = data["annotations"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed dataset structure: {exc}") from exc

    image_by_id = {img.id: img for img in images}
    if len(image_by_id) != len(images):
        raise ValidationError("duplicate image ids")
    cat_ids = {c.id for c in categories}
    if len(cat_ids) != len(categories):
        raise ValidationError("duplicate category ids")

    annotations = []
    seen_ann_ids = set()
    for raw in raw_anns:
        try:
            ann_id = int(raw["id"])
            image_id = int(raw["image_id"])
            category_id = int(raw["category_id"])
            bbox = tuple(float(v) for v in raw["bbox"])
            area = float(raw["area"])
            iscrowd = int(raw.get("iscrowd", 0))
            raw_seg = raw["segmentation"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed annotation: {exc}") from exc
        if ann_id in seen_ann_ids:
            raise ValidationError(f"duplicate annotation id {ann_id}")
        seen_ann_ids.add(ann_id)
        img = image_by_id.get(image_id)
        if img is None:
            raise ValidationError(f"annotation {ann_id} references missing image {image_id}")
        if category_id not in cat_ids:
            raise ValidationError(
                f"annotation {ann_id} references missing category {category_id}"
            )
        if len(bbox) != 4:
            raise ValidationError(f"annotation {ann_id}: bbox must have 4 values")
        if iscrowd not in (0, 1):
            raise ValidationError(f"annotation {ann_id}: iscrowd must be 0 or 1")
        if iscrowd == 0 and not area > 0:
            raise ValidationError(f"annotation {ann_id}: non-crowd area must be > 0")
        segmentation = _parse_segmentation(raw_seg, img.height, img.width, ann_id)
        annotations.append(
            Annotation(
                id=ann_id,
                image_id=image_id,
                category_id=category_id,
                segmentation=segmentation,
                bbox=_clamp_bbox(bbox, img.width, img.height),
                area=area,
                iscrowd=iscrowd,
            )
        )
    return Dataset(images, categories, tuple(annotations))


def load_dataset(path) -> Dataset:
    """Load and validate a COCO-format dataset JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: dataset file must hold a JSON object")
    return dataset_from_dict(data)


def dataset_to_dict(ds: Dataset) -> dict:
    """Render a Dataset back to COCO JSON structure (RLEs as compressed strings)."""
    anns = []
    for a in ds.annotations:
        if isinstance(a.segmentation, RleMask):
            seg = rle_to_coco(a.segmentation)
        else:
            seg = a.segmentation
        anns.append(
            {
                "id": a.id,
                "image_id": a.image_id,
                "category_id": a.category_id,
                "segmentation": seg,
                "bbox": list(a.bbox),
                "area": a.area,
                "iscrowd": a.iscrowd,
            }
        )
    return {
        "images": [
            {"id": i.id, "width": i.width, "height": i.height, "file_name": i.file_name}
            for i in ds.images
        ],
        "categories": [{"id": c.id, "name": c.name} for c in ds.categories],
        "annotations": anns,
    }


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset_to_dict(ds), fh, sort_keys=True)


def load_results(path, ds: Dataset) -> DetectionSet:
    """Load a detection-results JSON array, validated against its dataset."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(data, list):
        raise ParseError(f"{path}: results file must hold a JSON array")
    return detections_from_list(data, ds)


def detections_from_list(data: list, ds: Dataset) -> DetectionSet:
    image_by_id = {img.id: img for img in ds.images}
    cat_ids = {c.id for c in ds.categories}
    entries = []
    for idx, raw in enumerate(data):
        try:
            image_id = int(raw["image_id"])
            category_id = int(raw["category_id"])
            score = float(raw["score"])
            bbox = tuple(float(v) for v in raw["bbox"])
            raw_seg = raw.get("segmentation")
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed detection #{idx}: {exc}") from exc
        img = image_by_id.get(image_id)
        if img is None:
            raise ValidationError(f"detection #{idx} references missing image {image_id}")
        if category_id not in cat_ids:
            raise ValidationError(
                f"detection #{idx} references missing category {category_id}"
            )
        if not (0.0 <= score <= 1.0) or math.isnan(score):
            raise ValidationError(f"detection #{idx}: score {score} not in [0, 1]")
        segmentation = None
        if raw_seg is not None:
            segmentation = rle_from_coco(raw_seg)
            if (segmentation.height, segmentation.width) != (img.height, img.width):
                raise ValidationError(
                    f"detection #{idx}: mask size {segmentation.height}x"
                    f"{segmentation.width} does not match image"
                )
        entries.append(Detection(image_id, category_id, score, bbox, segmentation))
    return DetectionSet(tuple(entries))


def detections_to_list(dets: DetectionSet) -> list[dict]:
    out = []
    for d in dets.entries:
        row = {
            "image_id": d.image_id,
            "category_id": d.category_id,
            "score": d.score,
            "bbox": list(d.bbox),
        }
        if d.segmentation is not None:
            row["segmentation"] = rle_to_coco(d.segmentation)
        out.append(row)
    return out


def write_results(dets: DetectionSet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(detections_to_list(dets), fh, sort_keys=True)


# ---------------------------------------------------------------------------
# Statistics


@dataclass(frozen=True)
class CategoryStats:
    category_id: int
    name: str
    count: int
    pixel_total: float


@dataclass(frozen=True)
class StatsReport:
    per_category: tuple[CategoryStats, ...]
    size_counts: dict = field(default_factory=dict)  # small / medium / large
    imbalance_ratio: float = 0.0
    small_fraction: float = 0.0
    total_annotations: int = 0

    def to_json_dict(self) -> dict:
        return {
            "per_category": [
                {
                    "category_id": c.category_id,
                    "name": c.name,
                    "count": c.count,
                    "pixel_total": c.pixel_total,
                }
                for c in self.per_category
            ],
            "size_counts": dict(self.size_counts),
            "imbalance_ratio": self.imbalance_ratio,
            "small_fraction": self.small_fraction,
            "total_annotations": self.total_annotations,
        }

    def to_table(self) -> str:
        rows = [("category", "count", "pixels")]
        rows += [
            (f"{c.name} ({c.category_id})", str(c.count), f"{c.pixel_total:.0f}")
            for c in self.per_category
        ]
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = [
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
            for row in rows
        ]
        lines.append("")
        sc = self.size_counts
        lines.append(
            f"sizes: small={sc.get('small', 0)} medium={sc.get('medium', 0)}"
            f" large={sc.get('large', 0)}"
        )
        lines.append(f"small-object fraction: {self.small_fraction:.4f}")
        lines.append(f"imbalance ratio (max/min count): {self.imbalance_ratio:.2f}")
        lines.append(f"total annotations: {self.total_annotations}")
        return "\n".join(lines)


def dataset_stats(
    ds: Dataset, size_thresholds: tuple[float, float] = COCO_SIZE_THRESHOLDS
) -> StatsReport:
    """Per-category counts/pixels plus small/medium/large buckets on area.

    ``size_thresholds`` are side lengths (a, b): small means area < a**2,
    medium means area < b**2, large otherwise.
    """
    if not ds.annotations:
        raise EmptyDataset("dataset has no annotations")
    small_lt = float(size_thresholds[0]) ** 2
    medium_lt = float(size_thresholds[1]) ** 2
    if not 0 < small_lt < medium_lt:
        raise ValidationError(f"size thresholds must increase: {size_thresholds}")

    counts: dict[int, int] = {}
    pixels: dict[int, float] = {}
    buckets = {"small": 0, "medium": 0, "large": 0}
    for a in ds.annotations:
        counts[a.category_id] = counts.get(a.category_id, 0) + 1
        pixels[a.category_id] = pixels.get(a.category_id, 0.0) + a.area
        if a.area < small_lt:
            buckets["small"] += 1
        elif a.area < medium_lt:
            buckets["medium"] += 1
        else:
            buckets["large"] += 1

    per_category = tuple(
        CategoryStats(c.id, c.name, counts.get(c.id, 0), pixels.get(c.id, 0.0))
        for c in ds.categories
    )
    nonzero = [c for c in counts.values() if c > 0]
    total = len(ds.annotations)
    return StatsReport(
        per_category=per_category,
        size_counts=buckets,
        imbalance_ratio=max(nonzero) / min(nonzero),
        small_fraction=buckets["small"] / total,
        total_annotations=total,
    )


def repeat_factors(ds: Dataset, t: float = 0.001) -> dict[int, float]:
    """LVIS-style per-image repeat factors from category frequencies.

    Category frequency f_c is the fraction of images containing category c;
    its factor is max(1, sqrt(t / f_c)); an image's factor is the max over
    categories it contains (1.0 for images with no annotations).
    """
    if not 0 < t <= 1:
        raise ValidationError(f"frequency threshold t must be in (0, 1], got {t}")
    if not ds.annotations:
        raise EmptyDataset("dataset has no annotations")
    n_images = len(ds.images)
    images_per_cat: dict[int, set[int]] = {}
    cats_per_image: dict[int, set[int]] = {}
    for a in ds.annotations:
        images_per_cat.setdefault(a.category_id, set()).add(a.image_id)
        cats_per_image.setdefault(a.image_id, set()).add(a.category_id)
    cat_factor = {
        cat: max(1.0, math.sqrt(t * n_images / len(imgs)))
        for cat, imgs in images_per_cat.items()
    }
    return {
        img.id: max((cat_factor[c] for c in cats_per_image.get(img.id, ())), default=1.0)
        for img in ds.images
    }
