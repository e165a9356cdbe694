"""Modified copy-paste augmentation: instance bank, occlusion-consistent
pasting, and the two-phase training schedule."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataset import Annotation, Dataset, annotation_mask
from .errors import (
    ConfigError,
    EmptyBank,
    EmptyPatch,
    EpochOutOfRange,
    MissingImagery,
)
from .masks import TransformParams, mask_to_box, rle_encode, transform_patch


@dataclass(frozen=True)
class InstanceBankEntry:
    """A tight instance crop: binary mask plus the matching RGB pixels."""

    category_id: int
    mask_patch: np.ndarray
    pixels: np.ndarray
    source_image_id: int
    area: int


@dataclass(frozen=True)
class PasteConfig:
    n_paste: tuple[int, int] = (1, 5)
    scale_range: tuple[float, float] = (0.5, 1.5)
    rotation_range: tuple[float, float] = (-180.0, 180.0)
    flip_prob: float = 0.5
    min_visible_fraction: float = 0.1
    rng_seed: int = 0
    category_sampling: str = "uniform"  # or "inverse_frequency"

    def __post_init__(self) -> None:
        lo, hi = self.n_paste
        if not (0 <= lo <= hi):
            raise ConfigError(f"n_paste range must satisfy 0 <= lo <= hi: {self.n_paste}")
        slo, shi = self.scale_range
        if not (0 < slo <= shi):
            raise ConfigError(f"scale range must satisfy 0 < lo <= hi: {self.scale_range}")
        if self.rotation_range[0] > self.rotation_range[1]:
            raise ConfigError(f"rotation range reversed: {self.rotation_range}")
        if not 0 <= self.flip_prob <= 1:
            raise ConfigError(f"flip_prob must be in [0, 1]: {self.flip_prob}")
        if not 0 < self.min_visible_fraction <= 1:
            raise ConfigError(
                f"min_visible_fraction must be in (0, 1]: {self.min_visible_fraction}"
            )
        if self.category_sampling not in ("uniform", "inverse_frequency"):
            raise ConfigError(f"unknown category_sampling {self.category_sampling!r}")

    @classmethod
    def from_json_dict(cls, data: dict) -> "PasteConfig":
        known = set(cls.__dataclass_fields__)
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown paste config keys: {sorted(bad)}")
        kwargs = dict(data)
        for key in ("n_paste", "scale_range", "rotation_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path) -> "PasteConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


class Phase(enum.Enum):
    WITH_COPY_PASTE = "with_copy_paste"
    FINE_TUNE = "fine_tune"


@dataclass(frozen=True)
class PhaseSchedule:
    total_epochs: int
    aug_fraction: float = 0.9

    def __post_init__(self) -> None:
        if self.total_epochs < 1:
            raise ConfigError(f"total_epochs must be >= 1, got {self.total_epochs}")
        if not 0 < self.aug_fraction <= 1:
            raise ConfigError(f"aug_fraction must be in (0, 1]: {self.aug_fraction}")


def phase_of(epoch: int, sched: PhaseSchedule) -> Phase:
    """Copy-paste for the first floor(aug_fraction * total) epochs, then fine-tune."""
    if not 0 <= epoch < sched.total_epochs:
        raise EpochOutOfRange(f"epoch {epoch} outside [0, {sched.total_epochs})")
    cutoff = int(sched.aug_fraction * sched.total_epochs)
    return Phase.WITH_COPY_PASTE if epoch < cutoff else Phase.FINE_TUNE


# ---------------------------------------------------------------------------
# Instance bank


def extract_instances(
    ds: Dataset, image_id: int, pixels: np.ndarray
) -> list[InstanceBankEntry]:
    """Crop every non-crowd instance of one image into bank entries."""
    img = ds.image(image_id)
    px = np.asarray(pixels)
    if px.ndim != 3 or px.shape[:2] != (img.height, img.width):
        raise MissingImagery(
            f"image {image_id}: pixels {px.shape} do not match "
            f"{img.height}x{img.width}"
        )
    entries = []
    for ann in ds.annotations_for(image_id):
        if ann.iscrowd:
            continue
        mask = annotation_mask(ann, img.height, img.width)
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        if rows.size == 0:
            continue  # area < 1 once rasterized
        r0, r1 = rows[0], rows[-1] + 1
        c0, c1 = cols[0], cols[-1] + 1
        crop = np.ascontiguousarray(mask[r0:r1, c0:c1])
        entries.append(
            InstanceBankEntry(
                category_id=ann.category_id,
                mask_patch=crop,
                pixels=np.ascontiguousarray(px[r0:r1, c0:c1]),
                source_image_id=image_id,
                area=int(crop.sum()),
            )
        )
    return entries


def _pick_entry(bank, cfg: PasteConfig, rng: np.random.Generator) -> InstanceBankEntry:
    if cfg.category_sampling == "uniform":
        return bank[int(rng.integers(len(bank)))]
    counts: dict[int, int] = {}
    for e in bank:
        counts[e.category_id] = counts.get(e.category_id, 0) + 1
    weights = np.array([1.0 / counts[e.category_id] for e in bank])
    return bank[int(rng.choice(len(bank), p=weights / weights.sum()))]


def _place_patch(
    patch: np.ndarray,
    height: int,
    width: int,
    min_visible: float,
    rng: np.random.Generator,
    attempts: int = 50,
) -> tuple[int, int]:
    """Draw a top-left offset keeping >= min_visible of the patch on canvas.

    Rejection-samples uniformly over all offsets where the patch overlaps the
    canvas; falls back to a fully-inside draw (or a clamped center) when the
    fraction cannot be reached within the attempt budget.
    """
    ph, pw = patch.shape
    total = int(patch.sum())
    for _ in range(attempts):
        r0 = int(rng.integers(-ph + 1, height))
        c0 = int(rng.integers(-pw + 1, width))
        rr0, rr1 = max(0, r0), min(height, r0 + ph)
        cc0, cc1 = max(0, c0), min(width, c0 + pw)
        visible = int(patch[rr0 - r0 : rr1 - r0, cc0 - c0 : cc1 - c0].sum())
        if visible / total >= min_visible:
            return r0, c0
    if ph <= height and pw <= width:
        return (
            int(rng.integers(0, height - ph + 1)),
            int(rng.integers(0, width - pw + 1)),
        )
    return (height - ph) // 2, (width - pw) // 2


@dataclass
class _Record:
    category_id: int
    mask: np.ndarray
    iscrowd: int
    original_area: int
    pasted: bool
    source_ann: Annotation | None = None


def copy_paste(
    pixels: np.ndarray,
    anns: list[Annotation],
    bank: list[InstanceBankEntry],
    cfg: PasteConfig,
    rng: np.random.Generator,
    image_id: int | None = None,
) -> tuple[np.ndarray, list[Annotation]]:
    """Paste transformed bank instances onto an image, keeping annotations
    consistent.

    Pasted instances occlude whatever they cover (painter's order): every
    pre-existing mask has the pasted region subtracted, bboxes and areas are
    recomputed, and annotations whose visible fraction drops below
    ``cfg.min_visible_fraction`` (or to zero) are removed. Pixels under a
    pasted mask are replaced by the patch pixels. Fully deterministic given
    the rng state.
    """
    if not bank:
        raise EmptyBank("instance bank is empty")
    img_px = np.array(pixels, copy=True)
    if img_px.ndim != 3:
        raise MissingImagery(f"expected HxWxC pixels, got shape {img_px.shape}")
    height, width = img_px.shape[:2]
    if image_id is None:
        if not anns:
            raise ConfigError("image_id required when pasting onto an empty image")
        image_id = anns[0].image_id

    records = [
        _Record(
            category_id=a.category_id,
            mask=annotation_mask(a, height, width).astype(bool),
            iscrowd=a.iscrowd,
            original_area=0,
            pasted=False,
            source_ann=a,
        )
        for a in anns
    ]
    for rec in records:
        rec.original_area = int(rec.mask.sum())

    n_lo, n_hi = cfg.n_paste
    n = int(rng.integers(n_lo, n_hi + 1))
    pasted_any = False
    for _ in range(n):
        entry = _pick_entry(bank, cfg, rng)
        params = TransformParams(
            scale=float(rng.uniform(*cfg.scale_range)),
            rotation=float(rng.uniform(*cfg.rotation_range)),
            hflip=bool(rng.random() < cfg.flip_prob),
            vflip=bool(rng.random() < cfg.flip_prob),
        )
        try:
            pmask, ppix = transform_patch(entry.mask_patch, entry.pixels, params)
        except EmptyPatch:
            continue  # minification emptied the patch; skip this paste
        r0, c0 = _place_patch(
            pmask, height, width, cfg.min_visible_fraction, rng
        )
        rr0, rr1 = max(0, r0), min(height, r0 + pmask.shape[0])
        cc0, cc1 = max(0, c0), min(width, c0 + pmask.shape[1])
        if rr0 >= rr1 or cc0 >= cc1:
            continue
        sub = pmask[rr0 - r0 : rr1 - r0, cc0 - c0 : cc1 - c0].astype(bool)
        if not sub.any():
            continue
        pasted_any = True
        canvas = np.zeros((height, width), dtype=bool)
        canvas[rr0:rr1, cc0:cc1] = sub
        img_px[rr0:rr1, cc0:cc1][sub] = ppix[rr0 - r0 : rr1 - r0, cc0 - c0 : cc1 - c0][sub]
        for rec in records:
            rec.mask &= ~canvas
        records.append(
            _Record(
                category_id=entry.category_id,
                mask=canvas,
                iscrowd=0,
                original_area=int(canvas.sum()),
                pasted=True,
            )
        )

    if not pasted_any:
        return img_px, list(anns)

    next_id = max((a.id for a in anns), default=0) + 1
    out: list[Annotation] = []
    for rec in records:
        area = int(rec.mask.sum())
        if area == 0 or area / rec.original_area < cfg.min_visible_fraction:
            continue
        mask_u8 = rec.mask.astype(np.uint8)
        ann_id = rec.source_ann.id if rec.source_ann is not None else next_id
        if rec.source_ann is None:
            next_id += 1
        out.append(
            Annotation(
                id=ann_id,
                image_id=image_id,
                category_id=rec.category_id,
                segmentation=rle_encode(mask_u8),
                bbox=mask_to_box(mask_u8),
                area=float(area),
                iscrowd=rec.iscrowd,
            )
        )
    return img_px, out


# ---------------------------------------------------------------------------
# Whole-dataset driver (CLI backend)


def image_rng(seed: int, image_id: int) -> np.random.Generator:
    """Per-image generator derived from (seed, image_id): parallel == serial."""
    return np.random.default_rng(np.random.SeedSequence([seed, image_id]))


def load_image(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def save_image(pixels: np.ndarray, path) -> None:
    from PIL import Image

    Image.fromarray(pixels).save(path)


def augment_dataset(
    ds: Dataset,
    images_dir,
    out_dir,
    cfg: PasteConfig,
    seed: int | None = None,
    threads: int = 1,
) -> Dataset:
    """Copy-paste every image of a dataset; write images and return the new
    dataset (annotation ids renumbered to stay globally unique).

    Each image draws from an rng derived from (seed, image_id), so the result
    is identical whether images run serially or on a thread pool.
    """
    images_dir = Path(images_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if seed is None:
        seed = cfg.rng_seed

    bank: list[InstanceBankEntry] = []
    pixels_cache: dict[int, np.ndarray] = {}
    for img in ds.images:
        src = images_dir / img.file_name
        if not src.exists():
            raise MissingImagery(f"missing image file {src}")
        pixels_cache[img.id] = load_image(src)
        bank.extend(extract_instances(ds, img.id, pixels_cache[img.id]))
    if not bank:
        raise EmptyBank("dataset contains no usable instances")

    def process(img) -> list[Annotation]:
        rng = image_rng(seed, img.id)
        out_px, anns = copy_paste(
            pixels_cache[img.id],
            ds.annotations_for(img.id),
            bank,
            cfg,
            rng,
            image_id=img.id,
        )
        save_image(out_px, out_dir / img.file_name)
        return anns

    if threads > 1 and len(ds.images) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_image = list(pool.map(process, ds.images))
    else:
        per_image = [process(img) for img in ds.images]

    new_anns = [ann for anns in per_image for ann in anns]
    renumbered = tuple(
        replace(ann, id=i + 1) for i, ann in enumerate(new_anns)
    )
    return Dataset(ds.images, ds.categories, renumbered)
