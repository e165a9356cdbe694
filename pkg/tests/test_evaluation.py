import numpy as np
import pytest

from segfuse import (
    Annotation,
    Category,
    Dataset,
    Detection,
    DetectionSet,
    ImageInfo,
    MatchFlag,
    average_precision,
    map50,
    match_detections,
    rle_encode,
)
from segfuse.errors import NoGroundTruth, ShapeMismatch, ValidationError

from oracles import ref_map50

H = W = 24


def rect(r0, c0, h, w):
    m = np.zeros((H, W), dtype=np.uint8)
    m[max(0, r0):max(0, r0 + h), max(0, c0):max(0, c0 + w)] = 1
    return m


def stack(masks):
    if not masks:
        return np.zeros((0, H, W), dtype=np.uint8)
    return np.stack(masks)


# ---------------------------------------------------------------------------
# Matching


def test_match_single_tp():
    gt = rect(4, 4, 10, 10)
    pred = rect(4, 4, 10, 8)  # IoU = 0.8
    res = match_detections([0.9], stack([pred]), stack([gt]))
    assert res.flags == (MatchFlag.TP,)
    assert res.n_gt == 1


def test_match_single_claim_rule():
    gt = rect(4, 4, 10, 10)
    p1 = rect(4, 4, 10, 9)
    p2 = rect(4, 5, 10, 9)
    res = match_detections([0.9, 0.8], stack([p1, p2]), stack([gt]))
    assert res.flags == (MatchFlag.TP, MatchFlag.FP)


def test_match_prefers_highest_iou():
    g1 = rect(0, 0, 10, 10)
    g2 = rect(0, 8, 10, 10)
    pred = rect(0, 2, 10, 10)  # IoU 0.666 with g1, 0.25 with g2... make explicit
    # overlap pred/g1 cols 2..9 -> 8 cols; union 12 cols -> IoU 8/12 = 0.667
    # overlap pred/g2 cols 8..11 -> 4 cols; union 16 -> 0.25 < 0.5
    res = match_detections([0.9], stack([pred]), stack([g1, g2]))
    assert res.flags == (MatchFlag.TP,)
    res2 = match_detections(
        [0.9, 0.8], stack([pred, rect(0, 0, 10, 10)]), stack([g1, g2])
    )
    # first pred claims g1 (highest IoU); exact-matching second pred left FP
    assert res2.flags == (MatchFlag.TP, MatchFlag.FP)


def test_match_two_gt_greedy_best():
    g1 = rect(0, 0, 10, 10)
    g2 = rect(0, 4, 10, 10)
    pred = rect(0, 1, 10, 10)  # IoU with g1: 9/11=0.818; with g2: 7/13=0.538
    res = match_detections([0.9], stack([pred]), stack([g1, g2]))
    assert res.flags == (MatchFlag.TP,)
    follow = match_detections(
        [0.9, 0.8], stack([pred, rect(0, 0, 10, 10)]), stack([g1, g2])
    )
    # second pred: g1 already claimed, IoU with g2 = 6/14 < 0.5 -> FP
    assert follow.flags == (MatchFlag.TP, MatchFlag.FP)


def test_match_crowd_ignored():
    crowd = rect(0, 0, 20, 20)
    pred = rect(2, 2, 10, 10)  # fully inside the crowd: overlap/area = 1.0
    res = match_detections([0.9], stack([pred]), stack([crowd]), [1])
    assert res.flags == (MatchFlag.IGNORED,)
    assert res.n_gt == 0


def test_match_noncrowd_takes_priority_over_crowd():
    crowd = rect(0, 0, 20, 20)
    gt = rect(2, 2, 10, 10)
    pred = rect(2, 2, 10, 10)
    res = match_detections([0.9], stack([pred]), stack([crowd, gt]), [1, 0])
    assert res.flags == (MatchFlag.TP,)
    assert res.n_gt == 1


def test_match_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        match_detections(
            [0.9], np.zeros((1, 4, 4), np.uint8), np.zeros((1, 5, 5), np.uint8)
        )


# ---------------------------------------------------------------------------
# Average precision


def test_ap_all_matched_no_fp():
    flags = [MatchFlag.TP, MatchFlag.TP, MatchFlag.TP]
    ap, _ = average_precision(flags, [0.9, 0.8, 0.7], 3)
    assert ap == 1.0


def test_ap_no_detections():
    ap, curve = average_precision([], [], 2)
    assert ap == 0.0 and curve == []


def test_ap_half_recall_101_points():
    ap, _ = average_precision([MatchFlag.TP], [0.9], 2)
    assert ap == pytest.approx(51 / 101, abs=1e-9)


def test_ap_requires_ground_truth():
    with pytest.raises(NoGroundTruth):
        average_precision([MatchFlag.FP], [0.9], 0)


def test_ap_ignored_detections_transparent():
    flags = [MatchFlag.TP, MatchFlag.IGNORED, MatchFlag.TP]
    with_ign, _ = average_precision(flags, [0.9, 0.8, 0.7], 2)
    without, _ = average_precision(
        [MatchFlag.TP, MatchFlag.TP], [0.9, 0.7], 2
    )
    assert with_ign == without == 1.0


def test_ap_monotone_in_added_tp_and_trailing_fp():
    rng = np.random.default_rng(0)
    for _ in range(30):
        n_gt = int(rng.integers(2, 6))
        n = int(rng.integers(1, 8))
        flags = [
            MatchFlag.TP if rng.random() < 0.5 else MatchFlag.FP for _ in range(n)
        ]
        while sum(f is MatchFlag.TP for f in flags) > n_gt:
            flags[flags.index(MatchFlag.TP)] = MatchFlag.FP
        scores = sorted((float(rng.uniform(0.1, 1)) for _ in range(n)), reverse=True)
        base, _ = average_precision(flags, scores, n_gt)
        if sum(f is MatchFlag.TP for f in flags) < n_gt:
            more, _ = average_precision(
                flags + [MatchFlag.TP], scores + [0.05], n_gt
            )
            assert more >= base - 1e-12
        worse, _ = average_precision(flags + [MatchFlag.FP], scores + [0.01], n_gt)
        assert worse <= base + 1e-12


def test_ap_score_order_invariance():
    flags = [MatchFlag.TP, MatchFlag.FP, MatchFlag.TP, MatchFlag.FP]
    scores = [0.9, 0.7, 0.5, 0.3]
    squashed = [s ** 3 / 2 for s in scores]  # monotone transform
    a1, _ = average_precision(flags, scores, 3)
    a2, _ = average_precision(flags, squashed, 3)
    assert a1 == a2


# ---------------------------------------------------------------------------
# map50 end to end


def build_dataset(gt_records, images=2, cats=(1, 2, 3)):
    imgs = tuple(ImageInfo(i + 1, H, W, f"{i}.png") for i in range(images))
    categories = tuple(Category(c, f"cat{c}") for c in cats)
    anns = tuple(
        Annotation(
            id=i + 1,
            image_id=g["image_id"],
            category_id=g["category_id"],
            segmentation=rle_encode(g["mask"]),
            bbox=(0.0, 0.0, 1.0, 1.0),
            area=float(g["mask"].sum()) or 1.0,
            iscrowd=g["iscrowd"],
        )
        for i, g in enumerate(gt_records)
    )
    return Dataset(imgs, categories, anns)


def build_results(det_records):
    return DetectionSet(
        tuple(
            Detection(
                d["image_id"], d["category_id"], d["score"], (0.0, 0.0, 1.0, 1.0),
                rle_encode(d["mask"]),
            )
            for d in det_records
        )
    )


def test_map50_perfect_results():
    gts = [
        {"image_id": 1, "category_id": 1, "mask": rect(0, 0, 8, 8), "iscrowd": 0},
        {"image_id": 1, "category_id": 2, "mask": rect(10, 10, 6, 6), "iscrowd": 0},
        {"image_id": 2, "category_id": 1, "mask": rect(4, 4, 9, 9), "iscrowd": 0},
    ]
    ds = build_dataset(gts)
    results = build_results([dict(g, score=1.0) for g in gts])
    report = map50(ds, results)
    assert report.map50 == 1.0
    assert set(report.ap_per_category) == {1, 2}


def test_map50_empty_results():
    gts = [{"image_id": 1, "category_id": 1, "mask": rect(0, 0, 8, 8), "iscrowd": 0}]
    report = map50(build_dataset(gts), DetectionSet(()))
    assert report.map50 == 0.0


def test_map50_three_category_mean():
    # cat1 perfect AP 1.0; cat2: 2 GT 1 TP -> 51/101; cat3: no detections -> 0
    gts = [
        {"image_id": 1, "category_id": 1, "mask": rect(0, 0, 8, 8), "iscrowd": 0},
        {"image_id": 1, "category_id": 2, "mask": rect(12, 0, 6, 6), "iscrowd": 0},
        {"image_id": 2, "category_id": 2, "mask": rect(0, 12, 6, 6), "iscrowd": 0},
        {"image_id": 2, "category_id": 3, "mask": rect(12, 12, 6, 6), "iscrowd": 0},
    ]
    dets = [
        dict(gts[0], score=0.9),
        dict(gts[1], score=0.8),
    ]
    report = map50(build_dataset(gts), build_results(dets))
    want = (1.0 + 51 / 101 + 0.0) / 3
    assert report.map50 == pytest.approx(want, abs=1e-9)
    assert report.map50 == pytest.approx(0.50165, abs=1e-4)


def test_map50_category_without_gt_excluded():
    gts = [{"image_id": 1, "category_id": 1, "mask": rect(0, 0, 8, 8), "iscrowd": 0}]
    dets = [
        dict(gts[0], score=0.9),
        {"image_id": 1, "category_id": 2, "mask": rect(12, 12, 6, 6), "score": 0.8},
    ]
    report = map50(build_dataset(gts), build_results(dets))
    assert set(report.ap_per_category) == {1}
    assert report.map50 == 1.0


def test_map50_validates_results():
    gts = [{"image_id": 1, "category_id": 1, "mask": rect(0, 0, 8, 8), "iscrowd": 0}]
    ds = build_dataset(gts)
    bad = DetectionSet(
        (Detection(99, 1, 0.9, (0, 0, 1, 1), rle_encode(rect(0, 0, 8, 8))),)
    )
    with pytest.raises(ValidationError):
        map50(ds, bad)
    no_mask = DetectionSet((Detection(1, 1, 0.9, (0, 0, 1, 1), None),))
    with pytest.raises(ValidationError):
        map50(ds, no_mask)


def test_map50_max_dets_cap():
    gt_mask = rect(0, 0, 10, 10)
    gts = [{"image_id": 1, "category_id": 1, "mask": gt_mask, "iscrowd": 0}]
    ds = build_dataset(gts)
    # 3 junk detections outscore the good one; with a cap of 3 the TP is cut
    dets = [
        {"image_id": 1, "category_id": 1, "mask": rect(15, 15, 3, 3), "score": 0.9},
        {"image_id": 1, "category_id": 1, "mask": rect(15, 0, 3, 3), "score": 0.8},
        {"image_id": 1, "category_id": 1, "mask": rect(0, 15, 3, 3), "score": 0.7},
        {"image_id": 1, "category_id": 1, "mask": gt_mask, "score": 0.6},
    ]
    capped = map50(ds, build_results(dets), max_dets=3)
    uncapped = map50(ds, build_results(dets), max_dets=None)
    assert capped.map50 == 0.0
    assert uncapped.map50 > 0.0


# ---------------------------------------------------------------------------
# Oracle equivalence on random toy datasets


def random_toy(rng, allow_crowd=True):
    n_images = int(rng.integers(1, 5))
    cats = list(range(1, int(rng.integers(2, 4))))
    gts = []
    for image_id in range(1, n_images + 1):
        for _ in range(int(rng.integers(0, 5))):
            h, w = int(rng.integers(3, 12)), int(rng.integers(3, 12))
            r0, c0 = int(rng.integers(0, H - h)), int(rng.integers(0, W - w))
            gts.append(
                {
                    "image_id": image_id,
                    "category_id": int(rng.choice(cats)),
                    "mask": rect(r0, c0, h, w),
                    "iscrowd": int(allow_crowd and rng.random() < 0.15),
                }
            )
    dets = []
    for g in gts:
        if rng.random() < 0.75:  # near-duplicate of the GT, jittered
            dr, dc = int(rng.integers(-2, 3)), int(rng.integers(-2, 3))
            rows = np.flatnonzero(g["mask"].any(axis=1))
            cols = np.flatnonzero(g["mask"].any(axis=0))
            shifted = rect(
                rows[0] + dr, cols[0] + dc, len(rows), len(cols)
            )
            if not shifted.any():
                continue
            dets.append(
                {
                    "image_id": g["image_id"],
                    "category_id": g["category_id"],
                    "mask": shifted,
                    "score": float(rng.uniform(0.05, 1.0)),
                }
            )
    for _ in range(int(rng.integers(0, 6))):  # noise detections
        h, w = int(rng.integers(3, 10)), int(rng.integers(3, 10))
        r0, c0 = int(rng.integers(0, H - h)), int(rng.integers(0, W - w))
        image_id = int(rng.integers(1, n_images + 1))
        dets.append(
            {
                "image_id": image_id,
                "category_id": int(rng.choice(cats)),
                "mask": rect(r0, c0, h, w),
                "score": float(rng.uniform(0.05, 1.0)),
            }
        )
    return n_images, cats, gts, dets


def test_map50_matches_reference_evaluator():
    rng = np.random.default_rng(2023)
    checked = 0
    for _ in range(50):
        n_images, cats, gts, dets = random_toy(rng)
        if not any(not g["iscrowd"] for g in gts):
            continue
        ds = build_dataset(gts, images=n_images, cats=cats)
        results = build_results(dets)
        mine = map50(ds, results)
        ref, ref_aps = ref_map50(
            gts, dets, [img.id for img in ds.images], iou_thr=0.5, max_dets=100
        )
        assert mine.map50 == pytest.approx(ref, abs=1e-6)
        for cat, ap in ref_aps.items():
            assert mine.ap_per_category[cat] == pytest.approx(ap, abs=1e-6)
        checked += 1
    assert checked >= 40
