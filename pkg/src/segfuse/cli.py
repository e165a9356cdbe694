"""Command-line entry point: stats / augment / fuse / eval / swa-avg / cbnet-sim.

Exit codes: 0 success, 1 validation or IO failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import augment as aug
from . import dataset as dio
from . import ensemble as ens
from . import evaluation as ev
from . import numerics as num
from .errors import SegfuseError, ValidationError, WeightMismatch

log = logging.getLogger("segfuse")


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("SEGFUSE_THREADS", "1")),
        help="worker threads for per-image fan-out (env SEGFUSE_THREADS)",
    )
    parser.add_argument(
        "--log-level",
        default="warning",
        choices=["debug", "info", "warning", "error"],
        help="logging verbosity",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segfuse",
        description="Roof instance-segmentation toolkit: dataset stats, "
        "copy-paste augmentation, WBF/WSF ensembling, and mAP50 evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="dataset class/size statistics")
    p.add_argument("--dataset", required=True, help="COCO dataset JSON")
    p.add_argument(
        "--size-thresholds",
        default="32,96",
        help="small/medium side-length thresholds 'a,b' (areas a^2 and b^2)",
    )
    p.add_argument("--json-out", help="also write the report as JSON")
    _common_flags(p)

    p = sub.add_parser("augment", help="copy-paste augment a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--images", required=True, help="directory of source images")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", required=True, help="PasteConfig JSON file")
    p.add_argument("--seed", type=int, default=None)
    _common_flags(p)

    p = sub.add_parser("fuse", help="fuse detection results with WBF/WSF")
    p.add_argument("--gt", required=True, help="dataset JSON for validation")
    p.add_argument("--results", action="append", required=True, help="results JSON (repeatable)")
    p.add_argument("--weights", help="comma-separated model weights (default all 1)")
    p.add_argument("--config", help="FusionConfig JSON file")
    p.add_argument("--out", required=True, help="fused results JSON path")
    _common_flags(p)

    p = sub.add_parser("eval", help="mask mAP50 against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--max-dets", type=int, default=100, help="per-image cap (0 disables)")
    p.add_argument("--json-out", help="also write the report as JSON")
    _common_flags(p)

    p = sub.add_parser("swa-avg", help="average parameter checkpoints")
    p.add_argument("--ckpt", action="append", required=True, help="checkpoint JSON (repeatable)")
    p.add_argument("--out", required=True)
    _common_flags(p)

    p = sub.add_parser("cbnet-sim", help="run the dual-backbone stage composer")
    p.add_argument("--aux", required=True, help="auxiliary pyramid JSON")
    p.add_argument("--lead-init", required=True, help="lead stage-0 input JSON")
    p.add_argument("--stages", type=int, required=True, help="expected stage count")
    p.add_argument("--out", required=True)
    _common_flags(p)

    return parser


def _write_json(data, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True)


def _parallel_map(fn, items, threads: int):
    """Order-preserving map, fanned out over a bounded thread pool."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _cmd_stats(args) -> int:
    ds = dio.load_dataset(args.dataset)
    try:
        a, b = (float(v) for v in args.size_thresholds.split(","))
    except ValueError as exc:
        raise ValidationError(f"bad --size-thresholds {args.size_thresholds!r}") from exc
    report = dio.dataset_stats(ds, (a, b))
    print(report.to_table())
    if args.json_out:
        _write_json(report.to_json_dict(), args.json_out)
    return 0


def _cmd_augment(args) -> int:
    ds = dio.load_dataset(args.dataset)
    cfg = aug.PasteConfig.from_json_file(args.config)
    out_ds = aug.augment_dataset(
        ds, args.images, args.out, cfg, seed=args.seed, threads=args.threads
    )
    out_json = os.path.join(args.out, "dataset.json")
    dio.save_dataset(out_ds, out_json)
    print(f"wrote {len(out_ds.annotations)} annotations to {out_json}")
    return 0


def _cmd_fuse(args) -> int:
    ds = dio.load_dataset(args.gt)
    result_sets = [dio.load_results(path, ds) for path in args.results]
    if args.weights:
        weights = [float(w) for w in args.weights.split(",")]
        if len(weights) != len(result_sets):
            raise WeightMismatch(
                f"{len(weights)} weights for {len(result_sets)} result files"
            )
    else:
        weights = [1.0] * len(result_sets)
    cfg = ens.FusionConfig()
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = ens.FusionConfig.from_json_dict(json.load(fh))
    models = [ens.ModelOutput(w, rs) for w, rs in zip(weights, result_sets)]
    with_masks = all(
        d.segmentation is not None for rs in result_sets for d in rs.entries
    )
    fuse_fn = ens.wsf if with_masks else ens.wbf
    if not with_masks:
        log.info("some detections carry no mask; falling back to box-only WBF")

    image_ids = [img.id for img in ds.images]
    fused_per_image = _parallel_map(
        lambda image_id: ens.fused_to_detections(
            fuse_fn(models, image_id, cfg), image_id
        ),
        image_ids,
        args.threads,
    )
    entries = tuple(d for dets in fused_per_image for d in dets.entries)
    dio.write_results(dio.DetectionSet(entries), args.out)
    print(f"fused {sum(len(rs.entries) for rs in result_sets)} detections "
          f"from {len(result_sets)} models into {len(entries)} ({args.out})")
    return 0


def _cmd_eval(args) -> int:
    ds = dio.load_dataset(args.gt)
    results = dio.load_results(args.results, ds)
    max_dets = args.max_dets if args.max_dets > 0 else None
    report = ev.map50(ds, results, max_dets=max_dets)
    print(report.to_table(ds))
    if args.json_out:
        _write_json(report.to_json_dict(), args.json_out)
    return 0


def _cmd_swa_avg(args) -> int:
    checkpoints = []
    for path in args.ckpt:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        checkpoints.append({k: np.asarray(v, dtype=np.float64) for k, v in raw.items()})
    mean = num.swa_average(checkpoints)
    _write_json({k: v.tolist() for k, v in mean.items()}, args.out)
    print(f"averaged {len(checkpoints)} checkpoints into {args.out}")
    return 0


def _cmd_cbnet_sim(args) -> int:
    with open(args.aux, "r", encoding="utf-8") as fh:
        aux_raw = json.load(fh)
    with open(args.lead_init, "r", encoding="utf-8") as fh:
        lead_raw = json.load(fh)
    try:
        stages = [np.asarray(s, dtype=np.float64) for s in aux_raw["stages"]]
        lead_init = np.asarray(lead_raw["values"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed pyramid JSON: {exc}") from exc
    if len(stages) != args.stages:
        raise ValidationError(
            f"--stages {args.stages} but aux pyramid has {len(stages)} stages"
        )
    fns = [num.identity_stage() for _ in stages]
    lead = num.cbnet_compose(lead_init, stages, fns)
    _write_json({"stages": [m.tolist() for m in lead]}, args.out)
    print(f"composed {len(lead)} lead stages into {args.out}")
    return 0


_COMMANDS = {
    "stats": _cmd_stats,
    "augment": _cmd_augment,
    "fuse": _cmd_fuse,
    "eval": _cmd_eval,
    "swa-avg": _cmd_swa_avg,
    "cbnet-sim": _cmd_cbnet_sim,
}


def run(argv=None) -> int:
    """Parse argv and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=args.log_level.upper())
    try:
        return _COMMANDS[args.command](args)
    except SegfuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
