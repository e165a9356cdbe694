"""segfuse: mask geometry, copy-paste augmentation, WBF/WSF detection
ensembling, and contest-style mAP50 evaluation for instance segmentation."""

from . import errors
from .augment import (
    InstanceBankEntry,
    PasteConfig,
    Phase,
    PhaseSchedule,
    copy_paste,
    extract_instances,
    phase_of,
)
from .dataset import (
    Annotation,
    Category,
    Dataset,
    Detection,
    DetectionSet,
    ImageInfo,
    StatsReport,
    dataset_stats,
    load_dataset,
    load_results,
    repeat_factors,
    save_dataset,
    write_results,
)
from .ensemble import FusedInstance, FusionConfig, ModelOutput, nms_baseline, wbf, wsf
from .evaluation import EvalReport, MatchFlag, MatchResult, average_precision, map50, match_detections
from .masks import (
    RleMask,
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
from .numerics import (
    SeesawParams,
    affine_stage,
    cbnet_compose,
    cyclical_lr,
    identity_stage,
    nearest_resize,
    seesaw_loss,
    swa_average,
)

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "Category",
    "Dataset",
    "Detection",
    "DetectionSet",
    "EvalReport",
    "FusedInstance",
    "FusionConfig",
    "ImageInfo",
    "InstanceBankEntry",
    "MatchFlag",
    "MatchResult",
    "ModelOutput",
    "PasteConfig",
    "Phase",
    "PhaseSchedule",
    "RleMask",
    "SeesawParams",
    "StatsReport",
    "TransformParams",
    "affine_stage",
    "average_precision",
    "box_iou",
    "cbnet_compose",
    "copy_paste",
    "cyclical_lr",
    "dataset_stats",
    "errors",
    "extract_instances",
    "identity_stage",
    "load_dataset",
    "load_results",
    "map50",
    "mask_iou",
    "match_detections",
    "nearest_resize",
    "nms_baseline",
    "phase_of",
    "polygon_to_mask",
    "repeat_factors",
    "rle_decode",
    "rle_encode",
    "rle_from_string",
    "rle_to_string",
    "save_dataset",
    "seesaw_loss",
    "swa_average",
    "transform_instance",
    "wbf",
    "wsf",
    "write_results",
]
