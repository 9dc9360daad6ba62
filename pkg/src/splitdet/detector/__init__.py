"""Single-shot pyramid detector with configurable fusion/head depth split."""

from .anchors import decode_boxes, encode_boxes, generate_anchors, match_anchors, pairwise_iou
from .checkpoint import load_checkpoint, save_checkpoint
from .estimator import PyramidDetector
from .inference import InferenceConfig, infer, nms_keep
from .layers import FusionNode, fast_normalized_weights, fuse_features
from .loss import AnchorTargets, build_targets, detection_loss, focal_loss_terms
from .network import DetectorNet, ParamCount, build_detector, count_params
from .training import OptimizerParams, ingest_samples, train

__all__ = [
    "AnchorTargets",
    "DetectorNet",
    "FusionNode",
    "InferenceConfig",
    "OptimizerParams",
    "ParamCount",
    "PyramidDetector",
    "build_detector",
    "build_targets",
    "count_params",
    "decode_boxes",
    "detection_loss",
    "encode_boxes",
    "fast_normalized_weights",
    "focal_loss_terms",
    "fuse_features",
    "generate_anchors",
    "infer",
    "ingest_samples",
    "load_checkpoint",
    "match_anchors",
    "nms_keep",
    "pairwise_iou",
    "save_checkpoint",
    "train",
]
