"""Confidence-filtered inference: decode, threshold, per-class NMS."""

from dataclasses import dataclass

import numpy as np
import torch

from ..structures import Detection
from ..validation import check_rgb_image
from .anchors import decode_boxes
from .network import DetectorNet

DEFAULT_NMS_IOU = 0.5
DEFAULT_MAX_DETECTIONS = 100


@dataclass(frozen=True)
class InferenceConfig:
    """Post-processing knobs: score threshold tau, NMS IoU, output cap."""

    confidence_threshold: float = 0.4
    nms_iou_threshold: float = DEFAULT_NMS_IOU
    max_detections: int = DEFAULT_MAX_DETECTIONS

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError(f"confidence_threshold must be in [0, 1], got {self.confidence_threshold}")
        if not 0.0 < self.nms_iou_threshold <= 1.0:
            raise ValueError(f"nms_iou_threshold must be in (0, 1], got {self.nms_iou_threshold}")
        if self.max_detections < 1:
            raise ValueError(f"max_detections must be at least 1, got {self.max_detections}")


def nms_keep(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float) -> list:
    """Greedy non-maximum suppression; returns kept indices in score order."""
    order = np.argsort(-scores, kind="stable")
    x0, y0, x1, y1 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    areas = (x1 - x0) * (y1 - y0)
    keep = []
    while order.size > 0:
        top = int(order[0])
        keep.append(top)
        rest = order[1:]
        if rest.size == 0:
            break
        ix0 = np.maximum(x0[top], x0[rest])
        iy0 = np.maximum(y0[top], y0[rest])
        ix1 = np.minimum(x1[top], x1[rest])
        iy1 = np.minimum(y1[top], y1[rest])
        inter = np.clip(ix1 - ix0, 0.0, None) * np.clip(iy1 - iy0, 0.0, None)
        overlap = inter / (areas[top] + areas[rest] - inter)
        order = rest[overlap <= iou_threshold]
    return keep


def image_to_tensor(image: np.ndarray) -> torch.Tensor:
    """uint8 HWC image -> float CHW tensor in [0, 1] with batch dimension."""
    image = check_rgb_image(image)
    return torch.from_numpy(image.astype(np.float32) / 255.0).permute(2, 0, 1).unsqueeze(0)


def infer(net: DetectorNet, image: np.ndarray, cfg: InferenceConfig) -> list:
    """Detections for one image already at the network's input resolution.

    Scores below the confidence threshold are discarded, survivors go through
    per-class greedy NMS, and at most max_detections come back, sorted by
    descending score.
    """
    image = check_rgb_image(image)
    side = net.config.input_resolution
    if image.shape[:2] != (side, side):
        raise ValueError(
            f"image is {image.shape[:2]} but the detector expects {(side, side)}; letterbox first"
        )

    was_training = net.training
    net.eval()
    try:
        with torch.no_grad():
            class_logits, box_preds = net.predict_flat(image_to_tensor(image))
    finally:
        if was_training:
            net.train()

    scores = torch.sigmoid(class_logits)[0].numpy()
    offsets = box_preds[0].numpy().astype(np.float64)
    boxes = decode_boxes(net.anchors, offsets, clip_side=side)

    detections = []
    for class_id in range(net.num_classes):
        class_scores = scores[:, class_id]
        picked = np.nonzero(class_scores >= cfg.confidence_threshold)[0]
        if picked.size == 0:
            continue
        kept = nms_keep(boxes[picked], class_scores[picked], cfg.nms_iou_threshold)
        for index in kept:
            anchor_index = int(picked[index])
            x0, y0, x1, y1 = boxes[anchor_index]
            if x1 - x0 < 1e-3 or y1 - y0 < 1e-3:
                continue
            detections.append(
                Detection((x0, y0, x1, y1), class_id, float(class_scores[anchor_index]))
            )

    detections.sort(key=lambda d: (-d.score, d.class_id, d.box))
    return detections[: cfg.max_detections]
