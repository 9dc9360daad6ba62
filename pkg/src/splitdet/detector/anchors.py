"""Anchor grid generation, IoU matching and box offset coding.

Anchor layout follows the single-shot pyramid convention: 5 levels at strides
8..128, 9 anchors per cell (3 octave scales x 3 aspect ratios, base size
4 x stride).  Anchor order is (row, column, anchor-within-cell) per level,
which must stay in sync with how head outputs are flattened.
"""

import numpy as np

from ..scaling import ArchitectureConfig

LEVELS = (3, 4, 5, 6, 7)
STRIDES = tuple(2**level for level in LEVELS)
SCALES = (2 ** 0.0, 2 ** (1.0 / 3.0), 2 ** (2.0 / 3.0))
RATIOS = (0.5, 1.0, 2.0)
ANCHORS_PER_CELL = len(SCALES) * len(RATIOS)
BASE_SIZE_FACTOR = 4

POSITIVE_IOU = 0.5
NEGATIVE_IOU = 0.4

# Anchor states used in matching results.
STATE_NEGATIVE = 0
STATE_POSITIVE = 1
STATE_IGNORE = -1


def cell_anchors(stride: int) -> np.ndarray:
    """The 9 anchors for one cell, centered at the origin, shape (9, 4)."""
    boxes = []
    for scale in SCALES:
        for ratio in RATIOS:
            size = BASE_SIZE_FACTOR * stride * scale
            w = size / np.sqrt(ratio)
            h = size * np.sqrt(ratio)
            boxes.append((-w / 2, -h / 2, w / 2, h / 2))
    return np.asarray(boxes, dtype=np.float64)


def generate_anchors(config: ArchitectureConfig) -> np.ndarray:
    """All anchors for a config as an (A, 4) array of (x0, y0, x1, y1)."""
    resolution = config.input_resolution
    all_levels = []
    for stride in STRIDES:
        side = resolution // stride
        base = cell_anchors(stride)
        ys, xs = np.mgrid[0:side, 0:side]
        centers_x = (xs + 0.5) * stride
        centers_y = (ys + 0.5) * stride
        shifts = np.stack([centers_x, centers_y, centers_x, centers_y], axis=-1)
        level = shifts.reshape(-1, 1, 4) + base.reshape(1, -1, 4)
        all_levels.append(level.reshape(-1, 4))
    return np.concatenate(all_levels, axis=0)


def pairwise_iou(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """(N, M) IoU matrix between two box arrays."""
    x0 = np.maximum(boxes_a[:, None, 0], boxes_b[None, :, 0])
    y0 = np.maximum(boxes_a[:, None, 1], boxes_b[None, :, 1])
    x1 = np.minimum(boxes_a[:, None, 2], boxes_b[None, :, 2])
    y1 = np.minimum(boxes_a[:, None, 3], boxes_b[None, :, 3])
    inter = np.clip(x1 - x0, 0.0, None) * np.clip(y1 - y0, 0.0, None)
    area_a = (boxes_a[:, 2] - boxes_a[:, 0]) * (boxes_a[:, 3] - boxes_a[:, 1])
    area_b = (boxes_b[:, 2] - boxes_b[:, 0]) * (boxes_b[:, 3] - boxes_b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def match_anchors(
    anchors: np.ndarray,
    gt_boxes: np.ndarray,
    positive_iou: float = POSITIVE_IOU,
    negative_iou: float = NEGATIVE_IOU,
):
    """Assign anchors to ground-truth boxes by IoU.

    Returns (state, matched_index): state is 1/0/-1 for positive, negative and
    ignored anchors; matched_index points into gt_boxes for positives.  Every
    ground-truth box additionally claims its best-overlapping anchor so no
    object goes unassigned.
    """
    num_anchors = anchors.shape[0]
    if gt_boxes.size == 0:
        return np.zeros(num_anchors, dtype=np.int8), np.full(num_anchors, -1, dtype=np.int64)

    ious = pairwise_iou(anchors, gt_boxes)
    best_gt = ious.argmax(axis=1)
    best_iou = ious[np.arange(num_anchors), best_gt]

    state = np.full(num_anchors, STATE_IGNORE, dtype=np.int8)
    state[best_iou < negative_iou] = STATE_NEGATIVE
    state[best_iou >= positive_iou] = STATE_POSITIVE
    matched = np.where(state == STATE_POSITIVE, best_gt, -1)

    # Low-quality matches: each gt claims its best anchor even below threshold.
    for gt_index in range(gt_boxes.shape[0]):
        anchor_index = int(ious[:, gt_index].argmax())
        if ious[anchor_index, gt_index] > 0.0:
            state[anchor_index] = STATE_POSITIVE
            matched[anchor_index] = gt_index
    return state, matched.astype(np.int64)


def encode_boxes(anchors: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Regression offsets (dx, dy, dw, dh) mapping anchors onto target boxes."""
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    acx = (anchors[:, 0] + anchors[:, 2]) / 2.0
    acy = (anchors[:, 1] + anchors[:, 3]) / 2.0
    bw = boxes[:, 2] - boxes[:, 0]
    bh = boxes[:, 3] - boxes[:, 1]
    bcx = (boxes[:, 0] + boxes[:, 2]) / 2.0
    bcy = (boxes[:, 1] + boxes[:, 3]) / 2.0
    return np.stack(
        [(bcx - acx) / aw, (bcy - acy) / ah, np.log(bw / aw), np.log(bh / ah)], axis=1
    )


def decode_boxes(anchors: np.ndarray, offsets: np.ndarray, clip_side=None) -> np.ndarray:
    """Inverse of :func:`encode_boxes`; optionally clips to a square image side."""
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    acx = (anchors[:, 0] + anchors[:, 2]) / 2.0
    acy = (anchors[:, 1] + anchors[:, 3]) / 2.0
    bcx = offsets[:, 0] * aw + acx
    bcy = offsets[:, 1] * ah + acy
    bw = np.exp(offsets[:, 2]) * aw
    bh = np.exp(offsets[:, 3]) * ah
    boxes = np.stack(
        [bcx - bw / 2.0, bcy - bh / 2.0, bcx + bw / 2.0, bcy + bh / 2.0], axis=1
    )
    if clip_side is not None:
        boxes = np.clip(boxes, 0.0, float(clip_side))
    return boxes
