"""Shared random-instance generators for unit and acceptance tests."""

import numpy as np
import torch

from splitdet.detector.loss import AnchorTargets
from splitdet.structures import Detection, GroundTruthBox


def make_eval_instance(rng, max_classes=3, max_boxes_per_class=8):
    """Random small detection/ground-truth instance for AP oracle comparison.

    Keeps both ground-truth boxes and detections at or below
    max_boxes_per_class per class across the whole instance, so the
    brute-force evaluator's size bound always holds.
    """
    num_classes = int(rng.integers(1, max_classes + 1))
    num_images = int(rng.integers(1, 4))
    gt_count = dict.fromkeys(range(num_classes), 0)
    det_count = dict.fromkeys(range(num_classes), 0)
    gts = {}
    dets = {}
    for i in range(num_images):
        key = f"img{i}"
        gts[key] = []
        dets[key] = []
        for class_id in range(num_classes):
            for _ in range(int(rng.integers(0, 3))):
                if gt_count[class_id] >= max_boxes_per_class:
                    break
                x0, y0 = rng.uniform(0, 60, size=2)
                w, h = rng.uniform(4, 40, size=2)
                box = (float(x0), float(y0), float(x0 + w), float(y0 + h))
                gts[key].append(GroundTruthBox(box, class_id))
                gt_count[class_id] += 1
                # Sometimes emit a detection near this ground-truth box.
                if rng.random() < 0.7 and det_count[class_id] < max_boxes_per_class:
                    jitter = rng.uniform(-6, 6, size=4)
                    cand = (
                        float(x0 + jitter[0]),
                        float(y0 + jitter[1]),
                        float(x0 + w + jitter[2]),
                        float(y0 + h + jitter[3]),
                    )
                    if cand[0] < cand[2] and cand[1] < cand[3]:
                        score = float(np.round(rng.uniform(0.05, 1.0), 3))
                        dets[key].append(Detection(cand, class_id, score))
                        det_count[class_id] += 1
        # A few background false positives.
        for _ in range(int(rng.integers(0, 3))):
            class_id = int(rng.integers(0, num_classes))
            if det_count[class_id] >= max_boxes_per_class:
                continue
            x0, y0 = rng.uniform(0, 70, size=2)
            w, h = rng.uniform(3, 25, size=2)
            score = float(np.round(rng.uniform(0.05, 1.0), 3))
            dets[key].append(
                Detection((float(x0), float(y0), float(x0 + w), float(y0 + h)), class_id, score)
            )
            det_count[class_id] += 1
    return dets, gts


def make_anchor_targets(rng, num_anchors, num_classes, ensure_positive=True):
    """Random anchor targets mixing positive/negative/ignored rows."""
    state = rng.choice([1, 0, -1], size=num_anchors, p=[0.3, 0.5, 0.2]).astype(np.int8)
    if ensure_positive and not (state == 1).any():
        state[0] = 1
    onehot = np.zeros((num_anchors, num_classes), dtype=np.float32)
    positives = np.nonzero(state == 1)[0]
    onehot[positives, rng.integers(0, num_classes, size=positives.size)] = 1.0
    offsets = rng.normal(0, 0.5, size=(num_anchors, 4)).astype(np.float32)
    offsets[state != 1] = 0.0
    return AnchorTargets(
        class_onehot=torch.from_numpy(onehot),
        state=torch.from_numpy(state),
        box_offsets=torch.from_numpy(offsets),
    )
