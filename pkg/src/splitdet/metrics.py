"""COCO-convention average precision (AP / AP50 / AP75) for box detections.

Two implementations ship side by side: :func:`evaluate` is the production
path (vectorized matching), and :func:`evaluate_bruteforce` recomputes the
same quantities by direct definition with plain Python loops.  The brute-force
path exists so tests can catch drift in the fast path; it refuses large
instances.

Conventions (shared by both paths so results agree exactly):
- 10 IoU thresholds 0.50:0.05:0.95; AP50/AP75 are the fixed-threshold values.
- greedy matching in descending score order; each detection takes the
  unmatched ground-truth box with the highest IoU >= threshold; IoU ties go to
  the lowest box index, score ties to the lexicographically first image key.
- 101-point interpolated precision-recall area, macro-averaged over the
  classes present in the ground truth; all values reported in percent.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InstanceTooLargeError
from .structures import Detection, check_box

IOU_THRESHOLDS = tuple((50 + 5 * k) / 100 for k in range(10))
RECALL_POINTS = tuple(k / 100 for k in range(101))
BRUTEFORCE_MAX_PER_CLASS = 12


def iou(a, b) -> float:
    """Intersection-over-union of two (x_min, y_min, x_max, y_max) boxes."""
    ax0, ay0, ax1, ay1 = check_box(a)
    bx0, by0, bx1, by1 = check_box(b)
    inter_w = min(ax1, bx1) - max(ax0, bx0)
    inter_h = min(ay1, by1) - max(ay0, by0)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    inter = inter_w * inter_h
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


@dataclass(frozen=True)
class EvalResult:
    """AP metrics in percent, with a per-class breakdown."""

    ap: float
    ap50: float
    ap75: float
    per_class: dict = field(default_factory=dict)
    no_ground_truth: bool = False

    def to_dict(self) -> dict:
        return {
            "ap": self.ap,
            "ap50": self.ap50,
            "ap75": self.ap75,
            "per_class": {name: dict(values) for name, values in self.per_class.items()},
            "no_ground_truth": self.no_ground_truth,
        }


def _class_names(class_map, class_ids):
    if class_map is None:
        return {cid: str(cid) for cid in class_ids}
    return {cid: class_map.name_of(cid) for cid in class_ids}


def _canonical_detections(detections_by_image, class_id):
    """All detections of one class as (score, image_key, index, box), sorted."""
    rows = []
    for key in sorted(detections_by_image):
        for index, det in enumerate(detections_by_image[key]):
            if det.class_id == class_id:
                rows.append((det.score, key, index, det.box))
    rows.sort(key=lambda row: (-row[0], row[1], row[2]))
    return rows


def _iou_matrix(det_box, gt_boxes):
    """IoU of one detection box against an (N, 4) array of ground-truth boxes."""
    x0 = np.maximum(det_box[0], gt_boxes[:, 0])
    y0 = np.maximum(det_box[1], gt_boxes[:, 1])
    x1 = np.minimum(det_box[2], gt_boxes[:, 2])
    y1 = np.minimum(det_box[3], gt_boxes[:, 3])
    inter_w = x1 - x0
    inter_h = y1 - y0
    inter = np.where((inter_w > 0.0) & (inter_h > 0.0), inter_w * inter_h, 0.0)
    area_det = (det_box[2] - det_box[0]) * (det_box[3] - det_box[1])
    area_gt = (gt_boxes[:, 2] - gt_boxes[:, 0]) * (gt_boxes[:, 3] - gt_boxes[:, 1])
    return inter / (area_det + area_gt - inter)


def _interpolated_ap(tp_flags, npos):
    """101-point interpolated AP from ordered true-positive flags."""
    if not tp_flags or npos == 0:
        return 0.0
    tp = np.cumsum(np.asarray(tp_flags, dtype=np.float64))
    fp = np.cumsum(1.0 - np.asarray(tp_flags, dtype=np.float64))
    recall = tp / float(npos)
    precision = tp / (tp + fp)
    # Precision envelope: best precision achievable at recall >= r.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    indices = np.searchsorted(recall, np.asarray(RECALL_POINTS), side="left")
    sampled = [float(envelope[i]) if i < len(envelope) else 0.0 for i in indices]
    return math.fsum(sampled) / len(RECALL_POINTS)


def evaluate(detections_by_image: dict, ground_truth_by_image: dict, class_map=None) -> EvalResult:
    """Score detections against ground truth with the COCO AP protocol.

    Both arguments map image keys to lists (:class:`Detection` /
    :class:`GroundTruthBox`); keys present in only one mapping count as images
    with no detections or no ground truth respectively.  Returns zeros with
    ``no_ground_truth=True`` when the ground truth is empty.
    """
    image_keys = sorted(set(detections_by_image) | set(ground_truth_by_image))
    gt_classes = sorted(
        {box.class_id for boxes in ground_truth_by_image.values() for box in boxes}
    )
    if not gt_classes:
        return EvalResult(0.0, 0.0, 0.0, per_class={}, no_ground_truth=True)

    names = _class_names(class_map, gt_classes)
    per_class = {}
    for class_id in gt_classes:
        gt_by_image = {
            key: [box.box for box in ground_truth_by_image.get(key, []) if box.class_id == class_id]
            for key in image_keys
        }
        npos = sum(len(boxes) for boxes in gt_by_image.values())
        detections = _canonical_detections(detections_by_image, class_id)

        ap_at = []
        for threshold in IOU_THRESHOLDS:
            matched = {key: np.zeros(len(gt_by_image[key]), dtype=bool) for key in image_keys}
            tp_flags = []
            for _, key, _, det_box in detections:
                boxes = gt_by_image.get(key, [])
                if boxes:
                    ious = _iou_matrix(det_box, np.asarray(boxes, dtype=np.float64))
                    ious = np.where(matched[key], -1.0, ious)
                    best = int(np.argmax(ious))
                    if ious[best] >= threshold:
                        matched[key][best] = True
                        tp_flags.append(1.0)
                        continue
                tp_flags.append(0.0)
            ap_at.append(_interpolated_ap(tp_flags, npos))

        per_class[names[class_id]] = {
            "ap": 100.0 * (math.fsum(ap_at) / len(ap_at)),
            "ap50": 100.0 * ap_at[0],
            "ap75": 100.0 * ap_at[5],
        }

    num = len(per_class)
    return EvalResult(
        ap=math.fsum(v["ap"] for v in per_class.values()) / num,
        ap50=math.fsum(v["ap50"] for v in per_class.values()) / num,
        ap75=math.fsum(v["ap75"] for v in per_class.values()) / num,
        per_class=per_class,
    )


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------

def _plain_iou(a, b):
    inter_w = min(a[2], b[2]) - max(a[0], b[0])
    inter_h = min(a[3], b[3]) - max(a[1], b[1])
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    inter = inter_w * inter_h
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


def evaluate_bruteforce(
    detections_by_image: dict, ground_truth_by_image: dict, class_map=None
) -> EvalResult:
    """Direct-definition AP computation on small instances.

    Recomputes matching and the interpolated precision-recall area with plain
    loops over every detection, ground-truth box and recall point.  Refuses
    instances with more than 12 detections in any class.
    """
    gt_classes = sorted(
        {box.class_id for boxes in ground_truth_by_image.values() for box in boxes}
    )
    if not gt_classes:
        return EvalResult(0.0, 0.0, 0.0, per_class={}, no_ground_truth=True)

    counts = {}
    for dets in detections_by_image.values():
        for det in dets:
            counts[det.class_id] = counts.get(det.class_id, 0) + 1
    oversized = {cid: n for cid, n in counts.items() if n > BRUTEFORCE_MAX_PER_CLASS}
    if oversized:
        raise InstanceTooLargeError(
            f"brute-force evaluator handles at most {BRUTEFORCE_MAX_PER_CLASS} "
            f"detections per class, got {oversized}"
        )

    names = _class_names(class_map, gt_classes)
    per_class = {}
    for class_id in gt_classes:
        # Ground truth of this class, per image, in input order.
        gts = {}
        npos = 0
        for key, boxes in ground_truth_by_image.items():
            gts[key] = [box.box for box in boxes if box.class_id == class_id]
            npos += len(gts[key])

        # Canonical detection order: score desc, then image key, then index.
        dets = []
        for key in sorted(detections_by_image):
            for index, det in enumerate(detections_by_image[key]):
                if det.class_id == class_id:
                    dets.append((det.score, key, index, det.box))
        dets.sort(key=lambda row: (-row[0], row[1], row[2]))

        ap_at = []
        for threshold in IOU_THRESHOLDS:
            used = {key: [False] * len(boxes) for key, boxes in gts.items()}
            flags = []
            for _, key, _, det_box in dets:
                best_iou = -1.0
                best_index = None
                for gt_index, gt_box in enumerate(gts.get(key, [])):
                    if used.get(key, [])[gt_index]:
                        continue
                    value = _plain_iou(det_box, gt_box)
                    if value > best_iou:
                        best_iou = value
                        best_index = gt_index
                if best_index is not None and best_iou >= threshold:
                    used[key][best_index] = True
                    flags.append(True)
                else:
                    flags.append(False)

            # Direct-definition interpolated AP: scan every prefix point.
            points = []
            tp = 0
            for rank, flag in enumerate(flags, start=1):
                if flag:
                    tp += 1
                points.append((tp / float(npos) if npos else 0.0, tp / float(rank)))
            sampled = []
            for recall_point in RECALL_POINTS:
                best = 0.0
                for recall, precision in points:
                    if recall >= recall_point and precision > best:
                        best = precision
                sampled.append(best)
            ap_at.append(math.fsum(sampled) / len(RECALL_POINTS) if npos else 0.0)

        per_class[names[class_id]] = {
            "ap": 100.0 * (math.fsum(ap_at) / len(ap_at)),
            "ap50": 100.0 * ap_at[0],
            "ap75": 100.0 * ap_at[5],
        }

    num = len(per_class)
    return EvalResult(
        ap=math.fsum(v["ap"] for v in per_class.values()) / num,
        ap50=math.fsum(v["ap50"] for v in per_class.values()) / num,
        ap75=math.fsum(v["ap75"] for v in per_class.values()) / num,
        per_class=per_class,
    )


# ---------------------------------------------------------------------------
# File interfaces
# ---------------------------------------------------------------------------

def write_detections_jsonl(detections_by_image: dict, path, class_map=None) -> None:
    """One JSON object per detection: {image, box, class, score}."""
    with open(path, "w") as fh:
        for key in sorted(detections_by_image):
            for det in detections_by_image[key]:
                record = {
                    "image": key,
                    "box": list(det.box),
                    "class": class_map.name_of(det.class_id) if class_map else det.class_id,
                    "score": det.score,
                }
                fh.write(json.dumps(record) + "\n")


def read_detections_jsonl(path, class_map=None) -> dict:
    """Read {image, box, class, score} JSON lines into per-image detections."""
    detections = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            label = record["class"]
            if isinstance(label, str):
                if class_map is None:
                    raise ValueError(
                        f"line {line_no}: class given by name {label!r} but no class map provided"
                    )
                class_id = class_map.id_of(label)
            else:
                class_id = int(label)
            det = Detection(tuple(record["box"]), class_id, float(record["score"]))
            detections.setdefault(record["image"], []).append(det)
    return detections


def write_result_json(result: EvalResult, path) -> None:
    with open(path, "w") as fh:
        json.dump(result.to_dict(), fh, indent=2)
        fh.write("\n")


def write_result_csv(result: EvalResult, path, architecture: str = "") -> None:
    """One CSV row in the accuracy-table column layout."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["architecture", "ap", "ap50", "ap75"])
        writer.writerow(
            [architecture, f"{result.ap:.6f}", f"{result.ap50:.6f}", f"{result.ap75:.6f}"]
        )
