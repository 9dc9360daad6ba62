"""Focal classification loss plus Huber box regression for anchor targets."""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .anchors import STATE_IGNORE, STATE_POSITIVE, encode_boxes

FOCAL_ALPHA = 0.25
FOCAL_GAMMA = 2.0
HUBER_DELTA = 1.0


@dataclass
class AnchorTargets:
    """Per-anchor training targets for one image.

    class_onehot: (A, K) float, all-zero rows for negatives.
    state: (A,) int8, 1 positive / 0 negative / -1 ignored.
    box_offsets: (A, 4) float, meaningful only on positive rows.
    """

    class_onehot: torch.Tensor
    state: torch.Tensor
    box_offsets: torch.Tensor

    @property
    def num_positive(self) -> int:
        return int((self.state == STATE_POSITIVE).sum())


def build_targets(anchors: np.ndarray, boxes: np.ndarray, labels: np.ndarray,
                  num_classes: int, state: np.ndarray, matched: np.ndarray) -> AnchorTargets:
    """Assemble tensors from a matching result (see anchors.match_anchors)."""
    num_anchors = anchors.shape[0]
    onehot = np.zeros((num_anchors, num_classes), dtype=np.float32)
    offsets = np.zeros((num_anchors, 4), dtype=np.float32)
    positive = state == STATE_POSITIVE
    if positive.any():
        matched_pos = matched[positive]
        onehot[positive, labels[matched_pos]] = 1.0
        offsets[positive] = encode_boxes(anchors[positive], boxes[matched_pos]).astype(np.float32)
    return AnchorTargets(
        class_onehot=torch.from_numpy(onehot),
        state=torch.from_numpy(state.astype(np.int8)),
        box_offsets=torch.from_numpy(offsets),
    )


def focal_loss_terms(logits: torch.Tensor, targets: torch.Tensor,
                     alpha: float = FOCAL_ALPHA, gamma: float = FOCAL_GAMMA) -> torch.Tensor:
    """Elementwise focal loss -alpha_t (1 - p_t)^gamma log(p_t) on logits."""
    p = torch.sigmoid(logits)
    ce = F.binary_cross_entropy_with_logits(logits, targets, reduction="none")
    p_t = p * targets + (1.0 - p) * (1.0 - targets)
    alpha_t = alpha * targets + (1.0 - alpha) * (1.0 - targets)
    return alpha_t * (1.0 - p_t) ** gamma * ce


def detection_loss(class_logits: torch.Tensor, box_preds: torch.Tensor, targets,
                   alpha: float = FOCAL_ALPHA, gamma: float = FOCAL_GAMMA,
                   huber_delta: float = HUBER_DELTA):
    """Total detection loss for a batch.

    class_logits: (B, A, K); box_preds: (B, A, 4); targets: list of
    AnchorTargets, one per image.  The classification term sums focal loss
    over non-ignored anchors; the box term sums Huber loss over positive
    anchors; both are normalized by the batch's positive-anchor count,
    clamped to 1 so an all-background batch stays finite.

    Returns (total, parts) where parts holds the two differentiable terms.
    """
    if isinstance(targets, AnchorTargets):
        targets = [targets]
    if class_logits.dim() == 2:
        class_logits = class_logits.unsqueeze(0)
        box_preds = box_preds.unsqueeze(0)
    if class_logits.shape[0] != len(targets):
        raise ValueError(
            f"batch of {class_logits.shape[0]} predictions but {len(targets)} targets"
        )

    total_positive = max(1, sum(t.num_positive for t in targets))
    cls_term = class_logits.new_zeros(())
    box_term = class_logits.new_zeros(())
    for i, target in enumerate(targets):
        state = target.state
        keep = state != STATE_IGNORE
        elementwise = focal_loss_terms(
            class_logits[i][keep], target.class_onehot.to(class_logits.dtype)[keep],
            alpha=alpha, gamma=gamma,
        )
        cls_term = cls_term + elementwise.sum()
        positive = state == STATE_POSITIVE
        if bool(positive.any()):
            box_term = box_term + F.huber_loss(
                box_preds[i][positive],
                target.box_offsets.to(box_preds.dtype)[positive],
                reduction="sum",
                delta=huber_delta,
            )
    cls_term = cls_term / total_positive
    box_term = box_term / total_positive
    return cls_term + box_term, {"classification": cls_term, "box": box_term}
