import math

import numpy as np
import pytest
import torch

from splitdet.detector.anchors import match_anchors
from splitdet.detector.loss import (
    AnchorTargets,
    build_targets,
    detection_loss,
    focal_loss_terms,
)


from conftest import make_anchor_targets as random_targets


class TestFocalTerms:
    def test_perfect_positive_goes_to_zero(self):
        logits = torch.tensor([[12.0]])
        targets = torch.tensor([[1.0]])
        assert float(focal_loss_terms(logits, targets)) < 1e-6

    def test_gamma_zero_alpha_half_is_half_ce(self):
        logits = torch.randn(16, 3)
        targets = (torch.rand(16, 3) > 0.5).float()
        ce = torch.nn.functional.binary_cross_entropy_with_logits(
            logits, targets, reduction="none"
        )
        terms = focal_loss_terms(logits, targets, alpha=0.5, gamma=0.0)
        assert torch.allclose(terms, 0.5 * ce, atol=1e-6)

    def test_hand_computed_value(self):
        # y=1, p=0.9 with alpha 0.25, gamma 2: -0.25 * 0.01 * ln(0.9).
        p = 0.9
        logit = torch.tensor([[math.log(p / (1 - p))]], dtype=torch.float64)
        value = float(focal_loss_terms(logit, torch.tensor([[1.0]], dtype=torch.float64)))
        assert value == pytest.approx(-0.25 * 0.01 * math.log(0.9), rel=1e-6)
        assert value == pytest.approx(2.634e-4, rel=1e-3)


class TestDetectionLoss:
    def test_zero_positives_normalizer_clamped(self):
        targets = AnchorTargets(
            class_onehot=torch.zeros(8, 2),
            state=torch.zeros(8, dtype=torch.int8),
            box_offsets=torch.zeros(8, 4),
        )
        logits = torch.zeros(8, 2)
        boxes = torch.zeros(8, 4)
        total, parts = detection_loss(logits, boxes, targets)
        assert torch.isfinite(total)
        assert float(parts["box"]) == 0.0

    def test_ignored_anchors_contribute_nothing(self):
        rng = np.random.default_rng(0)
        targets = random_targets(rng, 32, 3)
        logits = torch.randn(32, 3, dtype=torch.float64)
        boxes = torch.randn(32, 4, dtype=torch.float64)
        total, _ = detection_loss(logits, boxes, targets)
        # Perturb logits of ignored anchors only; loss must not move.
        perturbed = logits.clone()
        ignored = targets.state == -1
        assert bool(ignored.any())
        perturbed[ignored] += 3.0
        total2, _ = detection_loss(perturbed, boxes, targets)
        assert float(total) == pytest.approx(float(total2))

    def test_batch_mismatch_rejected(self):
        targets = AnchorTargets(
            class_onehot=torch.zeros(4, 2),
            state=torch.zeros(4, dtype=torch.int8),
            box_offsets=torch.zeros(4, 4),
        )
        with pytest.raises(ValueError):
            detection_loss(torch.zeros(2, 4, 2), torch.zeros(2, 4, 4), [targets])


class TestGradientCheck:
    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(99)
        h = 1e-4
        for _ in range(10):
            num_anchors = int(rng.integers(4, 65))
            num_classes = int(rng.integers(1, 4))
            targets = random_targets(rng, num_anchors, num_classes)
            logits = torch.tensor(
                rng.normal(0, 1.5, size=(num_anchors, num_classes)),
                dtype=torch.float64, requires_grad=True,
            )
            boxes = torch.tensor(
                rng.normal(0, 1.0, size=(num_anchors, 4)),
                dtype=torch.float64, requires_grad=True,
            )
            total, _ = detection_loss(logits, boxes, targets)
            total.backward()

            def loss_at(lg, bx):
                value, _ = detection_loss(lg, bx, targets)
                return float(value)

            for tensor, grad in ((logits, logits.grad), (boxes, boxes.grad)):
                flat = tensor.detach().clone().reshape(-1)
                numeric = np.zeros(flat.shape[0])
                for i in range(flat.shape[0]):
                    up = flat.clone()
                    down = flat.clone()
                    up[i] += h
                    down[i] -= h
                    if tensor is logits:
                        numeric[i] = (
                            loss_at(up.reshape(tensor.shape), boxes.detach())
                            - loss_at(down.reshape(tensor.shape), boxes.detach())
                        ) / (2 * h)
                    else:
                        numeric[i] = (
                            loss_at(logits.detach(), up.reshape(tensor.shape))
                            - loss_at(logits.detach(), down.reshape(tensor.shape))
                        ) / (2 * h)
                analytic = grad.detach().numpy().reshape(-1)
                denom = np.maximum(np.abs(numeric), 1e-8)
                mask = np.abs(numeric) > 1e-10
                rel = np.abs(analytic - numeric)[mask] / denom[mask]
                assert rel.max() < 1e-3


def test_build_targets_from_matching():
    anchors = np.asarray(
        [[0.0, 0.0, 10.0, 10.0], [50.0, 50.0, 70.0, 70.0], [200.0, 200.0, 220.0, 220.0]]
    )
    gt_boxes = np.asarray([[0.0, 0.0, 10.0, 10.0]])
    labels = np.asarray([1])
    state, matched = match_anchors(anchors, gt_boxes)
    targets = build_targets(anchors, gt_boxes, labels, num_classes=3, state=state, matched=matched)
    assert targets.num_positive == 1
    assert targets.class_onehot[0, 1] == 1.0
    assert torch.allclose(targets.box_offsets[0], torch.zeros(4))
