"""SGD training loop over letterboxed, anchor-matched samples."""

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch

from ..datasets import load_image
from ..exceptions import IngestionError
from ..validation import check_seed
from .anchors import match_anchors
from .loss import build_targets, detection_loss
from .network import DetectorNet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerParams:
    """SGD hyperparameters; the learning rate follows a cosine decay to zero."""

    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 8
    grad_clip: float = 10.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")


def ingest_samples(net: DetectorNet, samples: list):
    """Convert samples into (image tensor, anchor targets) pairs.

    Samples must already be at the detector's input resolution (the data
    module letterboxes); anything else is an ingestion error.
    """
    side = net.config.input_resolution
    anchors = net.anchors
    prepared = []
    for sample in samples:
        image = load_image(sample)
        if image.shape[:2] != (side, side):
            raise IngestionError(
                f"sample {sample.key} is {image.shape[:2]} but the detector expects "
                f"({side}, {side}); letterbox it first"
            )
        boxes = np.asarray([gt.box for gt in sample.boxes], dtype=np.float64).reshape(-1, 4)
        labels = np.asarray([gt.class_id for gt in sample.boxes], dtype=np.int64)
        if labels.size and labels.max() >= net.num_classes:
            raise IngestionError(
                f"sample {sample.key} has class id {labels.max()} but the detector "
                f"has {net.num_classes} classes"
            )
        state, matched = match_anchors(anchors, boxes)
        targets = build_targets(anchors, boxes, labels, net.num_classes, state, matched)
        tensor = torch.from_numpy(image.astype(np.float32) / 255.0).permute(2, 0, 1)
        prepared.append((tensor, targets))
    return prepared


def train(net: DetectorNet, samples: list, epochs: int,
          params: OptimizerParams = OptimizerParams(), seed: int = 0,
          log_every: int = 0) -> list:
    """Train in place with SGD + momentum and cosine-decayed learning rate.

    Returns the loss history, one mean-batch-loss entry per epoch.  Given the
    same seed, data and initial weights, the history is reproducible
    bit-for-bit on a fixed machine.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be at least 1, got {epochs}")
    if not samples:
        raise ValueError("training needs at least one sample")

    prepared = ingest_samples(net, samples)
    optimizer = torch.optim.SGD(
        net.parameters(),
        lr=params.learning_rate,
        momentum=params.momentum,
        weight_decay=params.weight_decay,
    )
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=epochs)
    shuffle_rng = np.random.default_rng(check_seed(seed))

    net.train()
    history = []
    for epoch in range(epochs):
        order = shuffle_rng.permutation(len(prepared))
        epoch_losses = []
        for start in range(0, len(order), params.batch_size):
            batch = [prepared[i] for i in order[start : start + params.batch_size]]
            images = torch.stack([tensor for tensor, _ in batch])
            targets = [target for _, target in batch]

            optimizer.zero_grad()
            class_logits, box_preds = net.predict_flat(images)
            total, _ = detection_loss(class_logits, box_preds, targets)
            total.backward()
            if params.grad_clip:
                torch.nn.utils.clip_grad_norm_(net.parameters(), params.grad_clip)
            optimizer.step()
            epoch_losses.append(float(total.detach()))
        scheduler.step()
        history.append(math.fsum(epoch_losses) / len(epoch_losses))
        if log_every and (epoch + 1) % log_every == 0:
            logger.info("epoch %d/%d loss %.4f", epoch + 1, epochs, history[-1])
    return history
