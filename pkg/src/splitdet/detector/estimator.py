"""sklearn-style estimator facade over the detector.

fit() letterboxes samples, builds the network and trains it; predict()
returns detections mapped back to the input images' own coordinates.  All
constructor arguments are plain values so get_params/set_params/clone work.
"""

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..datasets import AnnotatedSample, letterbox_image, letterbox_sample, load_image
from ..metrics import evaluate
from ..scaling import ArchitectureConfig, ScalingSpec, reduced_config
from ..structures import Detection
from ..validation import check_rgb_image, check_seed
from . import checkpoint as checkpoint_io
from .inference import InferenceConfig, infer
from .network import build_detector, count_params
from .training import OptimizerParams, train


class PyramidDetector(BaseEstimator):
    """Trainable single-shot detector for a given architecture config.

    Parameters
    ----------
    config : ArchitectureConfig or None
        Architecture to realize; defaults to the desk-scale parent with a
        1-layer fusion stack and 5-conv heads at resolution 128.
    class_names : sequence of str or None
        Detection classes; inferred as generic names from the training
        samples when omitted.
    epochs, learning_rate, momentum, weight_decay, batch_size, grad_clip, seed
        Training schedule (SGD with cosine-decayed learning rate).
    confidence_threshold, nms_iou_threshold, max_detections
        Default inference-time filtering; predict() can override.
    """

    def __init__(self, config=None, class_names=None, epochs=30, learning_rate=0.01,
                 momentum=0.9, weight_decay=1e-4, batch_size=8, grad_clip=10.0,
                 seed=0, confidence_threshold=0.4, nms_iou_threshold=0.5,
                 max_detections=100):
        self.config = config
        self.class_names = class_names
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.grad_clip = grad_clip
        self.seed = seed
        self.confidence_threshold = confidence_threshold
        self.nms_iou_threshold = nms_iou_threshold
        self.max_detections = max_detections

    # ------------------------------------------------------------------
    def _resolved_config(self) -> ArchitectureConfig:
        if self.config is None:
            return reduced_config(ScalingSpec.from_split(0, "1-5"))
        if isinstance(self.config, ArchitectureConfig):
            return self.config
        raise ValueError(f"config must be an ArchitectureConfig, got {type(self.config)}")

    def _inference_config(self, confidence_threshold=None, nms_iou_threshold=None,
                          max_detections=None) -> InferenceConfig:
        return InferenceConfig(
            confidence_threshold=(
                self.confidence_threshold if confidence_threshold is None else confidence_threshold
            ),
            nms_iou_threshold=(
                self.nms_iou_threshold if nms_iou_threshold is None else nms_iou_threshold
            ),
            max_detections=self.max_detections if max_detections is None else max_detections,
        )

    # ------------------------------------------------------------------
    def fit(self, samples, y=None):
        """Train on a list of AnnotatedSample; returns self."""
        if not samples:
            raise ValueError("fit needs at least one annotated sample")
        config = self._resolved_config()
        if self.class_names is None:
            max_id = max((gt.class_id for s in samples for gt in s.boxes), default=0)
            class_names = [f"class_{i}" for i in range(max_id + 1)]
        else:
            class_names = list(self.class_names)

        sized = []
        for sample in samples:
            image, boxes, _ = letterbox_sample(sample, config.input_resolution)
            sized.append(AnnotatedSample(key=sample.key, boxes=boxes, image=image))

        torch.manual_seed(check_seed(self.seed))
        net = build_detector(config, len(class_names))
        params = OptimizerParams(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            grad_clip=self.grad_clip,
        )
        history = train(net, sized, self.epochs, params, seed=self.seed, log_every=10)
        net.eval()

        self.net_ = net
        self.config_ = config
        self.class_names_ = class_names
        self.history_ = history
        return self

    # ------------------------------------------------------------------
    def predict(self, images, confidence_threshold=None, nms_iou_threshold=None,
                max_detections=None) -> list:
        """Detections per image, in each image's own pixel coordinates.

        Accepts a list of uint8 RGB arrays (or a single array) of any size;
        images are letterboxed to the detector's resolution and detections are
        mapped back before returning.
        """
        check_is_fitted(self, "net_")
        single = isinstance(images, np.ndarray) and images.ndim == 3
        if single:
            images = [images]
        cfg = self._inference_config(confidence_threshold, nms_iou_threshold, max_detections)

        results = []
        for image in images:
            image = check_rgb_image(image)
            boxed, transform = letterbox_image(image, self.config_.input_resolution)
            detections = infer(self.net_, boxed, cfg)
            mapped = []
            for det in detections:
                x0, y0, x1, y1 = transform.invert_box(det.box)
                if x1 - x0 < 1e-3 or y1 - y0 < 1e-3:
                    continue
                mapped.append(Detection((x0, y0, x1, y1), det.class_id, det.score))
            results.append(mapped)
        return results[0] if single else results

    def score(self, samples, y=None) -> float:
        """Mean AP50 (percent) over a list of AnnotatedSample."""
        check_is_fitted(self, "net_")
        detections = {
            s.key: self.predict(load_image(s), confidence_threshold=0.05) for s in samples
        }
        ground_truth = {s.key: s.boxes for s in samples}
        return evaluate(detections, ground_truth).ap50

    # ------------------------------------------------------------------
    def parameter_counts(self):
        check_is_fitted(self, "net_")
        return count_params(self.net_)

    def save(self, path) -> None:
        check_is_fitted(self, "net_")
        checkpoint_io.save_checkpoint(self.net_, self.class_names_, path)

    @classmethod
    def load(cls, path) -> "PyramidDetector":
        """Restore a fitted detector from a checkpoint file."""
        net, config, class_names = checkpoint_io.load_checkpoint(path)
        estimator = cls(config=config, class_names=class_names)
        estimator.net_ = net
        estimator.config_ = config
        estimator.class_names_ = class_names
        estimator.history_ = []
        return estimator
