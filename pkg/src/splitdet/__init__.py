"""splitdet: scalable pyramid detectors with a redistributable depth budget.

The package follows the estimator/metrics/datasets layout: the detector is an
sklearn-style estimator (fit/predict/get_params), image enhancement ships as
transformers plus plain functions, and evaluation/benchmarking are function
modules.
"""

from .detector import PyramidDetector
from .enhance import EnhancementSpec, brighten_constant, darken, enhance
from .metrics import EvalResult, evaluate, evaluate_bruteforce, iou
from .scaling import ArchitectureConfig, ScalingSpec, build_config, depths, reduced_config
from .structures import Detection, GroundTruthBox

__version__ = "0.1.0"

__all__ = [
    "ArchitectureConfig",
    "Detection",
    "EnhancementSpec",
    "EvalResult",
    "GroundTruthBox",
    "PyramidDetector",
    "ScalingSpec",
    "brighten_constant",
    "build_config",
    "darken",
    "depths",
    "enhance",
    "evaluate",
    "evaluate_bruteforce",
    "iou",
    "reduced_config",
    "__version__",
]
