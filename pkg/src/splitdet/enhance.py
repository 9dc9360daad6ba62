"""Low-light degradation and enhancement with per-image latency accounting.

Darkening subtracts a constant from every pixel (clamped at 0) to simulate
low-light capture; enhancement either does nothing, adds a constant back
(clamped at 255), or shells out to an external enhancer binary.  Every
strategy reports how long the enhancement itself took, since that time
competes with detector latency in the end-to-end budget.
"""

import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import EnhancementError
from .validation import check_offset, check_rgb_image

STRATEGIES = ("none", "constant_c", "external")


@dataclass(frozen=True)
class EnhancementSpec:
    """Darkening offset plus the enhancement strategy applied afterwards."""

    darken_offset: int = 120
    strategy: str = "none"
    c: int = 0
    external_command: str | tuple = ()

    def __post_init__(self):
        check_offset(self.darken_offset, "darken_offset")
        check_offset(self.c, "c")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.strategy == "external" and not self.external_command:
            raise ValueError("external strategy requires a nonempty external_command")

    @property
    def label(self) -> str:
        if self.strategy == "none":
            return "none"
        if self.strategy == "constant_c":
            return f"c={self.c}"
        return "external"

    def command_argv(self) -> list:
        if isinstance(self.external_command, str):
            return shlex.split(self.external_command)
        return list(self.external_command)


def darken(image: np.ndarray, offset: int) -> np.ndarray:
    """Subtract a constant from every channel value, clamping at 0."""
    image = check_rgb_image(image)
    check_offset(offset)
    return np.clip(image.astype(np.int16) - offset, 0, 255).astype(np.uint8)


def brighten_constant(image: np.ndarray, c: int) -> np.ndarray:
    """Add a constant to every channel value, clamping at 255."""
    image = check_rgb_image(image)
    check_offset(c, "c")
    return np.clip(image.astype(np.int16) + c, 0, 255).astype(np.uint8)


def _run_external(image: np.ndarray, spec: EnhancementSpec) -> np.ndarray:
    with tempfile.TemporaryDirectory(prefix="splitdet-enhance-") as tmp:
        in_path = Path(tmp) / "input.png"
        out_path = Path(tmp) / "output.png"
        Image.fromarray(image).save(in_path)
        argv = spec.command_argv() + [str(in_path), str(out_path)]
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=600)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise EnhancementError(f"external enhancer {argv[0]!r} failed to run: {exc}") from exc
        if proc.returncode != 0:
            raise EnhancementError(
                f"external enhancer exited with {proc.returncode}; stderr: {proc.stderr.strip()}"
            )
        if not out_path.exists():
            raise EnhancementError(
                f"external enhancer wrote no output file; stdout: {proc.stdout.strip()}"
            )
        with Image.open(out_path) as img:
            result = np.asarray(img.convert("RGB"))
    if result.shape != image.shape:
        raise EnhancementError(
            f"external enhancer changed image dimensions: {image.shape} -> {result.shape}"
        )
    return result


def enhance(image: np.ndarray, spec: EnhancementSpec):
    """Apply the spec's enhancement strategy; returns (image, latency_seconds).

    The in-process strategies time only the pixel operation; the external
    strategy necessarily includes process spawn and file I/O overhead.
    """
    image = check_rgb_image(image)
    if spec.strategy == "none":
        start = time.perf_counter()
        result = image
        latency = time.perf_counter() - start
    elif spec.strategy == "constant_c":
        start = time.perf_counter()
        result = brighten_constant(image, spec.c)
        latency = time.perf_counter() - start
    else:
        start = time.perf_counter()
        result = _run_external(image, spec)
        latency = time.perf_counter() - start
    return result, latency


class ConstantDarken(TransformerMixin, BaseEstimator):
    """Transformer that darkens a batch of images by a constant offset."""

    def __init__(self, offset: int = 120):
        self.offset = offset

    def fit(self, X, y=None):
        check_offset(self.offset)
        return self

    def transform(self, X):
        return [darken(image, self.offset) for image in X]


class ImageEnhancer(TransformerMixin, BaseEstimator):
    """Transformer applying an :class:`EnhancementSpec` to a batch of images."""

    def __init__(self, spec: EnhancementSpec = EnhancementSpec()):
        self.spec = spec

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return [enhance(image, self.spec)[0] for image in X]
