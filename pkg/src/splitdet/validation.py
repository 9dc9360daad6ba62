"""Input validation helpers, sklearn-utils style."""

import numpy as np


def check_rgb_image(image, name: str = "image") -> np.ndarray:
    """Validate an 8-bit RGB image array of shape (H, W, 3)."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValueError(f"{name} must be uint8, got {arr.dtype}")
    return arr


def check_offset(value: int, name: str = "offset") -> int:
    """Validate an 8-bit intensity offset in [0, 255]."""
    if value != int(value) or not 0 <= int(value) <= 255:
        raise ValueError(f"{name} must be an integer in [0, 255], got {value}")
    return int(value)


def check_seed(seed) -> int:
    """Validate a 64-bit non-negative integer seed."""
    if seed != int(seed) or not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be a 64-bit non-negative integer, got {seed}")
    return int(seed)
