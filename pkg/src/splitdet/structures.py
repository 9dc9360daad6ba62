"""Box-level data structures used by the detector, datasets and metrics."""

from dataclasses import dataclass


def check_box(box):
    """Validate an (x_min, y_min, x_max, y_max) box; returns it as a float tuple."""
    if len(box) != 4:
        raise ValueError(f"box must have 4 coordinates, got {len(box)}")
    x_min, y_min, x_max, y_max = (float(v) for v in box)
    if not (x_min < x_max and y_min < y_max):
        raise ValueError(f"degenerate box {(x_min, y_min, x_max, y_max)}")
    return (x_min, y_min, x_max, y_max)


@dataclass(frozen=True)
class GroundTruthBox:
    """A labelled axis-aligned box in pixel coordinates."""

    box: tuple
    class_id: int

    def __post_init__(self):
        object.__setattr__(self, "box", check_box(self.box))
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")


@dataclass(frozen=True)
class Detection:
    """A scored, labelled axis-aligned box in pixel coordinates."""

    box: tuple
    class_id: int
    score: float

    def __post_init__(self):
        object.__setattr__(self, "box", check_box(self.box))
        if self.class_id < 0:
            raise ValueError(f"class_id must be non-negative, got {self.class_id}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
