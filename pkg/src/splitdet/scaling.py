"""Compound-scaling calculator for the detector family.

A detector variant is identified by a scaling coefficient ``phi`` plus a depth
split: how the fixed layer budget of the phi=0 parent is distributed between
bidirectional fusion layers and the class/box subnet convolutions.  Resolving a
:class:`ScalingSpec` yields an :class:`ArchitectureConfig`, the five numbers a
detector is built from.
"""

from dataclasses import dataclass

MAX_PHI = 7

# Channel widths of the D0-D3 family. The geometric rule 64 * 1.35**phi gives
# 86.4 and 116.64 for phi=1,2 while the family ships 88 and 112, and no single
# rounding rule reconciles both; pin the shipped values and fall back to
# nearest-multiple-of-8 extrapolation above phi=3.
_PINNED_WIDTHS = {0: 64, 1: 88, 2: 112, 3: 160}

# The three studied depth splits of the phi=0 parent; fusion + head depth = 6.
PARENT_DEPTH_BUDGET = 6
STUDIED_SPLITS = ("1-5", "3-3", "5-1")

_CONFIG_KEYS = (
    "input_resolution",
    "backbone_tier",
    "fused_channels",
    "bifpn_depth",
    "head_depth",
)


def _check_phi(phi: int) -> int:
    if phi != int(phi) or phi < 0:
        raise ValueError(f"scaling coefficient must be a non-negative integer, got {phi}")
    return int(phi)


@dataclass(frozen=True)
class ScalingSpec:
    """Scaling coefficient plus the parent's fusion/head depth split."""

    phi: int
    base_fusion_depth: int
    base_head_depth: int

    def __post_init__(self):
        _check_phi(self.phi)
        if self.phi > MAX_PHI:
            raise ValueError(f"phi must be in 0..{MAX_PHI}, got {self.phi}")
        if self.base_fusion_depth < 1 or self.base_head_depth < 1:
            raise ValueError(
                "depth split must have at least one fusion layer and one head "
                f"convolution, got ({self.base_fusion_depth}, {self.base_head_depth})"
            )

    @classmethod
    def from_split(cls, phi: int, split: str) -> "ScalingSpec":
        """Build a spec from a 'F-H' split string, enforcing the parent budget of 6."""
        try:
            fusion, head = (int(part) for part in split.split("-"))
        except ValueError:
            raise ValueError(f"split must look like '1-5', got {split!r}") from None
        if fusion + head != PARENT_DEPTH_BUDGET:
            raise ValueError(
                f"studied splits keep fusion + head = {PARENT_DEPTH_BUDGET}, "
                f"got {fusion} + {head}"
            )
        return cls(phi, fusion, head)

    @property
    def split(self) -> str:
        return f"{self.base_fusion_depth}-{self.base_head_depth}"

    @property
    def name(self) -> str:
        return f"D{self.phi}({self.split})"


@dataclass(frozen=True)
class ArchitectureConfig:
    """Resolved architecture: one row of the scaling tables."""

    input_resolution: int
    backbone_tier: int
    fused_channels: int
    bifpn_depth: int
    head_depth: int

    def __post_init__(self):
        # The pyramid spans strides 8..128, so the input must divide by 128.
        if self.input_resolution <= 0 or self.input_resolution % 128 != 0:
            raise ValueError(
                f"input_resolution must be a positive multiple of 128, got {self.input_resolution}"
            )
        if self.backbone_tier < 0:
            raise ValueError(f"backbone_tier must be non-negative, got {self.backbone_tier}")
        if self.fused_channels <= 0 or self.fused_channels % 8 != 0:
            raise ValueError(
                f"fused_channels must be a positive multiple of 8, got {self.fused_channels}"
            )
        if self.bifpn_depth < 1 or self.head_depth < 1:
            raise ValueError("bifpn_depth and head_depth must be at least 1")

    def to_kv(self) -> str:
        """Serialize to the flat key=value record consumed by the detector and CLI."""
        return "\n".join(f"{key}={getattr(self, key)}" for key in _CONFIG_KEYS) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> "ArchitectureConfig":
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = int(value.strip())
        missing = [key for key in _CONFIG_KEYS if key not in fields]
        if missing:
            raise ValueError(f"config record is missing keys: {missing}")
        return cls(**{key: fields[key] for key in _CONFIG_KEYS})


def raw_width(phi: int) -> float:
    """Unrounded fused channel count, 64 * 1.35**phi."""
    return 64.0 * 1.35 ** _check_phi(phi)


def snapped_width(phi: int) -> int:
    """Fused channel count as shipped: pinned for phi<=3, snapped to 8 above."""
    phi = _check_phi(phi)
    if phi in _PINNED_WIDTHS:
        return _PINNED_WIDTHS[phi]
    # Extrapolation: nearest multiple of 8, ties rounding up.
    return int((raw_width(phi) + 4.0) // 8.0) * 8


def resolution(phi: int) -> int:
    """Input image side, 512 + 128 * phi."""
    return 512 + 128 * _check_phi(phi)


def depths(spec: ScalingSpec) -> tuple[int, int]:
    """(fusion layer count, head convolution count) for a scaling spec.

    Fusion layers grow with every step of phi; head depth grows every third
    step, matching the published family's growth pattern.
    """
    return spec.base_fusion_depth + spec.phi, spec.base_head_depth + spec.phi // 3


def build_config(spec: ScalingSpec) -> ArchitectureConfig:
    """Resolve a scaling spec into a full-size architecture row."""
    bifpn_depth, head_depth = depths(spec)
    return ArchitectureConfig(
        input_resolution=resolution(spec.phi),
        backbone_tier=spec.phi,
        fused_channels=snapped_width(spec.phi),
        bifpn_depth=bifpn_depth,
        head_depth=head_depth,
    )


def reduced_config(
    spec: ScalingSpec, base_resolution: int = 128, base_width: int = 32
) -> ArchitectureConfig:
    """Desk-scale analogue of :func:`build_config`.

    Keeps the depth split and tier of the full-size family but shrinks
    resolution and width so variants train and benchmark on a CPU.  Resolution
    grows linearly in phi (stays a multiple of 128); width follows the same
    geometric rule as the full-size family, snapped to a multiple of 8.
    """
    if base_resolution <= 0 or base_resolution % 128 != 0:
        raise ValueError(f"base_resolution must be a positive multiple of 128, got {base_resolution}")
    if base_width <= 0 or base_width % 8 != 0:
        raise ValueError(f"base_width must be a positive multiple of 8, got {base_width}")
    bifpn_depth, head_depth = depths(spec)
    width = int((base_width * 1.35 ** spec.phi + 4.0) // 8.0) * 8
    return ArchitectureConfig(
        input_resolution=base_resolution * (1 + spec.phi),
        backbone_tier=spec.phi,
        fused_channels=width,
        bifpn_depth=bifpn_depth,
        head_depth=head_depth,
    )
