"""Detector network assembly and parameter accounting."""

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..exceptions import ConfigurationError
from ..scaling import ArchitectureConfig
from .anchors import ANCHORS_PER_CELL, generate_anchors
from .backbone import PyramidBackbone
from .bifpn import BiFPNStack
from .layers import SeparableConvBlock, group_norm

# Bias of the class output starts at this foreground probability so the focal
# loss is not swamped by background cells early in training.
CLASS_PRIOR_PROB = 0.01


class PredictionHead(nn.Module):
    """Tower of separable convs shared across pyramid levels, plus output conv."""

    def __init__(self, channels: int, depth: int, outputs_per_anchor: int,
                 prior_prob: float | None = None):
        super().__init__()
        self.tower = nn.ModuleList(SeparableConvBlock(channels, channels) for _ in range(depth))
        self.output = SeparableConvBlock(
            channels, ANCHORS_PER_CELL * outputs_per_anchor, norm_act=False
        )
        if prior_prob is not None:
            nn.init.constant_(
                self.output.pointwise.bias, -math.log((1.0 - prior_prob) / prior_prob)
            )
        else:
            nn.init.zeros_(self.output.pointwise.bias)

    def forward(self, feature):
        for block in self.tower:
            feature = block(feature)
        return self.output(feature)


class DetectorNet(nn.Module):
    """Pyramid backbone + lateral projections + fusion stack + two heads."""

    def __init__(self, config: ArchitectureConfig, num_classes: int):
        super().__init__()
        if num_classes < 1:
            raise ConfigurationError(f"num_classes must be at least 1, got {num_classes}")
        if config.input_resolution % 128 != 0:
            raise ConfigurationError(
                f"input resolution {config.input_resolution} is not divisible by 128"
            )
        self.config = config
        self.num_classes = num_classes

        channels = config.fused_channels
        self.backbone = PyramidBackbone(config.backbone_tier)
        self.laterals = nn.ModuleList(
            nn.Sequential(nn.Conv2d(c, channels, 1, bias=False), group_norm(channels))
            for c in self.backbone.feature_channels
        )
        self.fusion = BiFPNStack(channels, config.bifpn_depth)
        self.class_head = PredictionHead(
            channels, config.head_depth, num_classes, prior_prob=CLASS_PRIOR_PROB
        )
        self.box_head = PredictionHead(channels, config.head_depth, 4)
        self._anchors = None

    @property
    def anchors(self) -> np.ndarray:
        if self._anchors is None:
            self._anchors = generate_anchors(self.config)
        return self._anchors

    def pyramid(self, images: torch.Tensor) -> list:
        """The fused feature pyramid (P3..P7), each level at fused_channels."""
        features = self.backbone(images)
        features = [lateral(f) for lateral, f in zip(self.laterals, features)]
        return self.fusion(features)

    def forward(self, images: torch.Tensor):
        """Per-level raw head outputs: (class maps, box maps)."""
        features = self.pyramid(images)
        class_maps = [self.class_head(f) for f in features]
        box_maps = [self.box_head(f) for f in features]
        return class_maps, box_maps

    def predict_flat(self, images: torch.Tensor):
        """Head outputs flattened to (B, A, num_classes) and (B, A, 4).

        Flattening order is (level, row, column, anchor), matching
        :func:`generate_anchors`.
        """
        class_maps, box_maps = self.forward(images)
        return (
            _flatten_maps(class_maps, self.num_classes),
            _flatten_maps(box_maps, 4),
        )


def _flatten_maps(level_maps: list, channels_per_anchor: int) -> torch.Tensor:
    flat = []
    for level_map in level_maps:
        batch, _, height, width = level_map.shape
        level_map = level_map.view(batch, ANCHORS_PER_CELL, channels_per_anchor, height, width)
        level_map = level_map.permute(0, 3, 4, 1, 2)
        flat.append(level_map.reshape(batch, height * width * ANCHORS_PER_CELL, channels_per_anchor))
    return torch.cat(flat, dim=1)


def build_detector(config: ArchitectureConfig, num_classes: int) -> DetectorNet:
    """Construct a trainable detector realizing an architecture config."""
    return DetectorNet(config, num_classes)


@dataclass(frozen=True)
class ParamCount:
    backbone: int
    fusion: int
    heads: int

    @property
    def total(self) -> int:
        return self.backbone + self.fusion + self.heads


def count_params(net: DetectorNet) -> ParamCount:
    """Exact learnable-scalar counts, broken down by stage.

    Lateral projections count toward fusion since they exist to feed it.
    """
    def count(module):
        return sum(p.numel() for p in module.parameters())

    return ParamCount(
        backbone=count(net.backbone),
        fusion=count(net.laterals) + count(net.fusion),
        heads=count(net.class_head) + count(net.box_head),
    )
