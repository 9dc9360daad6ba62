"""Backbone stand-in: a strided convolutional pyramid.

Not a replica of any classification network; just a stack of stride-2 conv
blocks whose channel widths grow with the backbone tier, emitting 5 feature
levels at strides 8 through 128.
"""

from torch import nn

from .layers import group_norm

# Tier t widens every stage: stage widths are multiples of (16 + 8t).
TIER_BASE_WIDTH = 16
TIER_WIDTH_STEP = 8


def tier_width(tier: int) -> int:
    return TIER_BASE_WIDTH + TIER_WIDTH_STEP * tier


class ConvDownBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 3, stride=2, padding=1, bias=False)
        self.norm = group_norm(out_channels)
        self.act = nn.SiLU()

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


class PyramidBackbone(nn.Module):
    """7 stride-2 blocks; features from blocks 3..7 are the C3..C7 pyramid."""

    def __init__(self, tier: int):
        super().__init__()
        if tier < 0:
            raise ValueError(f"backbone tier must be non-negative, got {tier}")
        width = tier_width(tier)
        widths = [width, 2 * width, 4 * width, 4 * width, 4 * width, 4 * width, 4 * width]
        blocks = []
        in_channels = 3
        for out_channels in widths:
            blocks.append(ConvDownBlock(in_channels, out_channels))
            in_channels = out_channels
        self.blocks = nn.ModuleList(blocks)
        # Channel count of each emitted level C3..C7.
        self.feature_channels = tuple(widths[2:])

    def forward(self, x) -> list:
        features = []
        for index, block in enumerate(self.blocks):
            x = block(x)
            if index >= 2:
                features.append(x)
        return features
