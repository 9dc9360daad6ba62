"""Bidirectional feature fusion layer.

One layer runs a top-down pathway (high pyramid levels refine lower ones)
followed by an extra bottom-up pathway, with learned fast-normalized weights
on every fusion node.  Layers are repeatable blocks: stacking more of them is
the depth knob the scaling tables control.
"""

import torch.nn.functional as F
from torch import nn

from .layers import FusionNode


def upsample(x):
    return F.interpolate(x, scale_factor=2, mode="nearest")


def downsample(x):
    return F.max_pool2d(x, 3, stride=2, padding=1)


class BiFPNLayer(nn.Module):
    """One bidirectional pass over a 5-level pyramid (P3..P7)."""

    def __init__(self, channels: int):
        super().__init__()
        # Top-down nodes for P6, P5, P4 and the P3 output node: 2 inputs each.
        self.td6 = FusionNode(2, channels)
        self.td5 = FusionNode(2, channels)
        self.td4 = FusionNode(2, channels)
        self.out3 = FusionNode(2, channels)
        # Bottom-up output nodes: P4..P6 fuse (input, top-down, below); P7 two.
        self.out4 = FusionNode(3, channels)
        self.out5 = FusionNode(3, channels)
        self.out6 = FusionNode(3, channels)
        self.out7 = FusionNode(2, channels)

    def forward(self, features: list) -> list:
        p3, p4, p5, p6, p7 = features
        td6 = self.td6([p6, upsample(p7)])
        td5 = self.td5([p5, upsample(td6)])
        td4 = self.td4([p4, upsample(td5)])
        o3 = self.out3([p3, upsample(td4)])
        o4 = self.out4([p4, td4, downsample(o3)])
        o5 = self.out5([p5, td5, downsample(o4)])
        o6 = self.out6([p6, td6, downsample(o5)])
        o7 = self.out7([p7, downsample(o6)])
        return [o3, o4, o5, o6, o7]


class BiFPNStack(nn.Module):
    def __init__(self, channels: int, depth: int):
        super().__init__()
        if depth < 1:
            raise ValueError(f"fusion stack depth must be at least 1, got {depth}")
        self.layers = nn.ModuleList(BiFPNLayer(channels) for _ in range(depth))

    def forward(self, features: list) -> list:
        for layer in self.layers:
            features = layer(features)
        return features
