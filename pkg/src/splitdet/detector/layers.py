"""Building-block layers: separable convs and fast normalized feature fusion."""

import torch
from torch import nn

FUSION_EPS = 1e-4
_GN_GROUPS = 8


def group_norm(channels: int) -> nn.GroupNorm:
    # Channel counts are multiples of 8 throughout, so 8 groups always divide.
    return nn.GroupNorm(_GN_GROUPS, channels)


class SeparableConvBlock(nn.Module):
    """Depthwise 3x3 + pointwise 1x1 convolution, optionally norm + SiLU."""

    def __init__(self, in_channels: int, out_channels: int, norm_act: bool = True):
        super().__init__()
        self.depthwise = nn.Conv2d(
            in_channels, in_channels, 3, padding=1, groups=in_channels, bias=False
        )
        self.pointwise = nn.Conv2d(in_channels, out_channels, 1, bias=True)
        self.norm = group_norm(out_channels) if norm_act else None
        self.act = nn.SiLU() if norm_act else None

    def forward(self, x):
        x = self.pointwise(self.depthwise(x))
        if self.norm is not None:
            x = self.act(self.norm(x))
        return x


def fast_normalized_weights(raw_weights: torch.Tensor, eps: float = FUSION_EPS) -> torch.Tensor:
    """Clamp raw edge weights at zero and normalize them to (almost) sum to 1."""
    clamped = torch.relu(raw_weights)
    return clamped / (clamped.sum() + eps)


def fuse_features(inputs: list, raw_weights: torch.Tensor, eps: float = FUSION_EPS) -> torch.Tensor:
    """Weighted combination of same-shape feature maps with normalized weights."""
    if len(inputs) == 0:
        raise ValueError("fusion needs at least one input feature map")
    if len(inputs) != raw_weights.shape[0]:
        raise ValueError(f"{len(inputs)} inputs but {raw_weights.shape[0]} weights")
    weights = fast_normalized_weights(raw_weights, eps)
    out = weights[0] * inputs[0]
    for i in range(1, len(inputs)):
        out = out + weights[i] * inputs[i]
    return out


class FusionNode(nn.Module):
    """Learned fast-normalized fusion followed by a separable conv block.

    The raw per-edge weights are learnable and start at 1 (uniform mixing).
    """

    def __init__(self, num_inputs: int, channels: int):
        super().__init__()
        self.raw_weights = nn.Parameter(torch.ones(num_inputs))
        self.conv = SeparableConvBlock(channels, channels)

    def fused(self, inputs: list) -> torch.Tensor:
        """The normalized weighted sum, before the convolution."""
        return fuse_features(inputs, self.raw_weights)

    def forward(self, inputs: list) -> torch.Tensor:
        return self.conv(self.fused(inputs))
