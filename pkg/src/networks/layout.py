import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def square_side(dim: int) -> int:
    """Smallest side s with s * s >= dim."""
    return math.isqrt(dim - 1) + 1 if dim > 0 else 1


def to_square(x: torch.Tensor, side: int) -> torch.Tensor:
    """(N, D) -> (N, 1, side, side), zero padded at the end."""
    n, dim = x.shape
    padded = F.pad(x, (0, side * side - dim))
    return padded.view(n, 1, side, side)


def downsampled_side(side: int, blocks: int) -> int:
    """Spatial side after ``blocks`` stride-2, padding-1, kernel-3 convolutions."""
    for _ in range(blocks):
        side = (side + 1) // 2
    return side


STANDARDIZED_LIMIT = 1e6


class FeatureNormalizer(nn.Module):
    """
    Per-dimension standardization with statistics fitted on training stacks.

    Standardized values are clamped to +-``limit`` so any finite input (even
    one that overflows float32) maps to finite network activations.
    """

    def __init__(self, dim: int, min_std: float = 1e-6, limit: float = STANDARDIZED_LIMIT):
        super().__init__()
        self.min_std = min_std
        self.limit = limit
        self.register_buffer("mean", torch.zeros(dim))
        self.register_buffer("std", torch.ones(dim))

    @torch.no_grad()
    def fit(self, stacks: torch.Tensor) -> "FeatureNormalizer":
        self.mean.copy_(stacks.mean(dim=0))
        self.std.copy_(stacks.std(dim=0, unbiased=False).clamp_min(self.min_std))
        return self

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return ((x - self.mean) / self.std).clamp(-self.limit, self.limit)
