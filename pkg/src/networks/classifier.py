import torch
import torch.nn as nn

from src.networks.layout import FeatureNormalizer, downsampled_side, square_side, to_square

PROBABILITY_EPS = 1e-7
MIN_INPUT_DIM = 16


class StyleFeatureClassifier(nn.Module):
    """
    Pair classifier over stacked style features.

    Both stacks are standardized and passed through a learnable per-dimension
    gate shared by reference and suspicious inputs (the style representation
    the identity loss acts on), laid out as a 2-channel square (reference
    channel, suspicious channel), then four conv blocks and a sigmoid head.
    """

    def __init__(self, input_dim: int, widths: tuple[int, ...] = (32, 64, 128, 128)):
        super().__init__()
        self.input_dim = input_dim
        self.side = square_side(input_dim)
        self.normalizer = FeatureNormalizer(input_dim)
        self.gate = nn.Parameter(torch.ones(input_dim))

        blocks = []
        channels = 2
        for width in widths:
            blocks += [nn.Conv2d(channels, width, kernel_size=3, stride=2, padding=1), nn.LeakyReLU(0.1)]
            channels = width
        self.features = nn.Sequential(*blocks)
        out_side = downsampled_side(self.side, len(widths))
        self.head = nn.Linear(channels * out_side * out_side, 1)

    def represent(self, stacks: torch.Tensor) -> torch.Tensor:
        return self.normalizer(stacks) * self.gate

    def logits_from_representation(self, ref: torch.Tensor, sus: torch.Tensor) -> torch.Tensor:
        layout = torch.cat([to_square(ref, self.side), to_square(sus, self.side)], dim=1)
        return self.head(self.features(layout).flatten(1)).squeeze(-1)

    def probability(self, logits: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(logits).clamp(PROBABILITY_EPS, 1 - PROBABILITY_EPS)

    def forward(self, ref: torch.Tensor, sus: torch.Tensor) -> torch.Tensor:
        """Probability that each pair is real-real."""
        return self.probability(self.logits_from_representation(self.represent(ref), self.represent(sus)))
