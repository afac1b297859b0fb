import torch
import torch.nn as nn

from src.networks.layout import FeatureNormalizer, downsampled_side, square_side, to_square
from src.services.utils.exceptions import InputValidationError


def fuse_latents(z1: torch.Tensor, z2: torch.Tensor) -> torch.Tensor:
    """Hadamard fusion z_att = z1 * z2 (element-wise)."""
    if z1.shape != z2.shape:
        raise InputValidationError(
            "Latent vectors must have equal shapes",
            details={"z1": list(z1.shape), "z2": list(z2.shape)},
        )
    return z1 * z2


class ConvEncoder(nn.Module):
    """Three stride-2 conv layers over the 1-channel square layout, pooled to a latent vector."""

    def __init__(self, side: int, latent_dim: int, widths: tuple[int, int] = (64, 128)):
        super().__init__()
        self.side = side
        self.layers = nn.Sequential(
            nn.Conv2d(1, widths[0], kernel_size=3, stride=2, padding=1),
            nn.ELU(),
            nn.Conv2d(widths[0], widths[1], kernel_size=3, stride=2, padding=1),
            nn.ELU(),
            nn.Conv2d(widths[1], latent_dim, kernel_size=3, stride=2, padding=1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers(to_square(x, self.side)).mean(dim=(2, 3))


class ConvDecoder(nn.Module):
    """Mirror of the encoder: transposed conv to the bottleneck grid, then two upsample + conv layers."""

    def __init__(self, side: int, dim: int, latent_dim: int, widths: tuple[int, int] = (64, 128)):
        super().__init__()
        self.dim = dim
        s2 = downsampled_side(side, 2)
        s3 = downsampled_side(side, 3)
        self.layers = nn.Sequential(
            nn.ConvTranspose2d(latent_dim, widths[1], kernel_size=s3),
            nn.ELU(),
            nn.Upsample(size=(s2, s2), mode="nearest"),
            nn.Conv2d(widths[1], widths[0], kernel_size=3, padding=1),
            nn.ELU(),
            nn.Upsample(size=(side, side), mode="nearest"),
            nn.Conv2d(widths[0], 1, kernel_size=3, padding=1),
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        grid = self.layers(z[:, :, None, None])
        return grid.flatten(1)[:, : self.dim]


class DualEncoderModel(nn.Module):
    """E1 encodes the reference stack, E2 the suspicious one; D decodes their Hadamard fusion."""

    def __init__(self, input_dim: int, latent_dim: int, widths: tuple[int, int] = (64, 128)):
        super().__init__()
        self.input_dim = input_dim
        self.latent_dim = latent_dim
        side = square_side(input_dim)
        self.normalizer = FeatureNormalizer(input_dim)
        self.encoder_e1 = ConvEncoder(side, latent_dim, widths)
        self.encoder_e2 = ConvEncoder(side, latent_dim, widths)
        self.decoder = ConvDecoder(side, input_dim, latent_dim, widths)

    def encode(self, x1: torch.Tensor, x2: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.encoder_e1(self.normalizer(x1)), self.encoder_e2(self.normalizer(x2))

    def forward(self, x1: torch.Tensor, x2: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns (standardized x1, standardized x2, reconstruction x_hat)."""
        n1, n2 = self.normalizer(x1), self.normalizer(x2)
        z_att = fuse_latents(self.encoder_e1(n1), self.encoder_e2(n2))
        return n1, n2, self.decoder(z_att)
