"""Main analysis and synthesis transforms.

The analysis path maps a padded (H, W, 3) image to an M x H/16 x W/16 latent
through four stride-2 stages, each a downsampling convolution followed by a
residual block; the synthesis path mirrors it with transposed convolutions.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .config import Y_DOWNSAMPLE, ModelConfig
from .errors import ShapeError
from .layers import ResidualBlock, conv3x3, tconv3x3


class _DownStage(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.down = conv3x3(in_ch, out_ch, stride=2)
        self.res = ResidualBlock(out_ch)

    def forward(self, x):
        return self.res(self.down(x))


class _UpStage(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.res = ResidualBlock(in_ch)
        self.up = tconv3x3(in_ch, out_ch)

    def forward(self, x):
        return self.up(self.res(x))


class AnalysisTransform(nn.Module):
    """g_a3: image (B, 3, H, W) -> visual latent (B, M, H/16, W/16)."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        n, m = config.n_filters, config.latent_channels
        self.stages = nn.ModuleList(
            [_DownStage(3, n), _DownStage(n, n), _DownStage(n, n), _DownStage(n, m)]
        )

    def forward(self, x):
        for stage in self.stages:
            x = stage(x)
        return x


class SynthesisTransform(nn.Module):
    """g_s: latent (B, M, h, w) -> raw reconstruction (B, 3, 16h, 16w).

    The output is left unclamped so training gradients survive; `synthesize`
    applies the [0, 1] clamp on the public image surface.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        n, m = config.n_filters, config.latent_channels
        self.stages = nn.ModuleList(
            [_UpStage(m, n), _UpStage(n, n), _UpStage(n, n), _UpStage(n, 3)]
        )

    def forward(self, x):
        for stage in self.stages:
            x = stage(x)
        return x


def image_to_tensor(image: np.ndarray) -> torch.Tensor:
    """(H, W, 3) float array in [0,1] -> (1, 3, H, W) float32 tensor."""
    return torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32)).permute(2, 0, 1)[None]


def tensor_to_image(x: torch.Tensor) -> np.ndarray:
    """(1, 3, H, W) tensor -> clamped (H, W, 3) float32 array."""
    return x.detach().clamp(0.0, 1.0)[0].permute(1, 2, 0).cpu().numpy()


def analyze(image: np.ndarray, transform: AnalysisTransform) -> torch.Tensor:
    """Run g_a3 on an image whose dims are multiples of 64; returns (M, h, w)."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3) image, got shape {image.shape}")
    h, w = image.shape[:2]
    if h % 64 != 0 or w % 64 != 0:
        raise ShapeError(f"image dims must be multiples of 64, got {h}x{w} (pad first)")
    with torch.no_grad():
        return transform(image_to_tensor(image))[0]


def synthesize(latent: torch.Tensor, transform: SynthesisTransform) -> np.ndarray:
    """Run g_s on an (M, h, w) latent; returns a clamped (16h, 16w, 3) image."""
    m = transform.stages[0].res.conv1.in_channels
    if latent.ndim != 3 or latent.shape[0] != m:
        raise ShapeError(f"expected latent of shape ({m}, h, w), got {tuple(latent.shape)}")
    with torch.no_grad():
        out = transform(latent[None])
    expected = (latent.shape[1] * Y_DOWNSAMPLE, latent.shape[2] * Y_DOWNSAMPLE)
    assert out.shape[2:] == expected
    return tensor_to_image(out)
