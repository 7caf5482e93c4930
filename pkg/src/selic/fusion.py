"""Semantic fusion: inject a text embedding into the visual latent.

The text vector is projected to the latent channel count, broadcast over the
spatial grid, combined with the latent (concat, add, or mul), then passed
through a small refinement block back to M channels. The pre-refinement
combined tensor is exposed separately so identity properties (add with a zero
vector, mul with a ones map) can be checked bitwise.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .config import FUSION_KINDS, ModelConfig
from .errors import ConfigError, ShapeError
from .layers import LRELU_SLOPE, conv1x1, conv3x3


class EmbeddingProjection(nn.Module):
    """Two-layer MLP mapping a text embedding to M channel gains.

    The hidden layer is bias-free so a zero embedding with a zeroed output
    bias maps to the exact zero vector.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        m = config.latent_channels
        self.fc1 = nn.Linear(config.text_embed_dim, m, bias=False)
        self.act = nn.LeakyReLU(LRELU_SLOPE)
        self.fc2 = nn.Linear(m, m)

    def forward(self, v):
        if v.shape[-1] != self.fc1.in_features:
            raise ShapeError(
                f"embedding length {v.shape[-1]} != text_embed_dim {self.fc1.in_features}"
            )
        return self.fc2(self.act(self.fc1(v)))


def broadcast_semantic(projected: torch.Tensor, h: int, w: int) -> torch.Tensor:
    """Tile a (B, M) projected vector to a (B, M, h, w) feature map."""
    if projected.ndim != 2:
        raise ShapeError(f"projected embedding must be (B, M), got {tuple(projected.shape)}")
    return projected[:, :, None, None].expand(-1, -1, h, w)


class FusionModule(nn.Module):
    """Combine latent and semantic map, then refine back to M channels."""

    def __init__(self, config: ModelConfig, kind: str):
        super().__init__()
        if kind not in FUSION_KINDS:
            raise ConfigError(f"unknown fusion kind {kind!r}; expected one of {FUSION_KINDS}")
        self.kind = kind
        m = config.latent_channels
        in_ch = 2 * m if kind == "concat" else m
        self.project = EmbeddingProjection(config)
        self.reduce = conv1x1(in_ch, m)
        self.act = nn.LeakyReLU(LRELU_SLOPE)
        self.conv = conv3x3(m, m)
        self.skip = conv1x1(in_ch, m)

    def combine(self, latent: torch.Tensor, semantic_map: torch.Tensor) -> torch.Tensor:
        """Pre-refinement combination; concat doubles the channel count."""
        if semantic_map.shape != latent.shape:
            raise ShapeError(
                f"semantic map {tuple(semantic_map.shape)} does not match "
                f"latent {tuple(latent.shape)}"
            )
        if self.kind == "concat":
            return torch.cat([latent, semantic_map], dim=1)
        if self.kind == "add":
            return latent + semantic_map
        return latent * semantic_map

    def refine(self, combined: torch.Tensor) -> torch.Tensor:
        out = self.act(self.reduce(combined))
        return self.conv(out) + self.skip(combined)

    def forward(self, latent: torch.Tensor, embedding: torch.Tensor) -> torch.Tensor:
        projected = self.project(embedding)
        semantic_map = broadcast_semantic(projected, latent.shape[-2], latent.shape[-1])
        return self.refine(self.combine(latent, semantic_map))
