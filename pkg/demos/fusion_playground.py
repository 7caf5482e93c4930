#!/usr/bin/env python3
"""How the caption embedding reaches the latent: project it to per-channel
gains, tile spatially, combine with the image latent, refine. The combine
step has simple algebraic identities worth seeing once."""

import numpy as np
import torch

from selic import make_captioner, make_embedder, tiny_config
from selic.fusion import FusionModule, broadcast_semantic

config = tiny_config()
captioner = make_captioner("stub")
embedder = make_embedder("stub", config.text_embed_dim)

image = np.random.default_rng(0).random((64, 64, 3)).astype(np.float32)
caption = captioner.caption(image)
vec = torch.from_numpy(embedder.embed(caption)).unsqueeze(0)
print(f"caption: {caption!r}")
print(f"embedding: {tuple(vec.shape)}, norm {vec.norm():.3f}")

latent = torch.randn(1, config.latent_channels, 4, 4)

with torch.no_grad():
    for kind in ("add", "mul", "concat"):
        fusion = FusionModule(config, kind)
        projected = fusion.project(vec)
        sem_map = broadcast_semantic(projected, latent.shape[-2], latent.shape[-1])
        fused = fusion.combine(latent, sem_map)
        print(f"\n{kind}: gains {tuple(projected.shape)} -> combined {tuple(fused.shape)}")

        # Neutral semantic inputs leave the latent untouched at this tap.
        if kind == "add":
            neutral = fusion.combine(latent, torch.zeros_like(sem_map))
            print("  zeros add nothing:", bool(torch.equal(neutral, latent)))
        elif kind == "mul":
            neutral = fusion.combine(latent, torch.ones_like(sem_map))
            print("  ones change nothing:", bool(torch.equal(neutral, latent)))
        else:
            halves = fused.chunk(2, dim=1)
            print("  concat keeps both halves:", bool(torch.equal(halves[0], latent)))

        out = fusion(latent, vec)
        print(f"  full fusion (with refinement): {tuple(out.shape)}")
