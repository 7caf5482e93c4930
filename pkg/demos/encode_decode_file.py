#!/usr/bin/env python3
"""File-level round trip: train briefly, write a .selic bitstream next to
a PNG, decode it back, and inspect the container fields.

Everything lands in demos/out/.
"""

from pathlib import Path

import numpy as np

from selic import (
    load_image,
    make_captioner,
    make_embedder,
    overfit,
    parse_bitstream,
    psnr,
    save_image,
    tiny_config,
)
from selic.codec import decode_image, encode_image

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

rng = np.random.default_rng(3)
yy, xx = np.mgrid[0:192, 0:256].astype(np.float32)
image = np.stack(
    [xx / 256, yy / 192, 0.5 + 0.5 * np.sin(xx / 9) * np.cos(yy / 13)], axis=-1
)
image[40:90, 60:140] = (0.9, 0.2, 0.1)
image = np.clip(image + rng.normal(0, 0.01, image.shape), 0, 1).astype(np.float32)

png = out_dir / "scene.png"
save_image(image, png)
image = load_image(png)  # round through 8-bit like a real input file

config = tiny_config(lambda_value=0.03)
captioner = make_captioner("stub")
embedder = make_embedder("stub", config.text_embed_dim)
embedding = embedder.embed(captioner.caption(image))

model, _ = overfit([image], config, 0.03, steps=250, embeddings=[embedding])

result = encode_image(image, model, embedding=embedding)
stream = out_dir / "scene.selic"
stream.write_bytes(result.data)

pixels = image.shape[0] * image.shape[1]
print(f"wrote {stream} ({len(result.data)} bytes, {8 * len(result.data) / pixels:.3f} bpp)")
print(f"estimated bits: y {result.stats.estimate_bits_y:.0f}, z {result.stats.estimate_bits_z:.0f}")
print(f"actual payload: {result.stats.payload_bits} bits + {result.stats.header_bits} header")

# Decoding needs only the bitstream and the model weights. No captioner,
# no embedder: the fused latent was already quantized on the encode side.
recon = decode_image(stream.read_bytes(), model)
save_image(recon, out_dir / "scene_decoded.png")
print(f"psnr after round trip: {psnr(image, recon):.2f} dB")

header, z_bytes, slice_bytes = parse_bitstream(result.data, model.config.num_slices)
print(
    f"container: {header.orig_w}x{header.orig_h} pixels "
    f"(padded {header.padded_w}x{header.padded_h}), "
    f"hyperprior {len(z_bytes)} bytes, "
    f"slices {[len(b) for b in slice_bytes]} bytes"
)
