"""Bitstream container and the end-to-end encode/decode pipeline.

Container layout (all integers little-endian):

    offset  size  field
    0       4     magic "SELC"
    4       1     format version (1)
    5       1     config id: lambda preset index, 255 for a custom lambda
    6       1     fusion kind code (0 concat, 1 add, 2 mul, 3 none)
    7       4     original height
    11      4     original width
    15      4     padded height
    19      4     padded width
    23      4     z stream length in bytes
    27      4*S   per-slice stream lengths (S = num_slices from the model)
    27+4S   ...   z stream, then slice streams 0..S-1

The container carries no text: semantics are already fused into y, so
decoding needs only the bitstream and the model weights.

Encode and decode both derive slice parameters from the same quantized
inputs (z symbols, earlier slice symbols) through shared helpers, which is
what makes the round trip land on bit-identical latents.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import torch

from .autoencoder import image_to_tensor, tensor_to_image
from .config import (
    FUSION_KIND_CODES,
    PAD_MULTIPLE,
    ModelConfig,
    crop_to,
    pad_to_multiple,
    validate_image,
)
from .entropy import (
    cdf_table_for_scale_index,
    gaussian_likelihood,
    rate_bits,
    scale_to_index,
)
from .errors import ConfigError, DecodeError, EncodeError
from .model import SelicModel
from .semantic import describe

MAGIC = b"SELC"
BITSTREAM_VERSION = 1
_FIXED_HEADER = struct.Struct("<4sBBBIIIII")  # through z_len
_CODE_TO_KIND = {v: k for k, v in FUSION_KIND_CODES.items()}


@dataclass(frozen=True)
class BitstreamHeader:
    config_id: int
    fusion_kind: str
    orig_h: int
    orig_w: int
    padded_h: int
    padded_w: int
    version: int = BITSTREAM_VERSION


@dataclass(frozen=True)
class EncodeStats:
    """Rate accounting and audit info recorded while encoding."""

    estimate_bits_y: float
    estimate_bits_z: float
    payload_bits: int
    header_bits: int
    clipped_symbols: int
    caption: str | None = None

    @property
    def estimate_bits(self) -> float:
        return self.estimate_bits_y + self.estimate_bits_z

    @property
    def total_bits(self) -> int:
        return self.payload_bits + self.header_bits


@dataclass(frozen=True)
class EncodeResult:
    data: bytes
    header: BitstreamHeader
    stats: EncodeStats


def pack_bitstream(header: BitstreamHeader, z_bytes: bytes, slice_bytes: list[bytes]) -> bytes:
    fixed = _FIXED_HEADER.pack(
        MAGIC,
        header.version,
        header.config_id,
        FUSION_KIND_CODES[header.fusion_kind],
        header.orig_h,
        header.orig_w,
        header.padded_h,
        header.padded_w,
        len(z_bytes),
    )
    lens = struct.pack(f"<{len(slice_bytes)}I", *[len(s) for s in slice_bytes])
    return fixed + lens + z_bytes + b"".join(slice_bytes)


def parse_bitstream(data: bytes, num_slices: int) -> tuple[BitstreamHeader, bytes, list[bytes]]:
    if len(data) < _FIXED_HEADER.size + 4 * num_slices:
        raise DecodeError(f"bitstream truncated: {len(data)} bytes is shorter than the header")
    magic, version, config_id, kind_code, oh, ow, ph, pw, z_len = _FIXED_HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}; not a SELC bitstream")
    if version != BITSTREAM_VERSION:
        raise DecodeError(f"unsupported bitstream version {version}")
    if kind_code not in _CODE_TO_KIND:
        raise DecodeError(f"unknown fusion kind code {kind_code}")
    if ph % PAD_MULTIPLE or pw % PAD_MULTIPLE or oh > ph or ow > pw or oh == 0 or ow == 0:
        raise DecodeError(f"inconsistent dimensions in header: {oh}x{ow} padded to {ph}x{pw}")
    offset = _FIXED_HEADER.size
    slice_lens = struct.unpack_from(f"<{num_slices}I", data, offset)
    offset += 4 * num_slices
    expected = offset + z_len + sum(slice_lens)
    if len(data) != expected:
        raise DecodeError(f"bitstream length {len(data)} != header-implied {expected}")
    z_bytes = data[offset : offset + z_len]
    offset += z_len
    slices = []
    for n in slice_lens:
        slices.append(data[offset : offset + n])
        offset += n
    header = BitstreamHeader(
        config_id=config_id,
        fusion_kind=_CODE_TO_KIND[kind_code],
        orig_h=oh,
        orig_w=ow,
        padded_h=ph,
        padded_w=pw,
        version=version,
    )
    return header, z_bytes, slices


# ---------------------------------------------------------------------------
# Shared quantization helpers. Encode and decode MUST build z_hat and the
# slice reconstructions through these exact functions so both paths perform
# identical float operations.


def _z_symbols_to_tensor(symbols: np.ndarray, shape: tuple[int, ...]) -> torch.Tensor:
    return torch.from_numpy(symbols.astype(np.float32, copy=False).reshape(shape))


def _slice_symbols_to_tensor(
    symbols: np.ndarray, mu: torch.Tensor
) -> torch.Tensor:
    k = torch.from_numpy(symbols.astype(np.float32, copy=False).reshape(mu.shape))
    return k + mu


def _slice_tables(sigma: torch.Tensor):
    """Per-element coding tables for one slice: (tables, radii, indices)."""
    indices = scale_to_index(sigma.detach().cpu().numpy().ravel())
    tables = []
    radii = np.empty(indices.shape[0], dtype=np.int64)
    for i, idx in enumerate(indices):
        table, radius = cdf_table_for_scale_index(int(idx))
        tables.append(table)
        radii[i] = radius
    return tables, radii, indices


def _z_plan(model: SelicModel, z: torch.Tensor):
    """Round z, clamp to per-channel radii; returns symbols, tables, z_hat."""
    tables, radii = model.zprior.channel_tables()
    sym = torch.round(z[0]).detach().cpu().numpy().astype(np.int64)
    clip = radii.reshape(-1, 1, 1)
    clipped = int(np.count_nonzero((sym > clip) | (sym < -clip)))
    sym = np.clip(sym, -clip, clip)
    z_hat = _z_symbols_to_tensor(sym, (1,) + tuple(z.shape[1:]))
    return sym, tables, radii, z_hat, clipped


def _semantic_embedding(model, image, embedding, captioner, embedder, cache, image_id):
    if model.fusion_kind == "none":
        return None, None
    if embedding is not None:
        emb = np.asarray(embedding, dtype=np.float32)
        return torch.from_numpy(emb)[None], None
    if captioner is None or embedder is None:
        raise ConfigError(
            "model uses semantic fusion: pass an embedding or caption/embed backends"
        )
    caption, emb = describe(image, captioner, embedder, cache=cache, image_id=image_id)
    return torch.from_numpy(np.asarray(emb, dtype=np.float32))[None], caption


@torch.no_grad()
def encode_image(
    image: np.ndarray,
    model: SelicModel,
    *,
    embedding: np.ndarray | None = None,
    captioner=None,
    embedder=None,
    cache=None,
    image_id: str | None = None,
    coder: str = "reference",
) -> EncodeResult:
    """Compress an (H, W, 3) image in [0,1] to a .selic byte string."""
    from .fastcoder import get_coder

    rc_encode, _ = get_coder(coder)
    image = validate_image(image)
    padded, (orig_h, orig_w) = pad_to_multiple(image, PAD_MULTIPLE)
    emb_tensor, caption = _semantic_embedding(
        model, image, embedding, captioner, embedder, cache, image_id
    )

    model.eval()
    y, z = model.latents(image_to_tensor(padded), emb_tensor)

    z_sym, z_tables, z_radii, z_hat, clipped = _z_plan(model, z)
    hz, wz = z_sym.shape[1], z_sym.shape[2]
    z_stream_syms: list[int] = []
    z_stream_tables = []
    for c in range(z_sym.shape[0]):
        z_stream_syms.extend((z_sym[c].ravel() + z_radii[c]).tolist())
        z_stream_tables.extend([z_tables[c]] * (hz * wz))
    z_bytes = rc_encode(z_stream_syms, z_stream_tables)
    z_flat = z_hat[0].reshape(z_hat.shape[1], -1)
    est_z = float(rate_bits(model.zprior.likelihood(z_flat)))

    hyper = model.hs(z_hat)
    decoded: list[torch.Tensor] = []
    slice_streams: list[bytes] = []
    est_y = 0.0
    for i, y_slice in enumerate(model.charm.split(y)):
        params = model.charm.predict_slice_params(hyper, decoded, i)
        tables, radii, _ = _slice_tables(params.sigma)
        k = torch.round(y_slice - params.mu).detach().cpu().numpy().astype(np.int64).ravel()
        clipped += int(np.count_nonzero((k > radii) | (k < -radii)))
        k = np.clip(k, -radii, radii)
        slice_streams.append(rc_encode((k + radii).tolist(), tables))
        y_hat_slice = _slice_symbols_to_tensor(k, params.mu)
        est_y += float(rate_bits(gaussian_likelihood(y_hat_slice, params.mu, params.sigma)))
        decoded.append(y_hat_slice)

    header = BitstreamHeader(
        config_id=model.config.lambda_preset_index(),
        fusion_kind=model.fusion_kind,
        orig_h=orig_h,
        orig_w=orig_w,
        padded_h=padded.shape[0],
        padded_w=padded.shape[1],
    )
    data = pack_bitstream(header, z_bytes, slice_streams)
    payload_bits = 8 * (len(z_bytes) + sum(len(s) for s in slice_streams))
    stats = EncodeStats(
        estimate_bits_y=est_y,
        estimate_bits_z=est_z,
        payload_bits=payload_bits,
        header_bits=8 * (len(data) - (payload_bits // 8)),
        clipped_symbols=clipped,
        caption=caption,
    )
    return EncodeResult(data=data, header=header, stats=stats)


@torch.no_grad()
def decode_image(data: bytes, model: SelicModel, *, coder: str = "reference") -> np.ndarray:
    """Decompress a .selic byte string back to an (H, W, 3) image in [0,1].

    Needs only the bitstream and weights; semantic backends are never
    consulted.
    """
    from .fastcoder import get_coder

    _, rc_decode = get_coder(coder)
    model.eval()
    config = model.config
    header, z_bytes, slice_bytes = parse_bitstream(data, config.num_slices)

    hz = header.padded_h // config.downsample_z
    wz = header.padded_w // config.downsample_z
    hy = header.padded_h // config.downsample_y
    wy = header.padded_w // config.downsample_y

    z_tables, z_radii = model.zprior.channel_tables()
    n = config.n_filters
    z_stream_tables = []
    for c in range(n):
        z_stream_tables.extend([z_tables[c]] * (hz * wz))
    z_stream = rc_decode(z_bytes, z_stream_tables, n * hz * wz)
    z_sym = np.asarray(z_stream, dtype=np.int64).reshape(n, hz, wz)
    z_sym -= z_radii.reshape(-1, 1, 1)
    z_hat = _z_symbols_to_tensor(z_sym, (1, n, hz, wz))

    hyper = model.hs(z_hat)
    decoded: list[torch.Tensor] = []
    for i in range(config.num_slices):
        params = model.charm.predict_slice_params(hyper, decoded, i)
        if params.mu.shape[-2:] != (hy, wy):
            raise DecodeError(
                f"slice grid {tuple(params.mu.shape[-2:])} != header-implied {(hy, wy)}"
            )
        tables, radii, _ = _slice_tables(params.sigma)
        syms = rc_decode(slice_bytes[i], tables, len(tables))
        k = np.asarray(syms, dtype=np.int64) - radii
        decoded.append(_slice_symbols_to_tensor(k, params.mu))
    y_hat = torch.cat(decoded, dim=1)

    recon = tensor_to_image(model.gs(y_hat))
    return crop_to(recon, (header.orig_h, header.orig_w))


@torch.no_grad()
def deterministic_reconstruct(
    image: np.ndarray,
    model: SelicModel,
    *,
    embedding: np.ndarray | None = None,
    captioner=None,
    embedder=None,
) -> np.ndarray:
    """The rounded-latent reconstruction the codec must reproduce exactly.

    Runs the same quantization plan as encode_image but skips entropy
    coding; encode followed by decode must return this image bit-for-bit.
    """
    image = validate_image(image)
    padded, (orig_h, orig_w) = pad_to_multiple(image, PAD_MULTIPLE)
    emb_tensor, _ = _semantic_embedding(
        model, image, embedding, captioner, embedder, None, None
    )
    model.eval()
    y, z = model.latents(image_to_tensor(padded), emb_tensor)
    _, _, _, z_hat, _ = _z_plan(model, z)
    hyper = model.hs(z_hat)
    decoded: list[torch.Tensor] = []
    for i, y_slice in enumerate(model.charm.split(y)):
        params = model.charm.predict_slice_params(hyper, decoded, i)
        _, radii, _ = _slice_tables(params.sigma)
        k = torch.round(y_slice - params.mu).detach().cpu().numpy().astype(np.int64).ravel()
        k = np.clip(k, -radii, radii)
        decoded.append(_slice_symbols_to_tensor(k, params.mu))
    y_hat = torch.cat(decoded, dim=1)
    recon = tensor_to_image(model.gs(y_hat))
    return crop_to(recon, (orig_h, orig_w))


def estimate_rate_bits(model: SelicModel, y: torch.Tensor, z: torch.Tensor) -> tuple[float, float]:
    """Exact-likelihood information content (bits_y, bits_z) of the rounded
    latents, the quantity actual payload size is audited against."""
    with torch.no_grad():
        _, _, _, z_hat, _ = _z_plan(model, z)
        z_flat = z_hat[0].reshape(z_hat.shape[1], -1)
        bits_z = float(rate_bits(model.zprior.likelihood(z_flat)))
        hyper = model.hs(z_hat)
        decoded: list[torch.Tensor] = []
        bits_y = 0.0
        for i, y_slice in enumerate(model.charm.split(y)):
            params = model.charm.predict_slice_params(hyper, decoded, i)
            _, radii, _ = _slice_tables(params.sigma)
            k = torch.round(y_slice - params.mu).detach().cpu().numpy().astype(np.int64).ravel()
            k = np.clip(k, -radii, radii)
            y_hat_slice = _slice_symbols_to_tensor(k, params.mu)
            bits_y += float(rate_bits(gaussian_likelihood(y_hat_slice, params.mu, params.sigma)))
            decoded.append(y_hat_slice)
    return bits_y, bits_z


def encode_gaussian_slice(
    values: np.ndarray, mu: np.ndarray, sigma: np.ndarray, coder: str = "reference"
) -> tuple[bytes, float]:
    """Quantize and code one synthetic Gaussian slice; returns (stream, bits).

    `bits` is the exact-likelihood estimate of the coded symbols, for rate
    accounting checks; the stream is produced by the same table machinery
    the image pipeline uses.
    """
    from .fastcoder import get_coder

    rc_encode, _ = get_coder(coder)
    mu_t = torch.from_numpy(np.asarray(mu, dtype=np.float32))
    sigma_t = torch.from_numpy(np.asarray(sigma, dtype=np.float32))
    v_t = torch.from_numpy(np.asarray(values, dtype=np.float32))
    if not (mu_t.shape == sigma_t.shape == v_t.shape):
        raise EncodeError("values, mu, sigma must share a shape")
    tables, radii, _ = _slice_tables(sigma_t)
    k = torch.round(v_t - mu_t).numpy().astype(np.int64).ravel()
    k = np.clip(k, -radii, radii)
    stream = rc_encode((k + radii).tolist(), tables)
    y_hat = _slice_symbols_to_tensor(k, mu_t)
    bits = float(rate_bits(gaussian_likelihood(y_hat, mu_t, sigma_t)))
    return stream, bits
