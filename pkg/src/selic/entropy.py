"""Entropy models: conditional Gaussians for y, a learned factorized prior
for z, and the channel-wise autoregressive parameter networks.

Coding-side conventions, all fixed by the bitstream format:

- y elements are quantized to k = round(y - mu), clamped to [-255, 255], and
  reconstructed as k + mu, so the coded symbol distribution depends only on
  the predicted scale.
- Scales are mapped onto a fixed 64-entry log-spaced table (0.11 .. 256) by
  ceiling lookup: the smallest table scale >= sigma. Rounding up inflates the
  coded rate slightly but never starves a symbol of probability mass.
- Each table entry has radius r = min(255, max(1, ceil(6 * scale))); the two
  extreme symbols absorb the tail mass beyond +/- r.
- PMFs are quantized to 16-bit frequencies summing to exactly 65536 with
  every symbol kept nonzero.
- z is coded with per-channel tables from the factorized prior, rounded
  around zero, with per-channel radius chosen so the tail mass beyond it is
  below 2**-17.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig
from .errors import CausalityError, ConfigError
from .layers import LRELU_SLOPE, conv1x1, conv3x3, tconv3x3
from .rans import PROB_SCALE, CdfTable

SCALE_MIN = 0.11
SCALE_MAX = 256.0
SCALE_LEVELS = 64
SIGMA_FLOOR = 1e-4
LIKELIHOOD_FLOOR = 1e-9
MAX_SYMBOL_RADIUS = 255
Z_TAIL_MASS = 2.0 ** -17

_INV_SQRT2 = 1.0 / math.sqrt(2.0)


def scale_table() -> np.ndarray:
    """The 64 coded scales, log-spaced from 0.11 to 256 inclusive."""
    return np.exp(np.linspace(math.log(SCALE_MIN), math.log(SCALE_MAX), SCALE_LEVELS))


_SCALE_TABLE = scale_table()


def scale_to_index(sigma: np.ndarray) -> np.ndarray:
    """Index of the smallest table scale >= sigma (clamped to the table)."""
    sigma = np.maximum(np.asarray(sigma, dtype=np.float64), SIGMA_FLOOR)
    idx = np.searchsorted(_SCALE_TABLE, sigma, side="left")
    return np.minimum(idx, SCALE_LEVELS - 1).astype(np.int64)


def _std_cdf(x: np.ndarray) -> np.ndarray:
    from scipy.special import ndtr

    return ndtr(x)


def gaussian_likelihood(values: torch.Tensor, mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """P(v - 0.5 < Y <= v + 0.5) under N(mu, sigma^2), floored at 1e-9.

    Evaluated as a difference of standard-normal CDFs of the interval edges.
    Both edges are folded to the lower tail first so the subtraction happens
    between same-signed quantities of comparable magnitude.
    """
    sigma = sigma.clamp(min=SIGMA_FLOOR)
    centered = values - mu
    upper = (0.5 - centered) / sigma
    lower = (-0.5 - centered) / sigma
    # Phi(u) - Phi(l) == Phi(-l) - Phi(-u); pick the tail-side evaluation.
    flip = centered < 0
    u = torch.where(flip, -lower, upper)
    l = torch.where(flip, -upper, lower)
    phi = lambda t: 0.5 * torch.erfc(-t * _INV_SQRT2)
    prob = phi(u) - phi(l)
    return prob.clamp(min=LIKELIHOOD_FLOOR)


def rate_bits(likelihoods: torch.Tensor) -> torch.Tensor:
    """Total information content in bits: sum of -log2 p."""
    return -torch.log2(likelihoods).sum()


@dataclass(frozen=True)
class GaussianParams:
    """Per-element conditional Gaussian parameters on a latent grid."""

    mu: torch.Tensor
    sigma: torch.Tensor


@dataclass(frozen=True)
class QuantizedLatent:
    """Mean-centered quantization result: integer symbols and reconstruction."""

    values: torch.Tensor
    symbols: torch.Tensor


def quantize(latent: torch.Tensor, mu: torch.Tensor, mode: str) -> QuantizedLatent | torch.Tensor:
    """Quantize a latent for training ("noise") or coding ("round").

    "noise" returns latent + U[-0.5, 0.5), the differentiable surrogate used
    by both the rate term and the synthesis input during training. "round"
    returns integer offsets k = round(v - mu) clamped to [-255, 255] together
    with the dequantized values k + mu.
    """
    if mode == "noise":
        noise = torch.empty_like(latent).uniform_(-0.5, 0.5)
        return latent + noise
    if mode == "round":
        symbols = torch.round(latent - mu).clamp(-MAX_SYMBOL_RADIUS, MAX_SYMBOL_RADIUS)
        return QuantizedLatent(values=symbols + mu, symbols=symbols.to(torch.int32))
    raise ConfigError(f"unknown quantize mode {mode!r}")


def _quantize_pmf(pmf: np.ndarray) -> np.ndarray:
    """Map a PMF to 16-bit frequencies, each >= 1, summing to 65536."""
    freqs = np.maximum(1, np.round(pmf * PROB_SCALE).astype(np.int64))
    excess = int(freqs.sum()) - PROB_SCALE
    while excess != 0:
        # Push the residual onto the largest bins; they absorb it with the
        # least relative distortion and stay >= 1 by construction.
        order = np.argsort(freqs)[::-1]
        sign = -1 if excess > 0 else 1
        for i in order:
            if excess == 0:
                break
            if sign < 0 and freqs[i] <= 1:
                continue
            freqs[i] += sign
            excess += sign
    return freqs.astype(np.uint32)


@lru_cache(maxsize=None)
def cdf_table_for_scale_index(index: int) -> tuple[CdfTable, int]:
    """Coding table for one table scale: (cdf over 2r+1 symbols, radius r).

    Symbol s in [0, 2r] codes the offset s - r. Interior mass is the CDF
    difference on unit bins; the two extremes absorb the remaining tails.
    """
    if not 0 <= index < SCALE_LEVELS:
        raise ConfigError(f"scale index {index} out of range [0, {SCALE_LEVELS})")
    sigma = _SCALE_TABLE[index]
    radius = int(min(MAX_SYMBOL_RADIUS, max(1, math.ceil(6.0 * sigma))))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    upper = _std_cdf((offsets + 0.5) / sigma)
    lower = _std_cdf((offsets - 0.5) / sigma)
    pmf = upper - lower
    pmf[0] += lower[0]
    pmf[-1] += 1.0 - upper[-1]
    return CdfTable.from_frequencies(_quantize_pmf(pmf)), radius


def tables_for_sigma(sigma: np.ndarray) -> tuple[list[CdfTable], np.ndarray, np.ndarray]:
    """Per-element coding tables for a flat array of scales.

    Returns (tables, radii, indices) aligned with the flattened input.
    """
    indices = scale_to_index(sigma).ravel()
    tables: list[CdfTable] = []
    radii = np.empty(indices.shape[0], dtype=np.int64)
    for i, idx in enumerate(indices):
        table, radius = cdf_table_for_scale_index(int(idx))
        tables.append(table)
        radii[i] = radius
    return tables, radii, indices


class FactorizedPrior(nn.Module):
    """Learned univariate CDF per z channel, built from a monotone MLP chain.

    Each channel owns a small stack of 1-wide layers whose matrix weights are
    softplus-rectified and whose gate parameters pass through tanh, keeping
    the composed map monotone in its input. The CDF is the sigmoid of the
    final pre-activation; bin probabilities are CDF differences at +/- 0.5.
    """

    FILTERS = (3, 3, 3)

    def __init__(self, channels: int):
        super().__init__()
        self.channels = channels
        dims = (1,) + self.FILTERS + (1,)
        scale = 10.0 ** (1.0 / len(self.FILTERS))
        self._matrices = nn.ParameterList()
        self._biases = nn.ParameterList()
        self._gates = nn.ParameterList()
        for k in range(len(dims) - 1):
            init = math.log(math.expm1(1.0 / scale / dims[k + 1]))
            self._matrices.append(nn.Parameter(torch.full((channels, dims[k + 1], dims[k]), init)))
            bias = torch.empty(channels, dims[k + 1], 1).uniform_(-0.5, 0.5)
            self._biases.append(nn.Parameter(bias))
            if k < len(dims) - 2:
                self._gates.append(nn.Parameter(torch.zeros(channels, dims[k + 1], 1)))

    def _logits(self, x: torch.Tensor) -> torch.Tensor:
        """Pre-sigmoid CDF logits; x has shape (channels, n)."""
        out = x[:, None, :]
        for k, (matrix, bias) in enumerate(zip(self._matrices, self._biases)):
            out = torch.matmul(F.softplus(matrix), out) + bias
            if k < len(self._gates):
                out = out + torch.tanh(self._gates[k]) * torch.tanh(out)
        return out[:, 0, :]

    def likelihood(self, values: torch.Tensor) -> torch.Tensor:
        """Per-element bin probability for (channels, n) values, floored."""
        if values.shape[0] != self.channels:
            raise ConfigError(
                f"expected {self.channels} channels, got {values.shape[0]}"
            )
        upper = torch.sigmoid(self._logits(values + 0.5))
        lower = torch.sigmoid(self._logits(values - 0.5))
        return (upper - lower).clamp(min=LIKELIHOOD_FLOOR)

    @torch.no_grad()
    def channel_tables(self) -> tuple[list[CdfTable], np.ndarray]:
        """Coding tables per channel.

        The radius grows until the tail mass beyond it drops under 2**-17 or
        the symbol cap is reached; either way the remaining tails fold into
        the outermost bins, so coding stays lossless for clamped symbols.
        """
        tables: list[CdfTable] = []
        radii = np.empty(self.channels, dtype=np.int64)
        for c in range(self.channels):
            radius = 1
            while radius < MAX_SYMBOL_RADIUS:
                edges = torch.tensor([-radius - 0.5, radius + 0.5])[None, :]
                logits = self._logits(edges.expand(self.channels, 2))[c]
                tail = torch.sigmoid(logits[0]) + torch.sigmoid(-logits[1])
                if tail.item() < Z_TAIL_MASS:
                    break
                radius += 1
            offsets = torch.arange(-radius, radius + 1, dtype=torch.float32)
            values = offsets[None, :].expand(self.channels, offsets.shape[0])
            upper = torch.sigmoid(self._logits(values + 0.5))[c]
            lower = torch.sigmoid(self._logits(values - 0.5))[c]
            pmf = (upper - lower).double()
            pmf[0] += lower[0].double()
            pmf[-1] += 1.0 - upper[-1].double()
            tables.append(CdfTable.from_frequencies(_quantize_pmf(pmf.numpy())))
            radii[c] = radius
        return tables, radii


class HyperAnalysis(nn.Module):
    """h_a: y (B, M, h, w) -> z (B, N, h/4, w/4) via two stride-2 convs."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        n, m = config.n_filters, config.latent_channels
        self.conv1 = conv3x3(m, n, stride=2)
        self.act = nn.LeakyReLU(LRELU_SLOPE)
        self.conv2 = conv3x3(n, n, stride=2)

    def forward(self, y):
        return self.conv2(self.act(self.conv1(y)))


class HyperSynthesis(nn.Module):
    """h_s: z_hat (B, N, h/4, w/4) -> hyper features (B, 2M, h, w)."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        n, m = config.n_filters, config.latent_channels
        self.up1 = tconv3x3(n, n)
        self.act = nn.LeakyReLU(LRELU_SLOPE)
        self.up2 = tconv3x3(n, 2 * m)

    def forward(self, z):
        return self.up2(self.act(self.up1(z)))


class SliceParamNet(nn.Module):
    """Predict (mu, sigma) for one y slice from hyper features and decoded
    earlier slices."""

    def __init__(self, config: ModelConfig, slice_index: int):
        super().__init__()
        n, m, sw = config.n_filters, config.latent_channels, config.slice_width
        in_ch = 2 * m + slice_index * sw
        self.reduce = conv1x1(in_ch, n)
        self.conv = conv3x3(n, n)
        self.out = conv1x1(n, 2 * sw)
        self.act = nn.LeakyReLU(LRELU_SLOPE)

    def forward(self, hyper, decoded_slices):
        x = torch.cat([hyper] + list(decoded_slices), dim=1)
        x = self.act(self.reduce(x))
        x = self.act(self.conv(x))
        return self.out(x)


class ChannelContext(nn.Module):
    """The per-slice conditional Gaussian parameter networks for y.

    y splits channel-wise into `num_slices` equal slices; slice i's parameters
    are predicted from the hyper features plus the dequantized slices 0..i-1,
    so decoding can proceed slice by slice.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.num_slices = config.num_slices
        self.slice_width = config.slice_width
        self.nets = nn.ModuleList(
            [SliceParamNet(config, i) for i in range(config.num_slices)]
        )

    def split(self, y: torch.Tensor) -> list[torch.Tensor]:
        if y.shape[1] != self.num_slices * self.slice_width:
            raise ConfigError(
                f"latent has {y.shape[1]} channels; expected "
                f"{self.num_slices} x {self.slice_width}"
            )
        return list(torch.split(y, self.slice_width, dim=1))

    def predict_slice_params(
        self, hyper: torch.Tensor, decoded_slices: list[torch.Tensor], slice_index: int
    ) -> GaussianParams:
        """Parameters for slice `slice_index` given all earlier decoded slices."""
        if not 0 <= slice_index < self.num_slices:
            raise ConfigError(f"slice index {slice_index} out of range")
        if len(decoded_slices) != slice_index:
            raise CausalityError(
                f"slice {slice_index} needs exactly {slice_index} decoded "
                f"slices, got {len(decoded_slices)}"
            )
        raw = self.nets[slice_index](hyper, decoded_slices)
        mu, raw_sigma = torch.chunk(raw, 2, dim=1)
        sigma = F.softplus(raw_sigma).clamp(min=SIGMA_FLOOR)
        return GaussianParams(mu=mu, sigma=sigma)
