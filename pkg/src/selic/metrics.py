"""Image quality metrics: PSNR on the 8-bit scale and multi-scale SSIM.

PSNR quantizes both images to 8-bit first, matching how codecs are compared;
identical inputs report infinity (serialized as "inf" in CSV output).

MS-SSIM uses the standard 5-scale definition: Gaussian window 11 with sigma
1.5, K1 = 0.01, K2 = 0.03, the usual scale weights, contrast-structure terms
on the first four scales and full SSIM on the coarsest. Each scale halves
the image with 2x2 mean pooling (edge-replicated when a dimension is odd),
so the smallest side must exceed 160 pixels for the window to fit at scale 5.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import convolve2d

from .errors import InvalidInputError

MSSSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MSSSIM_MIN_DIM = 160
_WINDOW_SIZE = 11
_WINDOW_SIGMA = 1.5
_K1 = 0.01
_K2 = 0.03


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[2] != 3:
        raise InvalidInputError(f"expected (H, W, 3) images, got {a.shape}")
    return a, b


def quantize_u8(image: np.ndarray) -> np.ndarray:
    """[0,1] float image -> 8-bit integers, round-half-away from zero."""
    return np.clip(np.floor(np.asarray(image) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB between 8-bit quantized images."""
    a, b = _check_pair(a, b)
    diff = quantize_u8(a).astype(np.float64) - quantize_u8(b).astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 * 255.0 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


_WINDOW = _gaussian_window(_WINDOW_SIZE, _WINDOW_SIGMA)


def _filter(plane: np.ndarray) -> np.ndarray:
    return convolve2d(plane, _WINDOW, mode="valid")


def _ssim_terms(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Mean (luminance-weighted ssim, contrast-structure) over channels."""
    c1 = _K1 * _K1
    c2 = _K2 * _K2
    ssim_vals = []
    cs_vals = []
    for ch in range(a.shape[2]):
        x = a[:, :, ch]
        y = b[:, :, ch]
        mu_x = _filter(x)
        mu_y = _filter(y)
        mu_xx = mu_x * mu_x
        mu_yy = mu_y * mu_y
        mu_xy = mu_x * mu_y
        var_x = _filter(x * x) - mu_xx
        var_y = _filter(y * y) - mu_yy
        cov = _filter(x * y) - mu_xy
        cs_map = (2.0 * cov + c2) / (var_x + var_y + c2)
        ssim_map = ((2.0 * mu_xy + c1) / (mu_xx + mu_yy + c1)) * cs_map
        ssim_vals.append(float(np.mean(ssim_map)))
        cs_vals.append(float(np.mean(cs_map)))
    return float(np.mean(ssim_vals)), float(np.mean(cs_vals))


def _halve(image: np.ndarray) -> np.ndarray:
    h, w = image.shape[:2]
    if h % 2:
        image = np.concatenate([image, image[-1:, :, :]], axis=0)
    if w % 2:
        image = np.concatenate([image, image[:, -1:, :]], axis=1)
    return (
        image[0::2, 0::2] + image[1::2, 0::2] + image[0::2, 1::2] + image[1::2, 1::2]
    ) / 4.0


def ms_ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Multi-scale SSIM of two (H, W, 3) images in [0,1]."""
    a, b = _check_pair(a, b)
    if min(a.shape[0], a.shape[1]) <= MSSSIM_MIN_DIM:
        raise InvalidInputError(
            f"ms_ssim needs min(H, W) > {MSSSIM_MIN_DIM}, got {a.shape[0]}x{a.shape[1]}"
        )
    a = np.clip(a, 0.0, 1.0)
    b = np.clip(b, 0.0, 1.0)
    levels = len(MSSSIM_WEIGHTS)
    value = 1.0
    for level in range(levels):
        ssim_mean, cs_mean = _ssim_terms(a, b)
        if level < levels - 1:
            # Negative cs can occur on pathological inputs; clamp like the
            # reference implementations so the weighted product stays real.
            value *= max(cs_mean, 0.0) ** MSSSIM_WEIGHTS[level]
            a = _halve(a)
            b = _halve(b)
        else:
            value *= max(ssim_mean, 0.0) ** MSSSIM_WEIGHTS[level]
    return float(value)


def mse_255(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared error on the 0..255 scale without 8-bit quantization."""
    a, b = _check_pair(a, b)
    diff = (a - b) * 255.0
    return float(np.mean(diff * diff))
