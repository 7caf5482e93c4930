"""Semantic-enhanced learned image compression.

A learned codec that captions each image with a frozen vision-language
model, embeds the caption with a frozen text encoder, and fuses the
projected embedding into the image latent before quantization. Rate comes
from a hyperprior plus channel-wise autoregressive Gaussians, coded with a
deterministic range coder into a self-contained bitstream.
"""

from .bdrate import RdCurve, RdPoint, bd_rate, read_curve_csv, write_curve_csv
from .codec import (
    BitstreamHeader,
    EncodeResult,
    decode_image,
    deterministic_reconstruct,
    encode_image,
    parse_bitstream,
)
from .config import (
    LAMBDA_GRID,
    ModelConfig,
    RunConfig,
    TrainSettings,
    default_config,
    pad_to_multiple,
    read_config_file,
    tiny_config,
    write_config_file,
)
from .errors import SelicError
from .imagefile import load_image, save_image
from .metrics import ms_ssim, psnr
from .model import SelicModel, load_checkpoint, save_checkpoint
from .rans import CdfTable, rc_decode, rc_encode
from .semantic import SemanticCache, make_captioner, make_embedder
from .training import overfit, run_training, train_step

__version__ = "0.1.0"

__all__ = [
    "BitstreamHeader",
    "CdfTable",
    "EncodeResult",
    "LAMBDA_GRID",
    "ModelConfig",
    "RdCurve",
    "RdPoint",
    "RunConfig",
    "SelicError",
    "SelicModel",
    "SemanticCache",
    "TrainSettings",
    "bd_rate",
    "decode_image",
    "default_config",
    "deterministic_reconstruct",
    "encode_image",
    "load_checkpoint",
    "load_image",
    "make_captioner",
    "make_embedder",
    "ms_ssim",
    "overfit",
    "pad_to_multiple",
    "parse_bitstream",
    "psnr",
    "rc_decode",
    "rc_encode",
    "read_config_file",
    "read_curve_csv",
    "run_training",
    "save_checkpoint",
    "save_image",
    "tiny_config",
    "train_step",
    "write_config_file",
    "write_curve_csv",
]
