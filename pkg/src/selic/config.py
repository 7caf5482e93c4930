"""Model configuration, presets, image padding, and the flat config-file format.

Images are plain numpy arrays of shape (H, W, 3) with float values in [0, 1];
``validate_image`` enforces that convention wherever one enters the codec.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidInputError

# Lambda presets: each targets one rate point of the RD sweep.
LAMBDA_GRID = (0.0016, 0.0032, 0.0075, 0.015, 0.03, 0.045, 0.06)

# Spatial reduction of the two latents relative to the padded input.
Y_DOWNSAMPLE = 16
Z_DOWNSAMPLE = 64

# Every padded dimension must be a multiple of this so both latents have
# integral spatial sizes.
PAD_MULTIPLE = 64

FUSION_KINDS = ("concat", "add", "mul")
# "none" disables the semantic branch entirely (the ablation baseline).
FUSION_KIND_CODES = {"concat": 0, "add": 1, "mul": 2, "none": 3}
CODER_BACKENDS = ("reference", "fast")
SEMANTIC_BACKENDS = ("stub", "pretrained")


@dataclass(frozen=True)
class ModelConfig:
    """Architectural hyperparameters shared by every module.

    Immutable after construction; safe to share across workers.
    """

    n_filters: int = 128
    latent_channels: int = 192
    num_slices: int = 8
    lambda_value: float = 0.015
    text_embed_dim: int = 768
    downsample_y: int = Y_DOWNSAMPLE
    downsample_z: int = Z_DOWNSAMPLE
    seed: int = 0

    def __post_init__(self):
        if self.n_filters < 1:
            raise ConfigError(f"n_filters must be >= 1, got {self.n_filters}")
        if self.latent_channels < 1:
            raise ConfigError(f"latent_channels must be >= 1, got {self.latent_channels}")
        if self.num_slices < 1:
            raise ConfigError(f"num_slices must be >= 1, got {self.num_slices}")
        if self.latent_channels % self.num_slices != 0:
            raise ConfigError(
                f"latent_channels ({self.latent_channels}) must be divisible by "
                f"num_slices ({self.num_slices})"
            )
        if not (self.lambda_value > 0):
            raise ConfigError(f"lambda_value must be positive, got {self.lambda_value}")
        if self.text_embed_dim < 1:
            raise ConfigError(f"text_embed_dim must be >= 1, got {self.text_embed_dim}")
        if self.downsample_y != Y_DOWNSAMPLE or self.downsample_z != Z_DOWNSAMPLE:
            raise ConfigError(
                f"downsample factors are fixed at {Y_DOWNSAMPLE}/{Z_DOWNSAMPLE}, got "
                f"{self.downsample_y}/{self.downsample_z}"
            )

    @property
    def slice_width(self) -> int:
        return self.latent_channels // self.num_slices

    def lambda_preset_index(self) -> int:
        """Index of lambda_value in the preset grid, or 255 for a custom value."""
        for i, lam in enumerate(LAMBDA_GRID):
            if abs(lam - self.lambda_value) < 1e-12:
                return i
        return 255


def default_config(**overrides) -> ModelConfig:
    """Full-size preset: N=128 filters, M=192 latent channels, 8 slices."""
    return ModelConfig(**overrides)


def tiny_config(**overrides) -> ModelConfig:
    """Small preset for tests and demos: N=32, M=16, 4 slices, 32-dim text."""
    params = dict(n_filters=32, latent_channels=16, num_slices=4, text_embed_dim=32)
    params.update(overrides)
    return ModelConfig(**params)


# ---------------------------------------------------------------------------
# Images


def validate_image(image: np.ndarray) -> np.ndarray:
    """Check the (H, W, 3) in-[0,1] convention; returns the array unchanged."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"expected an (H, W, 3) image, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise InvalidInputError(f"zero-sized image: shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating):
        raise InvalidInputError(f"image values must be floats in [0, 1], got dtype {arr.dtype}")
    return arr


def pad_to_multiple(image: np.ndarray, multiple: int) -> tuple[np.ndarray, tuple[int, int]]:
    """Edge-replicate an image up to the next multiple of `multiple` per axis.

    Returns the padded image and the original (height, width) so the decoder
    can crop the reconstruction back.
    """
    if multiple < 1:
        raise InvalidInputError(f"multiple must be >= 1, got {multiple}")
    arr = validate_image(image)
    h, w = arr.shape[:2]
    ph = -(-h // multiple) * multiple
    pw = -(-w // multiple) * multiple
    if (ph, pw) == (h, w):
        return arr, (h, w)
    padded = np.pad(arr, ((0, ph - h), (0, pw - w), (0, 0)), mode="edge")
    return padded, (h, w)


def crop_to(image: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    h, w = dims
    return image[:h, :w, :]


# ---------------------------------------------------------------------------
# Flat key=value config files


@dataclass(frozen=True)
class TrainSettings:
    """Schedule and dataset settings parsed from the train.* config keys."""

    epochs: int = 160
    batch_size: int = 8
    lr_initial: float = 1e-4
    lr_final: float = 1e-5
    lr_drop_epoch: int = 130
    crop: int = 256
    dataset_dir: str = ""
    out_dir: str = ""
    semantic_enabled: bool = True

    def __post_init__(self):
        if not (0 <= self.lr_drop_epoch < self.epochs):
            raise ConfigError(
                f"lr_drop_epoch ({self.lr_drop_epoch}) must be < epochs ({self.epochs})"
            )


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs: model, fusion/coder/backend choice, training."""

    model: ModelConfig = dataclasses.field(default_factory=ModelConfig)
    fusion_kind: str = "concat"
    coder_backend: str = "reference"
    semantic_backend: str = "stub"
    train: TrainSettings = dataclasses.field(default_factory=TrainSettings)

    def __post_init__(self):
        if self.fusion_kind not in FUSION_KIND_CODES:
            raise ConfigError(
                f"fusion.kind must be one of {tuple(FUSION_KIND_CODES)}, got {self.fusion_kind!r}"
            )
        if self.coder_backend not in CODER_BACKENDS:
            raise ConfigError(
                f"coder.backend must be one of {CODER_BACKENDS}, got {self.coder_backend!r}"
            )
        if self.semantic_backend not in SEMANTIC_BACKENDS:
            raise ConfigError(
                f"semantic.backend must be one of {SEMANTIC_BACKENDS}, "
                f"got {self.semantic_backend!r}"
            )


_MODEL_KEYS = {f.name: f.type for f in dataclasses.fields(ModelConfig)}
_TRAIN_KEYS = {f.name: f.type for f in dataclasses.fields(TrainSettings)}
_BOOL_STRINGS = {"true": True, "false": False, "1": True, "0": False}


def _parse_scalar(key: str, raw: str, typ: str):
    try:
        if typ == "int":
            return int(raw)
        if typ == "float":
            return float(raw)
        if typ == "bool":
            return _BOOL_STRINGS[raw.strip().lower()]
        return raw
    except (ValueError, KeyError):
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def parse_config_text(text: str) -> RunConfig:
    """Parse the flat key = value config format. Unknown keys are rejected."""
    model_kwargs: dict = {}
    train_kwargs: dict = {}
    top: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key in _MODEL_KEYS:
            model_kwargs[key] = _parse_scalar(key, raw, _MODEL_KEYS[key])
        elif key == "fusion.kind":
            top["fusion_kind"] = raw
        elif key == "coder.backend":
            top["coder_backend"] = raw
        elif key == "semantic.backend":
            top["semantic_backend"] = raw
        elif key.startswith("train.") and key[len("train."):] in _TRAIN_KEYS:
            name = key[len("train."):]
            typ = _TRAIN_KEYS[name]
            train_kwargs[name] = _parse_scalar(key, raw, typ)
        else:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
    return RunConfig(
        model=ModelConfig(**model_kwargs),
        train=TrainSettings(**train_kwargs),
        **top,
    )


def read_config_file(path: str | Path) -> RunConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(ModelConfig):
        lines.append(f"{f.name} = {getattr(cfg.model, f.name)}")
    lines.append(f"fusion.kind = {cfg.fusion_kind}")
    lines.append(f"coder.backend = {cfg.coder_backend}")
    lines.append(f"semantic.backend = {cfg.semantic_backend}")
    for f in dataclasses.fields(TrainSettings):
        lines.append(f"train.{f.name} = {getattr(cfg.train, f.name)}")
    return "\n".join(lines) + "\n"


def write_config_file(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(format_config(cfg), encoding="utf-8")
