import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selic.config import (
    LAMBDA_GRID,
    PAD_MULTIPLE,
    ModelConfig,
    RunConfig,
    TrainSettings,
    crop_to,
    default_config,
    format_config,
    pad_to_multiple,
    parse_config_text,
    read_config_file,
    tiny_config,
    validate_image,
    write_config_file,
)
from selic.errors import ConfigError, InvalidInputError


def test_presets():
    full = default_config()
    assert (full.n_filters, full.latent_channels, full.num_slices) == (128, 192, 8)
    assert full.text_embed_dim == 768
    tiny = tiny_config()
    assert (tiny.n_filters, tiny.latent_channels, tiny.num_slices) == (32, 16, 4)
    assert tiny.slice_width == 4
    assert tiny_config(seed=7).seed == 7


def test_lambda_preset_index():
    for i, lam in enumerate(LAMBDA_GRID):
        assert tiny_config(lambda_value=lam).lambda_preset_index() == i
    assert tiny_config(lambda_value=0.02).lambda_preset_index() == 255


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(latent_channels=10, num_slices=4)
    with pytest.raises(ConfigError):
        ModelConfig(lambda_value=0.0)
    with pytest.raises(ConfigError):
        ModelConfig(num_slices=0)
    with pytest.raises(ConfigError):
        ModelConfig(downsample_y=8)
    with pytest.raises(ConfigError):
        RunConfig(fusion_kind="blend")
    with pytest.raises(ConfigError):
        RunConfig(coder_backend="zstd")
    with pytest.raises(ConfigError):
        TrainSettings(epochs=10, lr_drop_epoch=10)


def test_validate_image():
    good = np.zeros((4, 5, 3), dtype=np.float32)
    assert validate_image(good) is good
    with pytest.raises(InvalidInputError):
        validate_image(np.zeros((4, 5), dtype=np.float32))
    with pytest.raises(InvalidInputError):
        validate_image(np.zeros((4, 5, 4), dtype=np.float32))
    with pytest.raises(InvalidInputError):
        validate_image(np.zeros((0, 5, 3), dtype=np.float32))
    with pytest.raises(InvalidInputError):
        validate_image(np.zeros((4, 5, 3), dtype=np.uint8))


def test_pad_to_multiple_replicates_edges():
    image = np.random.default_rng(0).random((65, 1, 3)).astype(np.float32)
    padded, dims = pad_to_multiple(image, PAD_MULTIPLE)
    assert dims == (65, 1)
    assert padded.shape == (128, 64, 3)
    assert np.array_equal(padded[:65, :1], image)
    # The pad region repeats the last row/column.
    assert np.array_equal(padded[65:, 0], np.broadcast_to(image[64, 0], (63, 3)))
    assert np.array_equal(padded[:65, 1:], np.broadcast_to(image[:65, :1], (65, 63, 3)))


def test_pad_noop_for_aligned_dims():
    image = np.zeros((64, 128, 3), dtype=np.float32)
    padded, dims = pad_to_multiple(image, 64)
    assert padded.shape == (64, 128, 3)
    assert dims == (64, 128)
    with pytest.raises(InvalidInputError):
        pad_to_multiple(image, 0)


@settings(max_examples=60, deadline=None)
@given(h=st.integers(1, 200), w=st.integers(1, 200))
def test_pad_then_crop_round_trip(h, w):
    image = np.arange(h * w * 3, dtype=np.float32).reshape(h, w, 3) / (h * w * 3)
    padded, dims = pad_to_multiple(image, PAD_MULTIPLE)
    assert padded.shape[0] % PAD_MULTIPLE == 0 and padded.shape[1] % PAD_MULTIPLE == 0
    assert np.array_equal(crop_to(padded, dims), image)


def test_config_text_round_trip(tmp_path):
    cfg = RunConfig(
        model=tiny_config(lambda_value=0.0032, seed=3),
        fusion_kind="mul",
        coder_backend="reference",
        semantic_backend="stub",
        train=TrainSettings(epochs=4, batch_size=2, lr_drop_epoch=2, crop=64,
                            dataset_dir="data", out_dir="runs", semantic_enabled=False),
    )
    path = tmp_path / "run.cfg"
    write_config_file(cfg, path)
    assert read_config_file(path) == cfg


def test_config_parse_details():
    cfg = parse_config_text(
        """
        # comment and blank lines are fine

        n_filters = 32
        latent_channels = 16
        num_slices = 4
        text_embed_dim = 32
        fusion.kind = add
        train.semantic_enabled = false
        train.batch_size = 2
        """
    )
    assert cfg.model.n_filters == 32
    assert cfg.fusion_kind == "add"
    assert cfg.train.semantic_enabled is False
    assert cfg.train.batch_size == 2


@pytest.mark.parametrize(
    "text",
    [
        "widgets = 3",
        "n_filters = many",
        "just some words",
        "train.semantic_enabled = maybe",
        "fusion.kind = blend",
    ],
)
def test_config_parse_rejects(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_format_config_lists_every_key():
    text = format_config(RunConfig(model=tiny_config()))
    for key in ("n_filters", "fusion.kind", "coder.backend", "semantic.backend",
                "train.epochs", "train.lr_drop_epoch"):
        assert any(line.startswith(key + " ") for line in text.splitlines())
