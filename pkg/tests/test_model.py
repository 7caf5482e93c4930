import dataclasses
import json

import numpy as np
import pytest
import torch

from selic.config import tiny_config
from selic.errors import CheckpointError, ConfigError
from selic.model import (
    SelicModel,
    build_model,
    canonical_param_name,
    count_parameters,
    load_checkpoint,
    restore_optimizer,
    save_checkpoint,
    state_key_from_canonical,
)
from selic.training import ADAM_BETAS, train_step
from conftest import structured_image, stub_embeddings

CFG = tiny_config()


def _batch(n=2):
    images = torch.from_numpy(
        np.stack([structured_image(i) for i in range(n)])
    ).permute(0, 3, 1, 2)
    emb = torch.from_numpy(
        np.stack(stub_embeddings([structured_image(i) for i in range(n)], CFG.text_embed_dim))
    )
    return images, emb


def test_build_is_seed_deterministic():
    a = build_model(CFG, "concat").state_dict()
    b = build_model(CFG, "concat").state_dict()
    assert a.keys() == b.keys()
    for key in a:
        assert torch.equal(a[key], b[key]), key
    c = build_model(tiny_config(seed=1), "concat").state_dict()
    assert any(not torch.equal(a[k], c[k]) for k in a)


def test_fusion_kinds_share_base_weights():
    models = {kind: build_model(CFG, kind) for kind in ("concat", "add", "mul", "none")}
    assert models["none"].fusion is None
    reference = models["concat"].state_dict()
    for kind in ("add", "mul", "none"):
        state = models[kind].state_dict()
        for key in state:
            if not key.startswith("fusion."):
                assert torch.equal(state[key], reference[key]), (kind, key)


def test_forward_outputs():
    model = SelicModel(CFG, "concat")
    images, emb = _batch()
    out = model(images, emb)
    assert set(out) >= {"x_hat", "bits_y", "bits_z", "y", "z"}
    assert out["x_hat"].shape == images.shape
    assert out["y"].shape == (2, CFG.latent_channels, 4, 4)
    assert out["z"].shape == (2, CFG.n_filters, 1, 1)
    assert float(out["bits_y"].detach()) > 0 and float(out["bits_z"].detach()) > 0
    assert out["bits_y"].requires_grad and out["bits_z"].requires_grad


def test_fuse_contract():
    model = build_model(CFG, "none")
    y3 = torch.randn(1, CFG.latent_channels, 4, 4)
    assert model.fuse(y3, None) is y3
    with pytest.raises(ConfigError):
        model.fuse(y3, torch.randn(1, CFG.text_embed_dim))
    with pytest.raises(ConfigError):
        SelicModel(CFG, "blend")


def test_canonical_names_round_trip():
    model = build_model(CFG, "concat")
    seen = set()
    for key in model.state_dict():
        name = canonical_param_name(key)
        assert state_key_from_canonical(name) == key
        assert name not in seen
        seen.add(name)
        assert ".weight" not in name and ".bias" not in name


def test_checkpoint_round_trip(tmp_path):
    model = build_model(tiny_config(seed=5, lambda_value=0.03), "mul")
    path = tmp_path / "model.npz"
    save_checkpoint(path, model, epoch=3, global_step=17)
    loaded, meta, opt_arrays = load_checkpoint(path)
    assert meta["fusion_kind"] == "mul"
    assert meta["epoch"] == 3 and meta["global_step"] == 17
    assert meta["model"] == dataclasses.asdict(model.config)
    assert opt_arrays == {}
    a, b = model.state_dict(), loaded.state_dict()
    assert a.keys() == b.keys()
    for key in a:
        assert torch.equal(a[key], b[key]), key


def test_checkpoint_optimizer_round_trip(tmp_path):
    model = SelicModel(CFG, "concat")
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-3, betas=ADAM_BETAS)
    images, emb = _batch()
    for _ in range(2):
        train_step(model, optimizer, images, emb, 0.015)
    path = tmp_path / "with-opt.npz"
    save_checkpoint(path, model, optimizer, epoch=0, global_step=2)

    loaded, _, opt_arrays = load_checkpoint(path)
    fresh = torch.optim.Adam(loaded.parameters(), lr=1e-3, betas=ADAM_BETAS)
    restore_optimizer(fresh, loaded, opt_arrays)

    live = optimizer.state_dict()["state"]
    restored = fresh.state_dict()["state"]
    assert live.keys() == restored.keys()
    for idx in live:
        assert float(live[idx]["step"]) == float(restored[idx]["step"])
        assert torch.equal(live[idx]["exp_avg"], restored[idx]["exp_avg"])
        assert torch.equal(live[idx]["exp_avg_sq"], restored[idx]["exp_avg_sq"])


def test_load_rejects_bad_checkpoints(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.npz")

    garbage = tmp_path / "garbage.npz"
    garbage.write_bytes(b"not an archive")
    with pytest.raises(CheckpointError):
        load_checkpoint(garbage)

    no_meta = tmp_path / "no-meta.npz"
    np.savez(no_meta, x=np.zeros(3))
    with pytest.raises(CheckpointError):
        load_checkpoint(no_meta)

    model = build_model(CFG, "concat")
    good = tmp_path / "good.npz"
    save_checkpoint(good, model)

    with np.load(good) as archive:
        data = {k: archive[k] for k in archive.files}
    dropped = tmp_path / "dropped.npz"
    param_keys = [k for k in data if k.startswith("param.")]
    removed = dict(data)
    removed.pop(param_keys[0])
    np.savez(dropped, **removed)
    with pytest.raises(CheckpointError):
        load_checkpoint(dropped)

    wrong_version = tmp_path / "version.npz"
    meta = json.loads(bytes(data["meta"].tobytes()).decode("utf-8"))
    meta["format_version"] = 99
    data["meta"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    np.savez(wrong_version, **data)
    with pytest.raises(CheckpointError):
        load_checkpoint(wrong_version)


def test_count_parameters():
    model = build_model(CFG, "concat")
    assert count_parameters(model) == sum(p.numel() for p in model.parameters())
    assert count_parameters(model) > count_parameters(build_model(CFG, "none"))
