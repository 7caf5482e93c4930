"""The full codec network and its checkpoint format.

A model is the main transform pair, the hyper pair, the slice-conditional
parameter networks, the factorized prior over z, and (unless built with
fusion kind "none") the semantic fusion module. All weights are initialized
under a forked RNG seeded from the config so construction is reproducible;
the fusion module is initialized last so models that differ only in fusion
kind share identical base weights.
"""

from __future__ import annotations

import dataclasses
import json
import re
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .autoencoder import AnalysisTransform, SynthesisTransform
from .config import FUSION_KIND_CODES, ModelConfig
from .entropy import (
    ChannelContext,
    FactorizedPrior,
    HyperAnalysis,
    HyperSynthesis,
    gaussian_likelihood,
    quantize,
    rate_bits,
)
from .errors import CheckpointError, ConfigError
from .fusion import FusionModule

CHECKPOINT_VERSION = 1


class SelicModel(nn.Module):
    """Transforms + entropy model + optional semantic fusion."""

    def __init__(self, config: ModelConfig, fusion_kind: str = "concat"):
        super().__init__()
        if fusion_kind not in FUSION_KIND_CODES:
            raise ConfigError(
                f"fusion kind must be one of {tuple(FUSION_KIND_CODES)}, got {fusion_kind!r}"
            )
        self.config = config
        self.fusion_kind = fusion_kind
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed)
            self.ga3 = AnalysisTransform(config)
            self.gs = SynthesisTransform(config)
            self.ha = HyperAnalysis(config)
            self.hs = HyperSynthesis(config)
            self.charm = ChannelContext(config)
            self.zprior = FactorizedPrior(config.n_filters)
            self.fusion = None if fusion_kind == "none" else FusionModule(config, fusion_kind)

    def fuse(self, y3: torch.Tensor, embeddings: torch.Tensor | None) -> torch.Tensor:
        """Apply semantic fusion when enabled; pass-through otherwise."""
        if embeddings is None:
            return y3
        if self.fusion is None:
            raise ConfigError("model was built with fusion kind 'none'; drop the embedding")
        return self.fusion(y3, embeddings)

    def forward(self, images: torch.Tensor, embeddings: torch.Tensor | None = None) -> dict:
        """Training pass with additive-noise quantization.

        The noisy surrogates feed both the rate terms and the synthesis
        transform. Returns the raw (unclamped) reconstruction plus total
        information content of y and z in bits.
        """
        y = self.fuse(self.ga3(images), embeddings)
        z = self.ha(y)
        z_tilde = quantize(z, torch.zeros(()), "noise")
        hyper = self.hs(z_tilde)

        decoded: list[torch.Tensor] = []
        bits_y = images.new_zeros(())
        for i, y_slice in enumerate(self.charm.split(y)):
            params = self.charm.predict_slice_params(hyper, decoded, i)
            noisy = quantize(y_slice, params.mu, "noise")
            bits_y = bits_y + rate_bits(gaussian_likelihood(noisy, params.mu, params.sigma))
            decoded.append(noisy)
        y_tilde = torch.cat(decoded, dim=1)

        z_flat = z_tilde.transpose(0, 1).reshape(z_tilde.shape[1], -1)
        bits_z = rate_bits(self.zprior.likelihood(z_flat))

        return {
            "x_hat": self.gs(y_tilde),
            "bits_y": bits_y,
            "bits_z": bits_z,
            "y": y,
            "z": z,
        }

    @torch.no_grad()
    def latents(self, images: torch.Tensor, embeddings: torch.Tensor | None = None):
        """Deterministic (y, z) for coding; no quantization applied yet."""
        y = self.fuse(self.ga3(images), embeddings)
        return y, self.ha(y)


def build_model(config: ModelConfig, fusion_kind: str = "concat") -> SelicModel:
    model = SelicModel(config, fusion_kind)
    model.eval()
    return model


# ---------------------------------------------------------------------------
# Checkpoints: a single npz archive of little-endian float32 arrays under
# canonical parameter names, plus a JSON metadata entry, plus (optionally)
# first/second Adam moments per parameter and the step counters needed to
# resume training exactly.

_LIST_PATTERNS = (
    (re.compile(r"\bstages\.(\d+)"), r"stage\1", re.compile(r"\bstage(\d+)"), r"stages.\1"),
    (re.compile(r"\bnets\.(\d+)"), r"net\1", re.compile(r"\bnet(\d+)"), r"nets.\1"),
    (re.compile(r"\b_matrices\.(\d+)"), r"matrix\1", re.compile(r"\bmatrix(\d+)"), r"_matrices.\1"),
    (re.compile(r"\b_biases\.(\d+)"), r"cdfbias\1", re.compile(r"\bcdfbias(\d+)"), r"_biases.\1"),
    (re.compile(r"\b_gates\.(\d+)"), r"gate\1", re.compile(r"\bgate(\d+)"), r"_gates.\1"),
)


def canonical_param_name(state_key: str) -> str:
    """Map a module state-dict key to its stable checkpoint name."""
    name = state_key
    for fwd, repl, _, _ in _LIST_PATTERNS:
        name = fwd.sub(repl, name)
    if name.endswith(".weight"):
        name = name[: -len(".weight")] + ".w"
    elif name.endswith(".bias"):
        name = name[: -len(".bias")] + ".b"
    return name


def state_key_from_canonical(name: str) -> str:
    key = name
    if key.endswith(".w"):
        key = key[:-2] + ".weight"
    elif key.endswith(".b"):
        key = key[:-2] + ".bias"
    for _, _, back, repl in _LIST_PATTERNS:
        key = back.sub(repl, key)
    return key


def save_checkpoint(
    path: str | Path,
    model: SelicModel,
    optimizer: torch.optim.Optimizer | None = None,
    epoch: int | None = None,
    global_step: int | None = None,
) -> None:
    arrays: dict[str, np.ndarray] = {}
    for key, tensor in model.state_dict().items():
        arrays["param." + canonical_param_name(key)] = (
            tensor.detach().cpu().numpy().astype("<f4")
        )

    meta = {
        "format_version": CHECKPOINT_VERSION,
        "fusion_kind": model.fusion_kind,
        "model": dataclasses.asdict(model.config),
    }
    if epoch is not None:
        meta["epoch"] = int(epoch)
    if global_step is not None:
        meta["global_step"] = int(global_step)
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)

    if optimizer is not None:
        params = list(model.parameters())
        names = _ordered_param_names(model)
        state = optimizer.state_dict()["state"]
        for idx, name in enumerate(names):
            entry = state.get(idx)
            if entry is None:
                continue
            arrays[f"opt.{name}.m"] = entry["exp_avg"].cpu().numpy().astype("<f4")
            arrays[f"opt.{name}.v"] = entry["exp_avg_sq"].cpu().numpy().astype("<f4")
            arrays[f"opt.{name}.step"] = np.asarray(float(entry["step"]), dtype="<f8")
        assert len(params) == len(names)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        np.savez(f, **arrays)
    tmp.replace(path)


def _ordered_param_names(model: SelicModel) -> list[str]:
    return [canonical_param_name(k) for k, _ in model.named_parameters()]


def load_checkpoint(path: str | Path):
    """Load a checkpoint. Returns (model, metadata dict, optimizer arrays).

    The optimizer arrays map canonical parameter names to (m, v, step)
    triples; empty when the checkpoint carries no optimizer state.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as archive:
            data = {k: archive[k] for k in archive.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if "meta" not in data:
        raise CheckpointError(f"checkpoint {path} has no metadata entry")
    meta = json.loads(bytes(data["meta"].tobytes()).decode("utf-8"))
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {meta.get('format_version')!r}"
        )
    config = ModelConfig(**meta["model"])
    model = SelicModel(config, meta["fusion_kind"])

    state = {}
    for key in data:
        if key.startswith("param."):
            name = key[len("param.") :]
            state[state_key_from_canonical(name)] = torch.from_numpy(
                np.ascontiguousarray(data[key])
            )
    missing, unexpected = model.load_state_dict(state, strict=False)
    if missing or unexpected:
        raise CheckpointError(
            f"checkpoint {path} does not match the model: "
            f"missing {sorted(missing)}, unexpected {sorted(unexpected)}"
        )
    model.eval()

    opt_arrays: dict[str, tuple[np.ndarray, np.ndarray, float]] = {}
    for key in data:
        if key.startswith("opt.") and key.endswith(".m"):
            name = key[len("opt.") : -len(".m")]
            opt_arrays[name] = (
                data[key],
                data[f"opt.{name}.v"],
                float(data[f"opt.{name}.step"]),
            )
    return model, meta, opt_arrays


def restore_optimizer(
    optimizer: torch.optim.Optimizer,
    model: SelicModel,
    opt_arrays: dict[str, tuple[np.ndarray, np.ndarray, float]],
) -> None:
    """Install saved Adam moments into a freshly built optimizer."""
    names = _ordered_param_names(model)
    params = [p for group in optimizer.param_groups for p in group["params"]]
    if len(params) != len(names):
        raise CheckpointError("optimizer does not cover exactly the model parameters")
    for idx, name in enumerate(names):
        if name not in opt_arrays:
            continue
        m, v, step = opt_arrays[name]
        optimizer.state[params[idx]] = {
            "step": torch.tensor(step, dtype=torch.float32),
            "exp_avg": torch.from_numpy(np.ascontiguousarray(m)),
            "exp_avg_sq": torch.from_numpy(np.ascontiguousarray(v)),
        }


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
