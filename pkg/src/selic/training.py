"""Rate-distortion training: L = bpp + lambda * MSE * 255^2.

The distortion term is scaled by 255^2 so the lambda presets land at the
conventional operating points for MSE-optimized codecs.

Determinism contract: the data order for an epoch and the noise/crop/flip
draws for a step are derived from (seed, epoch, step) alone, never from
accumulated RNG state. Resuming from an epoch checkpoint therefore replays
the exact bits a straight-through run would have produced.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig, TrainSettings
from .errors import ConfigError, DataError, TrainingDivergedError
from .imagefile import list_images, load_image
from .model import SelicModel, load_checkpoint, restore_optimizer, save_checkpoint
from .semantic import SemanticCache, make_captioner, make_embedder

logger = logging.getLogger(__name__)

DISTORTION_SCALE = 255.0**2
GRAD_CLIP_NORM = 1.0
ADAM_BETAS = (0.9, 0.999)

TRAIN_LOG_FIELDS = ("step", "bpp", "mse", "loss", "lr")


@dataclass(frozen=True)
class RdLoss:
    """One step's loss decomposition; total = bpp + lambda * mse * 255^2."""

    rate_bpp: float
    distortion_mse: float
    lambda_value: float
    total: float


def lr_for_epoch(settings: TrainSettings, epoch: int) -> float:
    return settings.lr_initial if epoch < settings.lr_drop_epoch else settings.lr_final


def step_generators(seed: int, epoch: int, step: int) -> np.random.Generator:
    """Per-step numpy generator; also reseeds torch for the noise draws."""
    ss = np.random.SeedSequence([seed, epoch, step])
    np_state, torch_state = ss.generate_state(2)
    torch.manual_seed(int(torch_state))
    return np.random.Generator(np.random.PCG64(np_state))


def epoch_order(seed: int, epoch: int, count: int) -> np.ndarray:
    ss = np.random.SeedSequence([seed, epoch])
    return np.random.Generator(np.random.PCG64(ss)).permutation(count)


def compute_loss(out: dict, images: torch.Tensor, lambda_value: float):
    """(loss tensor, RdLoss record); raises when the loss goes non-finite."""
    num_pixels = images.shape[0] * images.shape[2] * images.shape[3]
    bpp = (out["bits_y"] + out["bits_z"]) / num_pixels
    mse = torch.mean((out["x_hat"] - images) ** 2)
    loss = bpp + lambda_value * DISTORTION_SCALE * mse
    if not torch.isfinite(loss):
        raise TrainingDivergedError(
            f"non-finite loss: bpp={float(bpp)!r}, mse={float(mse)!r}, "
            f"lambda={lambda_value}"
        )
    record = RdLoss(
        rate_bpp=float(bpp.detach()),
        distortion_mse=float(mse.detach()),
        lambda_value=lambda_value,
        total=float(loss.detach()),
    )
    return loss, record


def train_step(
    model: SelicModel,
    optimizer: torch.optim.Optimizer,
    images: torch.Tensor,
    embeddings: torch.Tensor | None,
    lambda_value: float,
) -> RdLoss:
    """One gradient update; embeddings None trains the semantic-free path."""
    model.train()
    out = model(images, embeddings)
    loss, record = compute_loss(out, images, lambda_value)
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    torch.nn.utils.clip_grad_norm_(model.parameters(), GRAD_CLIP_NORM)
    optimizer.step()
    return record


def _crop_and_flip(
    image: np.ndarray, crop: int, gen: np.random.Generator
) -> np.ndarray:
    h, w = image.shape[:2]
    if h < crop or w < crop:
        image = np.pad(
            image, ((0, max(0, crop - h)), (0, max(0, crop - w)), (0, 0)), mode="edge"
        )
        h, w = image.shape[:2]
    top = int(gen.integers(0, h - crop + 1))
    left = int(gen.integers(0, w - crop + 1))
    patch = image[top : top + crop, left : left + crop]
    if int(gen.integers(0, 2)):
        patch = patch[:, ::-1]
    return np.ascontiguousarray(patch, dtype=np.float32)


def _batch_tensors(
    images: list[np.ndarray],
    embeddings: list[np.ndarray] | None,
    indices: np.ndarray,
    crop: int,
    gen: np.random.Generator,
):
    crops = [_crop_and_flip(images[i], crop, gen) for i in indices]
    batch = torch.from_numpy(np.stack(crops)).permute(0, 3, 1, 2)
    if embeddings is None:
        return batch, None
    emb = torch.from_numpy(np.stack([embeddings[i] for i in indices]))
    return batch, emb


def load_dataset(dataset_dir: str | Path) -> tuple[list[np.ndarray], list[str], int]:
    """All readable images in a directory; unreadable files are skipped.

    Returns (images, ids, skipped_count); raises DataError when nothing
    loads. Ids are file stems suffixed with a content digest, so the
    semantic cache never collides across files with equal names.
    """
    paths = list_images(dataset_dir)
    images: list[np.ndarray] = []
    ids: list[str] = []
    skipped = 0
    for path in paths:
        try:
            arr = load_image(path)
        except DataError as exc:
            logger.warning("skipping unreadable image: %s", exc)
            skipped += 1
            continue
        images.append(arr)
        digest = hashlib.sha256(arr.tobytes()).hexdigest()[:12]
        ids.append(f"{path.stem}-{digest}")
    if skipped:
        logger.warning("skipped %d unreadable file(s) under %s", skipped, dataset_dir)
    if not images:
        raise DataError(f"no readable images in {dataset_dir}")
    return images, ids, skipped


def _dataset_embeddings(
    cfg: RunConfig, images: list[np.ndarray], ids: list[str], cache_dir: Path
) -> list[np.ndarray]:
    """Full-image embeddings, one per source file (crops share it)."""
    captioner = make_captioner(cfg.semantic_backend, seed=cfg.model.seed)
    embedder = make_embedder(cfg.semantic_backend, cfg.model.text_embed_dim)
    cache = SemanticCache(str(cache_dir), captioner, embedder)
    return [cache.embedding(ids[i], images[i]) for i in range(len(images))]


class TrainLogger:
    """One CSV row per optimization step."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        new = not self.path.exists()
        self._file = open(self.path, "a", newline="", encoding="utf-8")
        self._writer = csv.writer(self._file)
        if new:
            self._writer.writerow(TRAIN_LOG_FIELDS)

    def log(self, step: int, record: RdLoss, lr: float) -> None:
        self._writer.writerow(
            [
                step,
                f"{record.rate_bpp:.6f}",
                f"{record.distortion_mse:.8f}",
                f"{record.total:.6f}",
                f"{lr:g}",
            ]
        )
        self._file.flush()

    def close(self) -> None:
        self._file.close()


def run_training(
    cfg: RunConfig,
    dataset_dir: str | Path | None = None,
    out_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
) -> list[Path]:
    """Full training loop; returns the checkpoint paths in epoch order."""
    settings = cfg.train
    dataset_dir = Path(dataset_dir or settings.dataset_dir)
    out_dir = Path(out_dir or settings.out_dir or "runs")
    out_dir.mkdir(parents=True, exist_ok=True)
    if settings.crop % 64 != 0:
        raise ConfigError(f"train.crop must be a multiple of 64, got {settings.crop}")

    images, ids, _ = load_dataset(dataset_dir)
    semantic = settings.semantic_enabled and cfg.fusion_kind != "none"
    fusion_kind = cfg.fusion_kind if semantic else "none"
    embeddings = (
        _dataset_embeddings(cfg, images, ids, out_dir / "semantic_cache")
        if semantic
        else None
    )

    start_epoch = 0
    global_step = 0
    if resume_from is not None:
        model, meta, opt_arrays = load_checkpoint(resume_from)
        if meta["model"] != dataclasses.asdict(cfg.model):
            raise ConfigError("resume checkpoint was trained with a different config")
        start_epoch = int(meta.get("epoch", -1)) + 1
        global_step = int(meta.get("global_step", 0))
        optimizer = torch.optim.Adam(
            model.parameters(), lr=settings.lr_initial, betas=ADAM_BETAS
        )
        restore_optimizer(optimizer, model, opt_arrays)
    else:
        model = SelicModel(cfg.model, fusion_kind)
        optimizer = torch.optim.Adam(
            model.parameters(), lr=settings.lr_initial, betas=ADAM_BETAS
        )

    log = TrainLogger(out_dir / "train_log.csv")
    checkpoints: list[Path] = []
    batches_per_epoch = max(1, len(images) // settings.batch_size)
    try:
        for epoch in range(start_epoch, settings.epochs):
            lr = lr_for_epoch(settings, epoch)
            for group in optimizer.param_groups:
                group["lr"] = lr
            order = epoch_order(cfg.model.seed, epoch, len(images))
            for step in range(batches_per_epoch):
                lo = step * settings.batch_size
                indices = order[lo : lo + settings.batch_size]
                if indices.size == 0:
                    indices = order[: settings.batch_size]
                gen = step_generators(cfg.model.seed, epoch, step)
                batch, emb = _batch_tensors(images, embeddings, indices, settings.crop, gen)
                record = train_step(model, optimizer, batch, emb, cfg.model.lambda_value)
                log.log(global_step, record, lr)
                global_step += 1
            path = out_dir / f"ckpt-epoch{epoch:04d}.npz"
            save_checkpoint(path, model, optimizer, epoch=epoch, global_step=global_step)
            checkpoints.append(path)
    finally:
        log.close()
    return checkpoints


def overfit(
    images: list[np.ndarray],
    config,
    lambda_value: float,
    steps: int,
    fusion_kind: str = "concat",
    embeddings: list[np.ndarray] | None = None,
) -> tuple[SelicModel, list[RdLoss]]:
    """Repeatedly fit one fixed batch; the smoke test for trainability.

    Image dims must be multiples of 64 (no cropping happens here).
    """
    if not images:
        raise DataError("overfit needs at least one image")
    batch = torch.from_numpy(np.stack(images).astype(np.float32)).permute(0, 3, 1, 2)
    emb = None
    if fusion_kind != "none":
        if embeddings is None:
            raise ConfigError("semantic fusion enabled: pass per-image embeddings")
        emb = torch.from_numpy(np.stack(embeddings).astype(np.float32))
    model = SelicModel(config, fusion_kind)
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-3, betas=ADAM_BETAS)
    history: list[RdLoss] = []
    for step in range(steps):
        step_generators(config.seed, 0, step)
        history.append(train_step(model, optimizer, batch, emb, lambda_value))
    model.eval()
    return model, history
