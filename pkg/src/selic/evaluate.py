"""Dataset evaluation and the fusion/semantic ablation harnesses.

bpp here is always ground truth: total file bits (header included) divided
by original pixel count, never the model's rate estimate.

CSV schemas (version 1):
  eval:             image,bytes,bpp,psnr_db,ms_ssim
  ablation fusion:  strategy,status,mean_bpp,mean_psnr_db
  ablation semantic: point,bpp_with,psnr_with,bpp_without,psnr_without,delta_psnr_db
PSNR of infinity serializes as "inf"; unavailable MS-SSIM (images too small
for the 5-scale window) serializes as an empty field.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .bdrate import RdPoint
from .codec import decode_image, encode_image
from .errors import ConfigError, DataError, InvalidInputError
from .imagefile import list_images, load_image
from .metrics import ms_ssim, psnr
from .model import SelicModel, load_checkpoint
from .semantic import SemanticCache, make_captioner, make_embedder

EVAL_CSV_FIELDS = ("image", "bytes", "bpp", "psnr_db", "ms_ssim")
FUSION_CSV_FIELDS = ("strategy", "status", "mean_bpp", "mean_psnr_db")
SEMANTIC_CSV_FIELDS = (
    "point",
    "bpp_with",
    "psnr_with",
    "bpp_without",
    "psnr_without",
    "delta_psnr_db",
)

# Reference operating points from large-scale training of this architecture,
# shown in reports for context only; desk-scale checkpoints land elsewhere.
FUSION_REFERENCE = {
    "concat": (0.890, 37.68),
    "add": (0.895, 37.32),
    "mul": (0.900, 37.16),
}
SEMANTIC_REFERENCE_GAP_DB = (0.10, 0.15)


@dataclass(frozen=True)
class EvalRecord:
    image: str
    num_bytes: int
    bpp: float
    psnr_db: float
    ms_ssim: float  # nan when the image is too small for the metric


@dataclass(frozen=True)
class EvalSummary:
    count: int
    mean_bpp: float
    mean_psnr_db: float
    mean_ms_ssim: float


def _semantic_tools(model: SelicModel, backend: str, cache_dir: str | Path | None):
    if model.fusion_kind == "none":
        return None, None, None
    captioner = make_captioner(backend, seed=model.config.seed)
    embedder = make_embedder(backend, model.config.text_embed_dim)
    cache = SemanticCache(str(cache_dir), captioner, embedder) if cache_dir else None
    return captioner, embedder, cache


def evaluate_dataset(
    model: SelicModel,
    dataset_dir: str | Path,
    *,
    semantic_backend: str = "stub",
    cache_dir: str | Path | None = None,
    coder: str = "reference",
    stream_dir: str | Path | None = None,
) -> tuple[list[EvalRecord], EvalSummary]:
    """Encode + decode every image in a directory and score the round trip."""
    captioner, embedder, cache = _semantic_tools(model, semantic_backend, cache_dir)
    records: list[EvalRecord] = []
    if stream_dir is not None:
        Path(stream_dir).mkdir(parents=True, exist_ok=True)
    for path in list_images(dataset_dir):
        image = load_image(path)
        result = encode_image(
            image, model, captioner=captioner, embedder=embedder, cache=cache,
            image_id=path.stem, coder=coder,
        )
        if stream_dir is not None:
            (Path(stream_dir) / (path.stem + ".selic")).write_bytes(result.data)
        recon = decode_image(result.data, model, coder=coder)
        try:
            ssim_val = ms_ssim(image, recon)
        except InvalidInputError:
            ssim_val = math.nan
        records.append(
            EvalRecord(
                image=path.name,
                num_bytes=len(result.data),
                bpp=8.0 * len(result.data) / (image.shape[0] * image.shape[1]),
                psnr_db=psnr(image, recon),
                ms_ssim=ssim_val,
            )
        )
    return records, summarize(records)


def summarize(records: list[EvalRecord]) -> EvalSummary:
    if not records:
        raise DataError("no evaluation records to summarize")
    n = len(records)
    ssims = [r.ms_ssim for r in records if not math.isnan(r.ms_ssim)]
    return EvalSummary(
        count=n,
        mean_bpp=sum(r.bpp for r in records) / n,
        mean_psnr_db=sum(r.psnr_db for r in records) / n,
        mean_ms_ssim=sum(ssims) / len(ssims) if ssims else math.nan,
    )


def _csv_num(value: float) -> str:
    if math.isnan(value):
        return ""
    if math.isinf(value):
        return "inf"
    return f"{value:.6f}"


def write_eval_csv(records: list[EvalRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(EVAL_CSV_FIELDS)
        for r in records:
            writer.writerow(
                [r.image, r.num_bytes, f"{r.bpp:.6f}", _csv_num(r.psnr_db), _csv_num(r.ms_ssim)]
            )


# ---------------------------------------------------------------------------
# Ablation harnesses


@dataclass(frozen=True)
class FusionAblationRow:
    strategy: str
    status: str  # "ok" or "missing"
    mean_bpp: float = math.nan
    mean_psnr_db: float = math.nan


def run_ablation_fusion(
    checkpoints: dict[str, str | Path | None],
    dataset_dir: str | Path,
    *,
    semantic_backend: str = "stub",
    cache_dir: str | Path | None = None,
    coder: str = "reference",
) -> tuple[list[FusionAblationRow], str]:
    """Per-strategy mean (bpp, PSNR) over a dataset; returns (rows, report)."""
    rows: list[FusionAblationRow] = []
    for strategy in ("concat", "add", "mul"):
        path = checkpoints.get(strategy)
        if path is None or not Path(path).exists():
            rows.append(FusionAblationRow(strategy=strategy, status="missing"))
            continue
        model, _, _ = load_checkpoint(path)
        if model.fusion_kind != strategy:
            raise ConfigError(
                f"checkpoint {path} holds a {model.fusion_kind!r} model, "
                f"expected {strategy!r}"
            )
        _, summary = evaluate_dataset(
            model, dataset_dir, semantic_backend=semantic_backend,
            cache_dir=cache_dir, coder=coder,
        )
        rows.append(
            FusionAblationRow(
                strategy=strategy, status="ok",
                mean_bpp=summary.mean_bpp, mean_psnr_db=summary.mean_psnr_db,
            )
        )
    return rows, format_fusion_report(rows)


def format_fusion_report(rows: list[FusionAblationRow]) -> str:
    lines = [
        "Fusion strategy comparison (dataset means)",
        f"{'strategy':<10} {'mean bpp':>10} {'mean PSNR (dB)':>15}",
    ]
    for row in rows:
        if row.status != "ok":
            lines.append(f"{row.strategy:<10} {'(checkpoint missing)':>26}")
        else:
            lines.append(f"{row.strategy:<10} {row.mean_bpp:>10.4f} {row.mean_psnr_db:>15.2f}")
    lines.append("")
    lines.append("Reference values from large-scale training (context only, not targets):")
    for strategy, (bpp, db) in FUSION_REFERENCE.items():
        lines.append(f"  {strategy:<8} {bpp:.3f} bpp, {db:.2f} dB")
    return "\n".join(lines) + "\n"


def write_fusion_csv(rows: list[FusionAblationRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(FUSION_CSV_FIELDS)
        for r in rows:
            writer.writerow([r.strategy, r.status, _csv_num(r.mean_bpp), _csv_num(r.mean_psnr_db)])


@dataclass(frozen=True)
class SemanticAblationRow:
    point: int
    with_point: RdPoint
    without_point: RdPoint

    @property
    def delta_psnr_db(self) -> float:
        return self.with_point.psnr_db - self.without_point.psnr_db


def run_ablation_semantic(
    checkpoints_with: list[str | Path],
    checkpoints_without: list[str | Path],
    dataset_dir: str | Path,
    *,
    semantic_backend: str = "stub",
    cache_dir: str | Path | None = None,
    coder: str = "reference",
) -> tuple[list[SemanticAblationRow], str]:
    """Paired RD points for semantic vs semantic-free checkpoints.

    Checkpoints pair by position (one pair per rate point); the with-model
    must use fusion, the without-model must not.
    """
    if len(checkpoints_with) != len(checkpoints_without):
        raise ConfigError(
            f"{len(checkpoints_with)} semantic checkpoints vs "
            f"{len(checkpoints_without)} baseline checkpoints; pair them 1:1"
        )
    if not checkpoints_with:
        raise ConfigError("need at least one checkpoint pair")
    rows: list[SemanticAblationRow] = []
    for i, (path_with, path_without) in enumerate(zip(checkpoints_with, checkpoints_without)):
        model_with, _, _ = load_checkpoint(path_with)
        model_without, _, _ = load_checkpoint(path_without)
        if model_with.fusion_kind == "none":
            raise ConfigError(f"{path_with} has no fusion module; order the arguments as with, without")
        if model_without.fusion_kind != "none":
            raise ConfigError(f"{path_without} uses fusion {model_without.fusion_kind!r}; expected none")
        _, s_with = evaluate_dataset(
            model_with, dataset_dir, semantic_backend=semantic_backend,
            cache_dir=cache_dir, coder=coder,
        )
        _, s_without = evaluate_dataset(model_without, dataset_dir, coder=coder)
        rows.append(
            SemanticAblationRow(
                point=i,
                with_point=RdPoint(bpp=s_with.mean_bpp, psnr_db=s_with.mean_psnr_db),
                without_point=RdPoint(bpp=s_without.mean_bpp, psnr_db=s_without.mean_psnr_db),
            )
        )
    return rows, format_semantic_report(rows)


def format_semantic_report(rows: list[SemanticAblationRow]) -> str:
    lines = [
        "Semantic branch ablation (dataset means per rate point)",
        f"{'point':<6} {'bpp w/':>9} {'PSNR w/':>9} {'bpp w/o':>9} {'PSNR w/o':>9} {'dPSNR':>8}",
    ]
    for r in rows:
        lines.append(
            f"{r.point:<6} {r.with_point.bpp:>9.4f} {r.with_point.psnr_db:>9.2f} "
            f"{r.without_point.bpp:>9.4f} {r.without_point.psnr_db:>9.2f} "
            f"{r.delta_psnr_db:>+8.3f}"
        )
    lo, hi = SEMANTIC_REFERENCE_GAP_DB
    lines.append("")
    lines.append(
        f"Reference gap from large-scale training: approximately {lo:.2f}-{hi:.2f} dB "
        "PSNR in favor of the semantic branch (context only, not a target)."
    )
    return "\n".join(lines) + "\n"


def write_semantic_csv(rows: list[SemanticAblationRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(SEMANTIC_CSV_FIELDS)
        for r in rows:
            writer.writerow(
                [
                    r.point,
                    f"{r.with_point.bpp:.6f}",
                    _csv_num(r.with_point.psnr_db),
                    f"{r.without_point.bpp:.6f}",
                    _csv_num(r.without_point.psnr_db),
                    _csv_num(r.delta_psnr_db),
                ]
            )


def write_rd_plot(
    series: dict[str, list[RdPoint]], path: str | Path, title: str = "Rate-distortion"
) -> None:
    """Render RD curves as a static vector graphic (needs matplotlib)."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise DataError(
            "plotting requires matplotlib; install the 'plots' extra"
        ) from exc
    fig, ax = plt.subplots(figsize=(5, 4))
    for label, points in series.items():
        pts = sorted(points, key=lambda p: p.bpp)
        ax.plot([p.bpp for p in pts], [p.psnr_db for p in pts], marker="o", label=label)
    ax.set_xlabel("bpp")
    ax.set_ylabel("PSNR (dB)")
    ax.set_title(title)
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(str(path))
    plt.close(fig)
