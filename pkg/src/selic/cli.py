"""Command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 data error
(unreadable images, malformed bitstreams or CSVs), 4 model or backend error
(bad checkpoints, unavailable pretrained backends, diverged training).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bdrate import bd_rate, read_curve_csv
from .codec import decode_image, encode_image
from .config import CODER_BACKENDS, FUSION_KIND_CODES, SEMANTIC_BACKENDS, read_config_file
from .errors import (
    BackendUnavailableError,
    CheckpointError,
    ConfigError,
    DataError,
    DecodeError,
    EncodeError,
    InvalidInputError,
    ShapeError,
    TrainingDivergedError,
)
from .evaluate import (
    evaluate_dataset,
    run_ablation_fusion,
    run_ablation_semantic,
    write_eval_csv,
    write_fusion_csv,
    write_rd_plot,
    write_semantic_csv,
)
from .imagefile import load_image, save_image
from .model import load_checkpoint
from .semantic import SemanticCache, make_captioner, make_embedder
from .training import run_training

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_MODEL = 4

_USAGE_ERRORS = (ConfigError,)
_DATA_ERRORS = (DataError, InvalidInputError, ShapeError, DecodeError, EncodeError)
_MODEL_ERRORS = (CheckpointError, BackendUnavailableError, TrainingDivergedError)


def _semantic_tools(model, backend: str, cache_dir: str | None):
    if model.fusion_kind == "none":
        return None, None, None
    captioner = make_captioner(backend, seed=model.config.seed)
    embedder = make_embedder(backend, model.config.text_embed_dim)
    cache = SemanticCache(cache_dir, captioner, embedder) if cache_dir else None
    return captioner, embedder, cache


def _cmd_encode(args) -> int:
    model, _, _ = load_checkpoint(args.model)
    if args.fusion is not None and args.fusion != model.fusion_kind:
        raise ConfigError(
            f"--fusion {args.fusion} conflicts with the checkpoint's "
            f"fusion kind {model.fusion_kind!r}"
        )
    captioner, embedder, cache = _semantic_tools(model, args.semantic, args.cache_dir)
    image = load_image(args.input)
    result = encode_image(
        image, model, captioner=captioner, embedder=embedder, cache=cache,
        image_id=Path(args.input).stem, coder=args.coder,
    )
    Path(args.output).write_bytes(result.data)
    bpp = 8.0 * len(result.data) / (image.shape[0] * image.shape[1])
    print(f"{args.output}: {len(result.data)} bytes, {bpp:.4f} bpp")
    if result.stats.clipped_symbols:
        print(f"note: {result.stats.clipped_symbols} latent value(s) clipped to the alphabet")
    return EXIT_OK


def _cmd_decode(args) -> int:
    model, _, _ = load_checkpoint(args.model)
    path = Path(args.input)
    if not path.exists():
        raise DataError(f"bitstream not found: {path}")
    image = decode_image(path.read_bytes(), model, coder=args.coder)
    save_image(image, args.output)
    print(f"{args.output}: {image.shape[1]}x{image.shape[0]}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    model, _, _ = load_checkpoint(args.model)
    records, summary = evaluate_dataset(
        model, args.dataset, semantic_backend=args.semantic,
        cache_dir=args.cache_dir, coder=args.coder, stream_dir=args.streams,
    )
    write_eval_csv(records, args.csv)
    print(
        f"{summary.count} image(s): mean {summary.mean_bpp:.4f} bpp, "
        f"{summary.mean_psnr_db:.2f} dB PSNR, MS-SSIM {summary.mean_ms_ssim:.4f}"
    )
    print(f"per-image results written to {args.csv}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = read_config_file(args.config)
    checkpoints = run_training(
        cfg, dataset_dir=args.dataset, out_dir=args.out, resume_from=args.resume
    )
    print(f"trained {len(checkpoints)} epoch(s); last checkpoint: {checkpoints[-1]}")
    return EXIT_OK


def _cmd_bdrate(args) -> int:
    test = read_curve_csv(args.test, label=args.test_label)
    anchor = read_curve_csv(args.anchor, label=args.anchor_label)
    value = bd_rate(test, anchor)
    print(f"BD-rate of {test.label} vs {anchor.label}: {value:+.4f}%")
    return EXIT_OK


def _cmd_ablate_fusion(args) -> int:
    rows, report = run_ablation_fusion(
        {"concat": args.concat, "add": args.add, "mul": args.mul},
        args.dataset, semantic_backend=args.semantic,
        cache_dir=args.cache_dir, coder=args.coder,
    )
    if args.csv:
        write_fusion_csv(rows, args.csv)
    print(report, end="")
    if any(row.status != "ok" for row in rows):
        print("error: one or more strategy checkpoints are missing", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def _cmd_ablate_semantic(args) -> int:
    rows, report = run_ablation_semantic(
        args.with_ckpts, args.without_ckpts, args.dataset,
        semantic_backend=args.semantic, cache_dir=args.cache_dir, coder=args.coder,
    )
    if args.csv:
        write_semantic_csv(rows, args.csv)
    if args.plot:
        write_rd_plot(
            {
                "with semantics": [r.with_point for r in rows],
                "without semantics": [r.without_point for r in rows],
            },
            args.plot,
            title="Semantic branch ablation",
        )
    print(report, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="selic", description="Semantic-enhanced learned image codec"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_coder(p):
        p.add_argument("--coder", choices=CODER_BACKENDS, default="reference",
                       help="entropy coder backend")

    def add_semantic(p):
        p.add_argument("--semantic", choices=SEMANTIC_BACKENDS, default="stub",
                       help="caption/embedding backend")
        p.add_argument("--cache-dir", default=None, help="semantic cache directory")

    p = sub.add_parser("encode", help="compress an image to a .selic file")
    p.add_argument("-i", "--input", required=True, help="input image (PNG/JPEG)")
    p.add_argument("-o", "--output", required=True, help="output .selic path")
    p.add_argument("--model", required=True, help="model checkpoint (.npz)")
    p.add_argument("--fusion", choices=tuple(FUSION_KIND_CODES), default=None,
                   help="assert the checkpoint's fusion kind")
    add_coder(p)
    add_semantic(p)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help="decompress a .selic file to an image")
    p.add_argument("-i", "--input", required=True, help="input .selic path")
    p.add_argument("-o", "--output", required=True, help="output image path")
    p.add_argument("--model", required=True, help="model checkpoint (.npz)")
    add_coder(p)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("eval", help="score encode/decode round trips over a dataset")
    p.add_argument("--dataset", required=True, help="directory of images")
    p.add_argument("--model", required=True, help="model checkpoint (.npz)")
    p.add_argument("--csv", required=True, help="output CSV path")
    p.add_argument("--streams", default=None, help="also write .selic files here")
    add_coder(p)
    add_semantic(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True, help="flat key=value config file")
    p.add_argument("--dataset", default=None, help="override train.dataset_dir")
    p.add_argument("--out", default=None, help="override train.out_dir")
    p.add_argument("--resume", default=None, help="checkpoint to resume from")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("bdrate", help="BD-rate between two RD-curve CSVs")
    p.add_argument("--test", required=True, help="test curve CSV (bpp,psnr_db)")
    p.add_argument("--anchor", required=True, help="anchor curve CSV")
    p.add_argument("--test-label", default=None)
    p.add_argument("--anchor-label", default=None)
    p.set_defaults(func=_cmd_bdrate)

    p = sub.add_parser("ablate", help="fusion-strategy and semantic-branch studies")
    ablate_sub = p.add_subparsers(dest="ablation", required=True)

    pf = ablate_sub.add_parser("fusion", help="compare concat/add/mul checkpoints")
    pf.add_argument("--dataset", required=True)
    pf.add_argument("--concat", default=None, help="concat-fusion checkpoint")
    pf.add_argument("--add", default=None, help="add-fusion checkpoint")
    pf.add_argument("--mul", default=None, help="mul-fusion checkpoint")
    pf.add_argument("--csv", default=None, help="write rows to this CSV")
    add_coder(pf)
    add_semantic(pf)
    pf.set_defaults(func=_cmd_ablate_fusion)

    ps = ablate_sub.add_parser("semantic", help="compare with/without the semantic branch")
    ps.add_argument("--dataset", required=True)
    ps.add_argument("--with", dest="with_ckpts", nargs="+", required=True,
                    help="checkpoints with fusion, one per rate point")
    ps.add_argument("--without", dest="without_ckpts", nargs="+", required=True,
                    help="fusion-free checkpoints, paired by position")
    ps.add_argument("--csv", default=None, help="write rows to this CSV")
    ps.add_argument("--plot", default=None, help="write an RD plot (SVG/PDF)")
    add_coder(ps)
    add_semantic(ps)
    ps.set_defaults(func=_cmd_ablate_semantic)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _MODEL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
