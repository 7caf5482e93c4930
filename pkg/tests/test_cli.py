"""End-to-end CLI tests, run in process through main(argv)."""

import numpy as np
import pytest

from selic.cli import main
from selic.codec import decode_image
from selic.config import RunConfig, TrainSettings, tiny_config, write_config_file
from selic.errors import BackendUnavailableError
from selic.fastcoder import load_fast_coder
from selic.imagefile import load_image
from selic.metrics import quantize_u8
from selic.model import load_checkpoint


def _fast_coder_available() -> bool:
    try:
        load_fast_coder()
        return True
    except BackendUnavailableError:
        return False


def test_encode_decode_round_trip(tmp_path, tiny_checkpoints, toy_dataset_dir, capsys):
    ckpt = str(tiny_checkpoints["concat"])
    source = str(toy_dataset_dir / "toy0.png")
    stream = tmp_path / "toy0.selic"
    out = tmp_path / "toy0.decoded.png"

    rc = main(["encode", "-i", source, "-o", str(stream), "--model", ckpt])
    assert rc == 0
    assert "bytes" in capsys.readouterr().out
    assert stream.stat().st_size > 23

    rc = main(["decode", "-i", str(stream), "-o", str(out), "--model", ckpt])
    assert rc == 0
    assert "64x64" in capsys.readouterr().out

    # The saved image is the quantized decoder output, nothing else.
    model, _, _ = load_checkpoint(ckpt)
    recon = decode_image(stream.read_bytes(), model)
    expected = quantize_u8(recon).astype(np.float32) / 255.0
    assert np.array_equal(load_image(out), expected)


def test_encode_fusion_flag_must_match(tmp_path, tiny_checkpoints, toy_dataset_dir, capsys):
    rc = main([
        "encode", "-i", str(toy_dataset_dir / "toy0.png"),
        "-o", str(tmp_path / "x.selic"),
        "--model", str(tiny_checkpoints["concat"]), "--fusion", "add",
    ])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_encode_missing_input_is_data_error(tmp_path, tiny_checkpoints):
    rc = main([
        "encode", "-i", str(tmp_path / "absent.png"),
        "-o", str(tmp_path / "x.selic"), "--model", str(tiny_checkpoints["concat"]),
    ])
    assert rc == 3


def test_encode_missing_checkpoint_is_model_error(tmp_path, toy_dataset_dir):
    rc = main([
        "encode", "-i", str(toy_dataset_dir / "toy0.png"),
        "-o", str(tmp_path / "x.selic"), "--model", str(tmp_path / "absent.npz"),
    ])
    assert rc == 4


def test_encode_with_fast_coder(tmp_path, tiny_checkpoints, toy_dataset_dir):
    rc = main([
        "encode", "-i", str(toy_dataset_dir / "toy0.png"),
        "-o", str(tmp_path / "fast.selic"),
        "--model", str(tiny_checkpoints["concat"]), "--coder", "fast",
    ])
    if _fast_coder_available():
        assert rc == 0
        rc = main([
            "decode", "-i", str(tmp_path / "fast.selic"),
            "-o", str(tmp_path / "fast.png"),
            "--model", str(tiny_checkpoints["concat"]), "--coder", "fast",
        ])
        assert rc == 0
    else:
        assert rc == 4  # no silent fallback to the reference coder


def test_decode_rejects_corrupt_stream(tmp_path, tiny_checkpoints, toy_dataset_dir):
    ckpt = str(tiny_checkpoints["concat"])
    stream = tmp_path / "toy.selic"
    assert main(["encode", "-i", str(toy_dataset_dir / "toy0.png"),
                 "-o", str(stream), "--model", ckpt]) == 0
    data = bytearray(stream.read_bytes())
    data[:4] = b"JUNK"
    bad = tmp_path / "bad.selic"
    bad.write_bytes(bytes(data))
    assert main(["decode", "-i", str(bad), "-o", str(tmp_path / "y.png"),
                 "--model", ckpt]) == 3
    assert main(["decode", "-i", str(tmp_path / "absent.selic"),
                 "-o", str(tmp_path / "y.png"), "--model", ckpt]) == 3


def test_eval_writes_csv(tmp_path, tiny_checkpoints, toy_dataset_dir, capsys):
    csv_path = tmp_path / "eval.csv"
    rc = main([
        "eval", "--dataset", str(toy_dataset_dir),
        "--model", str(tiny_checkpoints["concat"]), "--csv", str(csv_path),
        "--cache-dir", str(tmp_path / "cache"),
    ])
    assert rc == 0
    assert "image(s)" in capsys.readouterr().out
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "image,bytes,bpp,psnr_db,ms_ssim"
    assert len(lines) == 3


def test_train_from_config(tmp_path, toy_dataset_dir):
    cfg = RunConfig(
        model=tiny_config(lambda_value=0.03),
        train=TrainSettings(epochs=1, batch_size=2, lr_drop_epoch=0, crop=64),
    )
    cfg_path = tmp_path / "run.cfg"
    write_config_file(cfg, cfg_path)
    out_dir = tmp_path / "run"
    rc = main([
        "train", "--config", str(cfg_path),
        "--dataset", str(toy_dataset_dir), "--out", str(out_dir),
    ])
    assert rc == 0
    assert (out_dir / "ckpt-epoch0000.npz").exists()
    assert (out_dir / "train_log.csv").exists()


def test_train_rejects_unknown_config_key(tmp_path, toy_dataset_dir):
    cfg_path = tmp_path / "bad.cfg"
    cfg_path.write_text("widgets = 3\n")
    rc = main(["train", "--config", str(cfg_path),
               "--dataset", str(toy_dataset_dir), "--out", str(tmp_path / "o")])
    assert rc == 2


def _write_curve(path, rate_factor: float) -> None:
    rows = ["bpp,psnr_db"]
    for bpp, db in ((0.2, 30.0), (0.35, 32.5), (0.6, 35.0), (1.1, 37.5), (2.0, 40.0)):
        rows.append(f"{bpp * rate_factor},{db}")
    path.write_text("\n".join(rows) + "\n")


def test_bdrate_command(tmp_path, capsys):
    test_csv = tmp_path / "test.csv"
    anchor_csv = tmp_path / "anchor.csv"
    _write_curve(test_csv, 0.9)
    _write_curve(anchor_csv, 1.0)
    rc = main(["bdrate", "--test", str(test_csv), "--anchor", str(anchor_csv)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "BD-rate" in out and "-10.0" in out


def test_bdrate_rejects_short_curve(tmp_path):
    short = tmp_path / "short.csv"
    short.write_text("bpp,psnr_db\n0.2,30\n0.6,35\n1.1,37\n")
    anchor = tmp_path / "anchor.csv"
    _write_curve(anchor, 1.0)
    assert main(["bdrate", "--test", str(short), "--anchor", str(anchor)]) == 3


def test_ablate_fusion_command(tmp_path, tiny_checkpoints, toy_dataset_dir, capsys):
    csv_path = tmp_path / "fusion.csv"
    rc = main([
        "ablate", "fusion", "--dataset", str(toy_dataset_dir),
        "--concat", str(tiny_checkpoints["concat"]),
        "--add", str(tiny_checkpoints["add"]),
        "--mul", str(tiny_checkpoints["mul"]),
        "--csv", str(csv_path), "--cache-dir", str(tmp_path / "cache"),
    ])
    assert rc == 0
    assert "strategy" in capsys.readouterr().out
    assert csv_path.read_text().startswith("strategy,status,mean_bpp,mean_psnr_db")


def test_ablate_fusion_missing_checkpoint(tmp_path, tiny_checkpoints, toy_dataset_dir, capsys):
    rc = main([
        "ablate", "fusion", "--dataset", str(toy_dataset_dir),
        "--concat", str(tiny_checkpoints["concat"]),
        "--cache-dir", str(tmp_path / "cache"),
    ])
    assert rc == 3
    assert "missing" in capsys.readouterr().err


def test_ablate_semantic_command(tmp_path, tiny_checkpoints, toy_dataset_dir, capsys):
    plot = tmp_path / "ablation.svg"
    rc = main([
        "ablate", "semantic", "--dataset", str(toy_dataset_dir),
        "--with", str(tiny_checkpoints["concat"]),
        "--without", str(tiny_checkpoints["none"]),
        "--csv", str(tmp_path / "sem.csv"), "--plot", str(plot),
        "--cache-dir", str(tmp_path / "cache"),
    ])
    assert rc == 0
    assert "Semantic branch ablation" in capsys.readouterr().out
    assert plot.exists() and plot.stat().st_size > 0


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["encode"]) == 2  # missing required arguments
    capsys.readouterr()
