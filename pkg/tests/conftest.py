"""Shared fixtures: deterministic toy images, tiny checkpoints, datasets.

Also prints a one-line PASS/FAIL/SKIP verdict per acceptance test at the end
of the run (see test_acceptance.py).
"""

from __future__ import annotations

import numpy as np
import pytest

from selic.config import tiny_config
from selic.imagefile import save_image
from selic.model import build_model, save_checkpoint
from selic.semantic import StubCaptioner, StubEmbedder


def structured_image(index: int, height: int = 64, width: int = 64) -> np.ndarray:
    """A sinusoid/gradient base with one rectangle: compressible, not flat."""
    yy, xx = np.meshgrid(
        np.linspace(0.0, 1.0, height), np.linspace(0.0, 1.0, width), indexing="ij"
    )
    r = 0.4 + 0.4 * np.sin(2.0 * np.pi * (xx * (index + 1) * 0.5 + 0.1 * index))
    g = 0.5 + 0.3 * yy
    b = 0.3 + 0.3 * xx * yy
    image = np.stack([r, g, b], axis=-1)
    mask = (yy > 0.3 + 0.1 * index) & (yy < 0.5 + 0.1 * index) & (xx > 0.2) & (xx < 0.7)
    image[mask] = (0.9, 0.2 + 0.2 * index, 0.1)
    return np.clip(image, 0.0, 1.0).astype(np.float32)


def stub_embeddings(images: list[np.ndarray], dim: int, seed: int = 0) -> list[np.ndarray]:
    captioner = StubCaptioner(seed)
    embedder = StubEmbedder(dim)
    return [embedder.embed(captioner.caption(img)) for img in images]


@pytest.fixture(scope="session")
def toy_images() -> list[np.ndarray]:
    return [structured_image(i) for i in range(4)]


@pytest.fixture(scope="session")
def toy_dataset_dir(tmp_path_factory, toy_images):
    """Two toy images saved as PNG files, for dataset-level code paths."""
    root = tmp_path_factory.mktemp("dataset")
    for i, image in enumerate(toy_images[:2]):
        save_image(image, root / f"toy{i}.png")
    return root


@pytest.fixture(scope="session")
def tiny_checkpoints(tmp_path_factory):
    """Untrained tiny-preset checkpoints, one per fusion kind."""
    root = tmp_path_factory.mktemp("ckpts")
    paths = {}
    for kind in ("concat", "add", "mul", "none"):
        path = root / f"tiny-{kind}.npz"
        save_checkpoint(path, build_model(tiny_config(), kind))
        paths[kind] = path
    return paths


# ---------------------------------------------------------------------------
# Acceptance verdict lines. Each test in test_acceptance.py covers one
# release criterion; summarize their outcomes explicitly so the run log shows
# one line per criterion.

ACCEPTANCE_LABELS = {
    "test_coder_round_trip": "entropy coder: 1e5-symbol round trip, corrupt streams never crash",
    "test_rate_accounting": "payload bits within [estimate, estimate*1.02 + 64*num_slices]",
    "test_likelihood_values": "discretized Gaussian likelihood: center value and bin sums",
    "test_shapes_and_causality": "latent grid shapes; slice params blind to later slices",
    "test_gradient_checks": "finite-difference gradient match; frozen backends untouched",
    "test_fusion_identities": "fusion identities: add zero, mul one, concat width",
    "test_end_to_end_determinism": "decode reproduces the deterministic reconstruction exactly",
    "test_overfit_smoke": "tiny-model overfit PSNR and lambda rate/distortion ordering",
    "test_bd_rate_oracles": "BD-rate oracles: 0%, -10%, +25%",
    "test_ablation_harnesses": "ablation harnesses emit complete reports",
    "test_fast_coder_differential_fuzz": "fast coder byte-identical to reference (fuzz)",
    "test_fast_coder_throughput_and_canary": "fast coder throughput and buffer canary",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes: dict[str, str] = {}
    for key, verdict in (("failed", "FAIL"), ("error", "FAIL"), ("skipped", "SKIP"), ("passed", "PASS")):
        for report in terminalreporter.stats.get(key, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::" not in nodeid:
                continue
            name = nodeid.split("::")[-1].split("[")[0]
            # Failures win over everything; a pass never overrides them.
            if outcomes.get(name) == "FAIL":
                continue
            outcomes[name] = verdict
    if not outcomes:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, label in ACCEPTANCE_LABELS.items():
        if name in outcomes:
            terminalreporter.write_line(f"{outcomes[name]:<5} {label}")
    for name, verdict in outcomes.items():
        if name not in ACCEPTANCE_LABELS:
            terminalreporter.write_line(f"{verdict:<5} {name}")
