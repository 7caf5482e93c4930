"""PNG/JPEG loading and saving for the [0,1] float image convention."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")


def load_image(path: str | Path) -> np.ndarray:
    """Read an image file as an (H, W, 3) float32 array in [0,1]."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"image not found: {path}")
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.float32) / 255.0
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    if arr.size == 0:
        raise DataError(f"empty image: {path}")
    return arr


def save_image(image: np.ndarray, path: str | Path) -> None:
    """Write a [0,1] float image as an 8-bit image file."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    data = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(data).save(str(path))


def list_images(directory: str | Path) -> list[Path]:
    """Sorted image files directly under `directory`."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"dataset directory not found: {directory}")
    paths = sorted(
        p for p in directory.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
    )
    if not paths:
        raise DataError(f"no {'/'.join(IMAGE_EXTENSIONS)} files in {directory}")
    return paths
