"""Rate-distortion points, curves, and the Bjøntegaard rate delta.

BD-rate fits a cubic polynomial to log10(rate) as a function of PSNR for
each curve, integrates both fits over the overlapping PSNR range, and turns
the average log-rate gap into a percentage. Negative means the test curve
spends fewer bits than the anchor at equal quality.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class RdPoint:
    bpp: float
    psnr_db: float
    ms_ssim: float = math.nan

    def __post_init__(self):
        if not (self.bpp > 0):
            raise DataError(f"bpp must be positive, got {self.bpp}")


@dataclass(frozen=True)
class RdCurve:
    label: str
    points: tuple[RdPoint, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) < 4:
            raise DataError(
                f"curve {self.label!r} has {len(self.points)} points; need >= 4"
            )
        bpps = [p.bpp for p in self.points]
        if any(b2 <= b1 for b1, b2 in zip(bpps, bpps[1:])):
            raise DataError(f"curve {self.label!r} must have strictly increasing bpp")

    @property
    def bpp(self) -> np.ndarray:
        return np.array([p.bpp for p in self.points])

    @property
    def psnr(self) -> np.ndarray:
        return np.array([p.psnr_db for p in self.points])


def bd_rate(test: RdCurve, anchor: RdCurve) -> float:
    """Average percent rate difference of `test` vs `anchor` at equal PSNR."""
    for curve in (test, anchor):
        if not np.all(np.isfinite(curve.psnr)):
            raise DataError(f"curve {curve.label!r} has non-finite PSNR; cannot fit")
    lo = max(test.psnr.min(), anchor.psnr.min())
    hi = min(test.psnr.max(), anchor.psnr.max())
    if not (hi > lo):
        raise DataError(
            f"PSNR ranges of {test.label!r} and {anchor.label!r} do not overlap"
        )
    fit_test = np.polyfit(test.psnr, np.log10(test.bpp), 3)
    fit_anchor = np.polyfit(anchor.psnr, np.log10(anchor.bpp), 3)
    int_test = np.polyint(fit_test)
    int_anchor = np.polyint(fit_anchor)
    area_test = np.polyval(int_test, hi) - np.polyval(int_test, lo)
    area_anchor = np.polyval(int_anchor, hi) - np.polyval(int_anchor, lo)
    avg_log_diff = (area_test - area_anchor) / (hi - lo)
    return float((10.0**avg_log_diff - 1.0) * 100.0)


# ---------------------------------------------------------------------------
# Curve CSV format (version 1): header `bpp,psnr_db[,ms_ssim]`, one point per
# row, bpp strictly increasing. PSNR of infinity serializes as "inf".

CURVE_CSV_FIELDS = ("bpp", "psnr_db", "ms_ssim")


def read_curve_csv(path: str | Path, label: str | None = None) -> RdCurve:
    path = Path(path)
    if not path.exists():
        raise DataError(f"curve file not found: {path}")
    points = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or not {"bpp", "psnr_db"} <= set(reader.fieldnames):
            raise DataError(f"{path}: expected columns bpp,psnr_db")
        for row in reader:
            try:
                points.append(
                    RdPoint(
                        bpp=float(row["bpp"]),
                        psnr_db=float(row["psnr_db"]),
                        ms_ssim=float(row["ms_ssim"]) if row.get("ms_ssim") else math.nan,
                    )
                )
            except ValueError as exc:
                raise DataError(f"{path}: bad row {row}: {exc}") from None
    points.sort(key=lambda p: p.bpp)
    return RdCurve(label=label or path.stem, points=tuple(points))


def write_curve_csv(curve: RdCurve, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CURVE_CSV_FIELDS)
        for p in curve.points:
            writer.writerow([f"{p.bpp:.6f}", _fmt(p.psnr_db), _fmt(p.ms_ssim)])


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    if math.isnan(value):
        return ""
    return f"{value:.4f}"
