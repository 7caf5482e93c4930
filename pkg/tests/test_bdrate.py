import math

import numpy as np
import pytest

from selic.bdrate import RdCurve, RdPoint, bd_rate, read_curve_csv, write_curve_csv
from selic.errors import DataError

PSNRS = (30.0, 32.5, 35.0, 37.5, 40.0)
BPPS = (0.2, 0.35, 0.6, 1.1, 2.0)


def make_curve(label: str, rate_factor: float = 1.0, psnr_shift: float = 0.0) -> RdCurve:
    points = [
        RdPoint(bpp=b * rate_factor, psnr_db=p + psnr_shift)
        for b, p in zip(BPPS, PSNRS)
    ]
    return RdCurve(label=label, points=tuple(points))


def test_scaled_rate_oracles():
    anchor = make_curve("anchor")
    assert abs(bd_rate(make_curve("same"), anchor)) <= 1e-9
    assert bd_rate(make_curve("cheaper", rate_factor=0.9), anchor) == pytest.approx(-10.0, abs=1e-6)
    assert bd_rate(make_curve("pricier", rate_factor=1.25), anchor) == pytest.approx(25.0, abs=1e-6)
    # Inverse factor from the anchor's side.
    assert bd_rate(anchor, make_curve("a2", rate_factor=1.25)) == pytest.approx(-20.0, abs=1e-6)


def test_better_quality_means_negative_rate():
    anchor = make_curve("anchor")
    better = make_curve("better", psnr_shift=0.5)
    assert bd_rate(better, anchor) < 0
    assert bd_rate(anchor, better) > 0


def test_curve_validation():
    with pytest.raises(DataError):
        RdPoint(bpp=0.0, psnr_db=30.0)
    with pytest.raises(DataError):
        RdCurve("short", tuple(RdPoint(b, p) for b, p in zip(BPPS[:3], PSNRS[:3])))
    with pytest.raises(DataError):
        RdCurve(
            "flat",
            (RdPoint(0.2, 30), RdPoint(0.2, 31), RdPoint(0.3, 32), RdPoint(0.4, 33)),
        )


def test_bd_rate_requires_overlap_and_finite_psnr():
    anchor = make_curve("anchor")
    disjoint = make_curve("disjoint", psnr_shift=100.0)
    with pytest.raises(DataError):
        bd_rate(disjoint, anchor)
    infinite = RdCurve(
        "inf",
        (RdPoint(0.2, 30), RdPoint(0.4, 33), RdPoint(0.8, math.inf), RdPoint(1.6, 39)),
    )
    with pytest.raises(DataError):
        bd_rate(infinite, anchor)


def test_curve_csv_round_trip(tmp_path):
    curve = make_curve("run-a")
    path = tmp_path / "curve.csv"
    write_curve_csv(curve, path)
    loaded = read_curve_csv(path, label="run-a")
    assert np.allclose(loaded.bpp, curve.bpp)
    assert np.allclose(loaded.psnr, curve.psnr)
    assert loaded.label == "run-a"
    assert read_curve_csv(path).label == "curve"


def test_curve_csv_sorts_and_validates(tmp_path):
    messy = tmp_path / "messy.csv"
    messy.write_text(
        "bpp,psnr_db\n1.0,36\n0.25,30\n0.5,33\n2.0,39\n", encoding="utf-8"
    )
    curve = read_curve_csv(messy)
    assert list(curve.bpp) == [0.25, 0.5, 1.0, 2.0]

    with pytest.raises(DataError):
        read_curve_csv(tmp_path / "absent.csv")

    bad_header = tmp_path / "header.csv"
    bad_header.write_text("rate,quality\n1,2\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_curve_csv(bad_header)

    bad_row = tmp_path / "row.csv"
    bad_row.write_text("bpp,psnr_db\n0.5,thirty\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_curve_csv(bad_row)
