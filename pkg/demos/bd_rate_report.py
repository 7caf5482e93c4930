#!/usr/bin/env python3
"""Compare two rate-distortion curves with the BD-rate metric and plot
them. Uses synthetic curves so it runs without any training."""

from pathlib import Path

from selic import RdCurve, RdPoint, bd_rate, write_curve_csv
from selic.evaluate import write_rd_plot

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

# A plausible anchor and a candidate that spends 12% fewer bits for the
# same quality everywhere. BD-rate integrates the horizontal gap between
# the curves over their shared quality range, so the answer is -12%.
anchor = RdCurve(
    "anchor",
    tuple(RdPoint(bpp, q) for bpp, q in zip((0.2, 0.35, 0.6, 1.1, 2.0), (30.0, 32.5, 35.0, 37.5, 40.0))),
)
candidate = RdCurve("candidate", tuple(RdPoint(p.bpp * 0.88, p.psnr_db) for p in anchor.points))

delta = bd_rate(candidate, anchor)
print(f"BD-rate of candidate vs anchor: {delta:+.2f}%  (negative = fewer bits)")

worse = RdCurve("worse", tuple(RdPoint(p.bpp * 1.25, p.psnr_db) for p in anchor.points))
print(f"BD-rate of a 25% fatter curve:  {bd_rate(worse, anchor):+.2f}%")

for curve in (anchor, candidate, worse):
    path = out_dir / f"{curve.label}.csv"
    write_curve_csv(curve, path)
    print(f"wrote {path}")

plot = out_dir / "rd_curves.svg"
write_rd_plot(
    {c.label: list(c.points) for c in (anchor, candidate, worse)},
    plot,
    title="Synthetic RD comparison",
)
print(f"wrote {plot}")
