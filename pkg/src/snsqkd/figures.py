"""Figure rendering for scan reports. Writes PNG files next to the delimited
output; uses the Agg backend so it works headless."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

RATE_FLOOR = 1e-12


def render_scan_figures(rows: list[dict], out_path: str) -> list[str]:
    """Render the standard figures for a distance scan.

    `rows` are the scan records (dicts with distance_km, rate_per_pulse,
    delta_slice, plus the series label under "series"). Returns the list of
    files written. Figures go next to `out_path` with suffixes replacing its
    extension.
    """
    base, _ = os.path.splitext(out_path)
    written: list[str] = []

    series: dict[str, list[dict]] = {}
    for row in rows:
        series.setdefault(str(row.get("series", "scan")), []).append(row)

    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    any_positive = False
    for label, pts in series.items():
        pts = sorted(pts, key=lambda r: r["distance_km"])
        xs = [r["distance_km"] for r in pts]
        ys = [max(r["rate_per_pulse"], RATE_FLOOR) for r in pts]
        if any(r["rate_per_pulse"] > 0.0 for r in pts):
            any_positive = True
        ax.semilogy(xs, ys, marker="o", markersize=3, label=label)
    ax.set_xlabel("distance (km)")
    ax.set_ylabel("key rate (bits per pulse pair)")
    ax.set_ylim(bottom=RATE_FLOOR)
    ax.grid(True, which="both", alpha=0.3)
    if len(series) > 1 or any_positive:
        ax.legend(fontsize=8)
    rate_path = f"{base}_rate.png"
    fig.savefig(rate_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(rate_path)

    if any("delta_slice" in r for r in rows):
        fig, ax = plt.subplots(figsize=(7.0, 5.0))
        for label, pts in series.items():
            pts = sorted(pts, key=lambda r: r["distance_km"])
            xs = [r["distance_km"] for r in pts if "delta_slice" in r]
            ys = [r["delta_slice"] for r in pts if "delta_slice" in r]
            if xs:
                ax.plot(xs, ys, marker="o", markersize=3, label=label)
        ax.set_xlabel("distance (km)")
        ax.set_ylabel("optimal phase-slice width (rad)")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        slice_path = f"{base}_slice_width.png"
        fig.savefig(slice_path, dpi=150, bbox_inches="tight")
        plt.close(fig)
        written.append(slice_path)

    return written
