"""Report rendering: training-curve figures next to the delimited log.

Two writers cover different needs: a dependency-light SVG with one polyline
per series (diffable in CI), and a matplotlib PNG for humans.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .errors import EmptyDatasetError


def _series(rows):
    iters = [r.iteration for r in rows]
    counts = [r.n_primitives for r in rows]
    psnrs = [r.psnr for r in rows]
    return iters, counts, psnrs


def write_curves_svg(path, rows, width=640, height=360) -> None:
    """Primitive-count and PSNR series as two labeled polylines."""
    if not rows:
        raise EmptyDatasetError("curve log has no rows")
    iters, counts, psnrs = _series(rows)
    pad = 48

    def scale(values, lo_px, hi_px):
        vmin, vmax = min(values), max(values)
        span = (vmax - vmin) or 1.0
        return [lo_px + (v - vmin) / span * (hi_px - lo_px) for v in values]

    xs = scale(iters, pad, width - pad)
    ys_count = scale(counts, height - pad, pad)
    ys_psnr = scale(psnrs, height - pad, pad)

    def polyline(xs, ys, color):
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
        return f'<polyline fill="none" stroke="{color}" points="{pts}"/>'

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        polyline(xs, ys_count, "#1f77b4"),
        polyline(xs, ys_psnr, "#d62728"),
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="13">iteration</text>',
        f'<text x="16" y="{height / 2:.0f}" font-size="13" '
        f'transform="rotate(-90 16 {height / 2:.0f})" text-anchor="middle">'
        f'primitives (blue) / PSNR dB (red)</text>',
        "</svg>",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")


def write_curves_png(path, rows) -> None:
    """Matplotlib twin-axis figure of the same two series."""
    if not rows:
        raise EmptyDatasetError("curve log has no rows")
    iters, counts, psnrs = _series(rows)
    fig, ax_count = plt.subplots(figsize=(7, 4))
    ax_count.plot(iters, counts, color="tab:blue", label="primitives")
    ax_count.set_xlabel("iteration")
    ax_count.set_ylabel("primitive count", color="tab:blue")
    ax_psnr = ax_count.twinx()
    ax_psnr.plot(iters, psnrs, color="tab:red", alpha=0.7, label="PSNR")
    ax_psnr.set_ylabel("PSNR (dB)", color="tab:red")
    for row in rows:
        if row.event in ("prune", "activate_dog"):
            ax_count.axvline(row.iteration, color="gray", linestyle=":",
                             linewidth=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
