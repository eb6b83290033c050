"""Static SVG chart of mean CSD against request rate, one line per mode."""

from __future__ import annotations

from pathlib import Path
from typing import Union

from .config import MODES


def emit_plot(rows: list[dict], path: Union[str, Path]) -> Path:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as e:  # optional dependency
        raise RuntimeError("plotting needs matplotlib (pip install 'artifact[plot]')") from e
    # fixed metadata keeps the SVG byte-stable between runs
    plt.rcParams["svg.hashsalt"] = "foggyedge"
    fig, ax = plt.subplots(figsize=(6, 4))
    for mode in MODES:
        pts = sorted((r["rate"], r["mean_csd"]) for r in rows
                     if r["mode"] == mode and r["mean_csd"] is not None)
        if pts:
            ax.plot([p[0] for p in pts], [p[1] * 1000 for p in pts], marker="o", label=mode)
    ax.set_xlabel("requests per second")
    ax.set_ylabel("mean CSD (ms)")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out
