"""Stacked-area (Muller) plots of trajectory CSVs as deterministic SVG."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "varfv"

# tab20-style palette; color of a band is fixed by its atom index
_PALETTE = [
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a",
    "#d62728", "#ff9896", "#9467bd", "#c5b0d5", "#8c564b", "#c49c94",
    "#e377c2", "#f7b6d2", "#7f7f7f", "#c7c7c7", "#bcbd22", "#dbdb8d",
    "#17becf", "#9edae5",
]


def read_trajectory_csv(path: str):
    """Read a t, N, mass_* trajectory written by the forward module."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty trajectory")
    header = lines[0].split(",")
    if header[:2] != ["t", "N"] or len(header) < 3:
        raise ValueError(f"{path}: expected columns t, N, mass_* ...")
    labels = [h.split("_", 1)[1] if "_" in h else h for h in header[2:]]
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    return data[:, 0], data[:, 1], data[:, 2:], labels


def muller_plot(csv_path: str, out_svg: str, title: str | None = None) -> str:
    """Render absolute atom masses as stacked bands (their sum traces N)."""
    t, n, masses, labels = read_trajectory_csv(csv_path)
    colors = [_PALETTE[i % len(_PALETTE)] for i in range(masses.shape[1])]
    fig, ax = plt.subplots(figsize=(8.0, 4.0))
    ax.stackplot(t, masses.T, colors=colors, linewidth=0.0)
    ax.plot(t, n, color="black", linewidth=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("mass")
    ax.set_xlim(t[0], t[-1])
    ax.set_ylim(0.0, None)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_svg, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out_svg
