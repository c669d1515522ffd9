"""Matplotlib figures written next to the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# no version or date stamps, so figures are reproducible byte for byte
_PNG_META = {"Software": None}


def plot_entropy(results: dict, path, title: str = "Map entropy vs distance") -> None:
    """``results`` maps a label to an object with ``distances``/``entropies``."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, res in results.items():
        ax.plot(res.distances, res.entropies, label=label)
    ax.set_xlabel("distance travelled [m]")
    ax.set_ylabel("map entropy [nats]")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_bench(rows: list, path) -> None:
    """Per-beam MI time against resolution, dense and run-length routes."""
    res = [r["resolution"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog(res, [r["dense_ns"] * 1e-3 for r in rows], "o-", label="dense")
    ax.loglog(res, [r["rle_ns"] * 1e-3 for r in rows], "s-", label="run-length")
    ax.invert_xaxis()
    ax.set_xlabel("resolution [m]")
    ax.set_ylabel("MI time per beam [us]")
    ax.grid(alpha=0.3, which="both")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
