"""Report figures. Everything renders off-screen to files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# Fixed metadata keeps PNG bytes stable between runs.
_PNG_META = {"Software": None}


def _style(ax) -> None:
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.tick_params(labelsize=9)


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_trajectories(reports: Sequence[dict], path: str | Path, title: str | None = None) -> Path:
    """Loss vs. step on a log scale, one line per trial report."""
    fig, ax = plt.subplots(figsize=(6, 3.8))
    for rep in reports:
        steps = [p[0] for p in rep["trajectory"]]
        losses = [max(p[1], 1e-300) for p in rep["trajectory"]]
        cfg = rep["config"]
        ax.plot(steps, losses, lw=1.4, label=f"{cfg['kind']} lr0={cfg['lr0']:g} wu={cfg['warmup']}")
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title or (reports[0]["problem"] if reports else ""), fontsize=10)
    ax.legend(frameon=False, fontsize=8)
    _style(ax)
    return _save(fig, path)


def plot_retention(rows: Sequence[dict], path: str | Path) -> Path:
    """Bar chart of line counts per stage, annotated with retention."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    names = [r["stage"] for r in rows]
    counts = [r["lines"] for r in rows]
    bars = ax.bar(names, counts, color="#4c72b0", width=0.6)
    for bar, r in zip(bars, rows):
        if r.get("retention") is not None:
            ax.annotate(
                f"{r['retention']:.3f}",
                (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                ha="center",
                va="bottom",
                fontsize=8,
            )
    ax.set_ylabel("sentence pairs")
    _style(ax)
    return _save(fig, path)


def plot_rejections(rejected_by_rule: dict[str, int], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    names = list(rejected_by_rule)
    ax.barh(names, [rejected_by_rule[n] for n in names], color="#c44e52")
    ax.invert_yaxis()
    ax.set_xlabel("rejected pairs")
    _style(ax)
    return _save(fig, path)
