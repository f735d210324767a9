"""Matplotlib rendering with byte-stable SVG output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.family": "serif",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "figure.figsize": (5.0, 3.4),
    "svg.hashsalt": "amplowdeg",
    "svg.fonttype": "path",
}

FINITE_T_COLORS = ["tab:orange", "tab:green", "tab:purple", "tab:brown", "tab:pink"]


def _save(fig, path):
    path = Path(path)
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise OSError(f"cannot write figure to {path}: {exc}") from exc
    finally:
        plt.close(fig)


def emit_svg(curves: list, path, xlabel: str = "", ylabel: str = "", title: str | None = None,
             hlines: list | None = None):
    """Draw a list of curve dicts and write an SVG.

    A curve has ``x``, ``y``, ``label`` and a ``kind`` in
    {"solid", "dashed", "points"}; points may carry ``yerr``. Optional
    ``color`` overrides the default. ``hlines`` holds (y, label) pairs drawn as
    black dashed horizontal lines.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        k_dash = 0
        for c in curves:
            kind = c.get("kind", "solid")
            color = c.get("color")
            if kind == "solid":
                ax.plot(c["x"], c["y"], "-", color=color, label=c.get("label"))
            elif kind == "dashed":
                color = color or FINITE_T_COLORS[k_dash % len(FINITE_T_COLORS)]
                k_dash += 1
                ax.plot(c["x"], c["y"], "--", color=color, label=c.get("label"))
            elif kind == "points":
                ax.errorbar(c["x"], c["y"], yerr=c.get("yerr"), fmt="o", mfc="none", color=color,
                            capsize=2, label=c.get("label"))
            else:
                raise ValueError(f"unknown curve kind {kind!r}")
        for y, label in hlines or []:
            ax.axhline(y, color="k", ls="--", lw=0.8, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if ax.get_legend_handles_labels()[1]:
            ax.legend(loc="best")
        fig.tight_layout()
        _save(fig, path)
