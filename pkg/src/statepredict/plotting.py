"""Figures written next to the CSV outputs.

Uses the non-interactive Agg backend and strips PNG metadata so the same
data renders to the same bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import IoFailure  # noqa: E402
from .resources import CPU_MAX, MEM_MAX, EnvelopeStep  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.5,
    "svg.hashsalt": "statepredict",
}

# max red, min green, most probable blue
COLORS = {"max": "tab:red", "min": "tab:green", "most": "tab:blue"}


# metadata keys that would otherwise embed versions or timestamps
_STRIP = {".png": {"Software": None}, ".svg": {"Date": None}, ".pdf": {"CreationDate": None, "Producer": None}}


def _save(fig, path) -> None:
    try:
        fig.savefig(path, dpi=100, metadata=_STRIP.get(Path(path).suffix.lower()))
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from exc
    finally:
        plt.close(fig)


def plot_envelope(env: Sequence[EnvelopeStep], path, title: Optional[str] = None) -> None:
    """CPU (top) and memory (bottom) envelopes over the horizon."""
    with plt.rc_context(RC):
        fig, (ax_cpu, ax_mem) = plt.subplots(2, 1, sharex=True, figsize=(4.5, 4.5))
        steps = [e.step for e in env]
        for ax, attr, label, top in ((ax_cpu, "cpu", "CPU [%]", CPU_MAX), (ax_mem, "mem", "memory [MB]", MEM_MAX)):
            series = [getattr(e, attr) for e in env]
            # most probable drawn last and dashed: it often coincides with max
            for k, name, ls in ((0, "min", "-"), (2, "max", "-"), (1, "most", "--")):
                ax.plot(steps, [s[k] for s in series], ls, marker="o", color=COLORS[name], label=name)
            ax.set_ylim(0, top * 1.05)
            ax.set_ylabel(label)
            ax.grid(True, alpha=0.3)
        ax_cpu.legend(loc="upper right", ncol=3)
        ax_mem.set_xlabel("prediction step")
        if steps:
            ax_mem.set_xticks(steps)
        if title:
            ax_cpu.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def plot_precision(report, path) -> None:
    """Bar chart of precision per (criterion, failures) cell."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        labels = [
            ("S-Match" if r.criterion == "s_match" else "W-Match") + (" + E" if r.failures_enabled else "")
            for r in report.rows
        ]
        vals = [r.precision_percent for r in report.rows]
        bars = ax.bar(labels, vals, color="tab:blue")
        for b, v in zip(bars, vals):
            ax.annotate(f"{v:.1f}", (b.get_x() + b.get_width() / 2, v), ha="center", va="bottom")
        ax.set_ylim(0, 105)
        ax.set_ylabel("precision [%]")
        fig.tight_layout()
        _save(fig, path)
