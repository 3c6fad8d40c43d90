"""PNG figures for analysis reports and frame geometry (matplotlib, Agg)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .framework import AXES  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_lattice_lengths(trace, path) -> Path:
    """Diagonal lattice lengths against tau."""
    diag = trace.diagonal()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for k in range(diag.shape[1]):
        ax.plot(trace.taus, diag[:, k], label=f"L_{AXES[k]}")
    ax.set_xlabel("tau")
    ax.set_ylabel("lattice length")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_poisson(report, path) -> Path:
    """Per-step Poisson ratios, plotted at the right end of each step."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    taus = np.asarray(report.taus)
    for name, nu in report.nu.items():
        ax.plot(taus[1:], nu, label=f"nu_{name}")
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("tau")
    ax.set_ylabel("Poisson ratio")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_operator_norms(report, path) -> Path:
    """Fixed-lag transfer-operator norms against the later parameter."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if report.norms.size:
        ax.plot(report.norms[:, 1], report.norms[:, 2], label=f"lag {report.lag:g}")
    ax.axhline(1.0, color="k", lw=0.8)
    ax.set_xlabel("tau")
    ax.set_ylabel("operator norm")
    ax.legend()
    ax.grid(alpha=0.3)
    return _save(fig, path)


def report_figures(trace, report, directory, stem: str = "report") -> list[Path]:
    directory = Path(directory)
    return [
        plot_lattice_lengths(trace, directory / f"{stem}_lattice.png"),
        plot_poisson(report, directory / f"{stem}_poisson.png"),
        plot_operator_norms(report, directory / f"{stem}_opnorm.png"),
    ]


def plot_segments(segments, kinds, path, axes: tuple[int, int] = (1, 2)) -> Path:
    """Project line segments onto two coordinate axes (bars dark, cables red)."""
    segments = np.asarray(segments, dtype=float)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    a, b = axes
    for seg, kind in zip(segments, kinds):
        style = {"color": "0.2", "lw": 1.6} if kind == "bar" else {"color": "tab:red", "lw": 0.8}
        ax.plot(seg[:, a], seg[:, b], **style)
    ax.set_aspect("equal")
    ax.set_xlabel(AXES[a])
    ax.set_ylabel(AXES[b])
    return _save(fig, path)
