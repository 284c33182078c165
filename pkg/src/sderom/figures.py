"""Figure rendering for the report pipeline.

Everything draws through the Agg backend straight to files; no
interactive state is touched.  Figures carry fixed metadata so reruns
produce comparable files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


__all__ = [
    "save_spectrum_figure",
    "save_trace_figure",
    "save_profile_figure",
]

_META = {"Software": "sderom"}


def _new_axes(xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    return fig, ax


def _finish(fig, ax, path: str, legend: bool) -> None:
    if legend:
        ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_META)
    plt.close(fig)


def save_spectrum_figure(path: str, sigma: np.ndarray) -> None:
    """Singular value decay on a log scale."""
    fig, ax = _new_axes("index", "singular value")
    ax.semilogy(np.arange(1, len(sigma) + 1), sigma, marker=".", lw=1.0)
    _finish(fig, ax, path, legend=False)


def save_trace_figure(
    path: str,
    times: np.ndarray,
    traces: dict[str, np.ndarray],
    ylabel: str,
    yscale: str = "linear",
) -> None:
    """One or more labeled traces over time."""
    fig, ax = _new_axes("t", ylabel)
    for label, values in traces.items():
        ax.plot(times, values, lw=1.0, label=label)
    ax.set_yscale(yscale)
    _finish(fig, ax, path, legend=len(traces) > 1)


def save_profile_figure(
    path: str,
    x: np.ndarray,
    curves: dict[str, np.ndarray],
    ylabel: str,
) -> None:
    """Spatial profiles on one mesh."""
    fig, ax = _new_axes("x", ylabel)
    for label, values in curves.items():
        ax.plot(x, values, lw=1.0, label=label)
    _finish(fig, ax, path, legend=len(curves) > 1)
