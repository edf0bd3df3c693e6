"""Figure rendering for the CLI report paths.

Figures accompany the CSV tables; the CSV stays the source of truth.
The Agg backend is forced so rendering works headless, and PNG metadata
is stripped for reproducible bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path: str) -> None:
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)


def scaling_figure(result, path: str, title: str = "commutator error scaling") -> None:
    """Log-log measured error vs N with the fitted envelope bound."""
    ns = np.array([r.N for r in result.rows], dtype=float)
    errs = np.array([r.error for r in result.rows], dtype=float)
    bounds = np.array([r.bound for r in result.rows], dtype=float)

    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.loglog(ns, errs, "o-", label="measured")
    ax.loglog(ns, bounds, "--", color="gray",
              label=f"envelope c M^3 N^(-1/2), c={result.fitted_c:.3g}")
    ax.set_xlabel("N (commutator blocks)")
    ax.set_ylabel("operator-norm error")
    ax.set_title(f"{title} (slope {result.slope:.3f})")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def universality_figure(rows, path: str) -> None:
    """Closure dimension against the u/su targets per system size."""
    ns = [r.n for r in rows]
    x = np.arange(len(ns))
    width = 0.35

    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    ax.bar(x - width / 2, [r.closure_dim for r in rows], width, label="closure")
    ax.bar(x + width / 2, [r.target_dim_u for r in rows], width,
           label="full unitary algebra", alpha=0.6)
    ax.set_xticks(x, [str(n) for n in ns])
    ax.set_xlabel("qubits on the circle")
    ax.set_ylabel("real Lie-algebra dimension")
    ax.set_title("closure vs target on the shift-invariant sector")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
