"""Figure rendering for run directories: loss curves, solution/error maps, slices.

Reads the delimited outputs (history.csv, surface.csv, sweep_summary.csv) and
writes PNG files next to them; nothing here feeds back into training or
evaluation.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["render_run"]


def _read_csv(path: Path) -> dict[str, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {key: [row[key] for row in rows] for key in rows[0]}


def _render_history(path: Path, out: Path) -> Path:
    cols = _read_csv(path)
    step = np.array(cols["step"], dtype=float)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, label in (("total", "total"), ("gover", "governing"),
                        ("bc", "boundary"), ("ic", "initial"), ("data", "data")):
        vals = np.array(cols[name], dtype=float)
        if np.any(vals > 0):
            ax.semilogy(step, np.maximum(vals, 1e-300), label=label, lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(frameon=False, fontsize=9)
    ax.set_title("loss history")
    fig.tight_layout()
    target = out / "loss_history.png"
    fig.savefig(target, dpi=130)
    plt.close(fig)
    return target


def _render_surface(path: Path, out: Path) -> list[Path]:
    cols = _read_csv(path)
    x = np.array(cols["x"], dtype=float)
    t = np.array(cols["t"], dtype=float)
    pred = np.array(cols["u_pred"], dtype=float)
    exact = np.array(cols["u_exact"], dtype=float)
    xs, ts = np.unique(x), np.unique(t)
    nx, nt = xs.size, ts.size
    written = []
    if nx * nt == x.size:
        xi = np.searchsorted(xs, x)
        ti = np.searchsorted(ts, t)
        up = np.full((nx, nt), np.nan)
        ue = np.full((nx, nt), np.nan)
        up[xi, ti] = pred
        ue[xi, ti] = exact
        fig, axes = plt.subplots(1, 3, figsize=(13, 3.8), sharey=True)
        for ax, field, title in ((axes[0], up, "network"),
                                 (axes[1], ue, "exact"),
                                 (axes[2], np.abs(up - ue), "abs error")):
            pc = ax.pcolormesh(ts, xs, field, shading="nearest",
                               cmap="magma" if title == "abs error" else "viridis")
            fig.colorbar(pc, ax=ax)
            ax.set_title(title)
            ax.set_xlabel("t")
        axes[0].set_ylabel("x")
        fig.tight_layout()
        target = out / "solution.png"
        fig.savefig(target, dpi=130)
        plt.close(fig)
        written.append(target)

        fig, ax = plt.subplots(figsize=(7, 4.5))
        for frac in (0.0, 0.5, 0.9):
            k = min(int(frac * (nt - 1)), nt - 1)
            ax.plot(xs, ue[:, k], lw=1.0, color="k", alpha=0.6)
            ax.plot(xs, up[:, k], "--", lw=1.4, label=f"t = {ts[k]:.3g}")
        ax.set_xlabel("x")
        ax.set_ylabel("u")
        ax.set_title("slices (solid: exact, dashed: network)")
        ax.legend(frameon=False, fontsize=9)
        fig.tight_layout()
        target = out / "slices.png"
        fig.savefig(target, dpi=130)
        plt.close(fig)
        written.append(target)
    return written


def _render_sweep(path: Path, out: Path) -> Path:
    cols = _read_csv(path)
    labels, e1, e2 = [], [], []
    for i, seed in enumerate(cols.get("seed", [])):
        if seed == "median":
            labels.append(f"{cols['method'][i]}-{cols['loss'][i]}\n"
                          f"{cols['noise'][i]}@{cols['level'][i]}")
            e1.append(float(cols["error_v_1"][i]))
            e2.append(float(cols["error_v_2"][i]))
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(labels)), 4.5))
    pos = np.arange(len(labels))
    ax.bar(pos - 0.18, e1, width=0.36, label="error v1")
    ax.bar(pos + 0.18, e2, width=0.36, label="error v2")
    ax.set_yscale("log")
    ax.set_xticks(pos, labels, fontsize=8)
    ax.set_ylabel("relative error (median)")
    ax.legend(frameon=False)
    fig.tight_layout()
    target = out / "sweep_errors.png"
    fig.savefig(target, dpi=130)
    plt.close(fig)
    return target


def render_run(run_dir, out_dir=None) -> list[Path]:
    """Render every figure supported by the CSVs present in ``run_dir``."""
    run = Path(run_dir)
    out = Path(out_dir) if out_dir else run
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if (run / "history.csv").exists():
        written.append(_render_history(run / "history.csv", out))
    if (run / "surface.csv").exists():
        written.extend(_render_surface(run / "surface.csv", out))
    if (run / "sweep_summary.csv").exists():
        written.append(_render_sweep(run / "sweep_summary.csv", out))
    if not written:
        raise FileNotFoundError(f"no renderable CSV files in {run}")
    return written
