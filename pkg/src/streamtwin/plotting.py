"""Figures rendered from a run directory's CSVs (headers only, never column order)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import read_csv  # noqa: E402

FIT_FIELDS = (("lambda", "memory length (slots)"), ("alpha", "quality weight"),
              ("beta", "switch weight"), ("gamma", "rebuffer weight"))


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # fixed metadata keeps the files byte-stable across runs
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_learning_curves(run_dir: Path, window: int = 10) -> Path | None:
    """Mean episode reward per scheme with a min/max envelope across seeds."""
    path = run_dir / "summary.csv"
    if not path.exists():
        return None
    rows = read_csv(path)
    by = {}
    for r in rows:
        by.setdefault(r["scheme"], {}).setdefault(int(r["seed"]), []).append(
            (int(r["episode"]), float(r["mean_reward"])))
    fig, ax = plt.subplots(figsize=(7, 4))
    for scheme, seeds in sorted(by.items()):
        curves = []
        for pts in seeds.values():
            y = np.array([v for _, v in sorted(pts)])
            if len(y) >= window:
                y = np.convolve(y, np.ones(window) / window, mode="valid")
            curves.append(y)
        n = min(len(c) for c in curves)
        stack = np.array([c[:n] for c in curves])
        x = np.arange(n)
        ax.plot(x, stack.mean(axis=0), label=scheme)
        ax.fill_between(x, stack.min(axis=0), stack.max(axis=0), alpha=0.2)
    ax.set_xlabel("episode")
    ax.set_ylabel(f"mean reward ({window}-episode moving average)")
    ax.legend()
    return _save(fig, run_dir / "figures" / "learning_curve.png")


def plot_fit_report(fit_csv: Path, dest: Path) -> Path | None:
    rows = read_csv(fit_csv)
    if not rows:
        return None
    fig, axes = plt.subplots(2, 2, figsize=(8, 5.5), sharex=True)
    users = sorted({int(r["user"]) for r in rows})
    for ax, (key, label) in zip(axes.ravel(), FIT_FIELDS):
        for u in users:
            pts = [(int(r["episode"]), float(r[key])) for r in rows if int(r["user"]) == u]
            ax.plot([p[0] for p in pts], [p[1] for p in pts], lw=1, label=f"user {u}")
        ax.set_ylabel(label)
    for ax in axes[1]:
        ax.set_xlabel("episode")
    if len(users) <= 12:
        axes[0, 0].legend(fontsize=6, ncol=2)
    return _save(fig, dest)


def plot_comparison(run_dir: Path) -> Path | None:
    path = run_dir / "comparison_summary.csv"
    if not path.exists():
        return None
    rows = read_csv(path)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    names = [r["scheme"] for r in rows]
    ax.bar(names, [float(r["mean_normalized"]) for r in rows], color="tab:blue")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("mean normalized PQoE")
    return _save(fig, run_dir / "figures" / "comparison.png")


def render_all(run_dir) -> list[Path]:
    run_dir = Path(run_dir)
    made = [plot_learning_curves(run_dir), plot_comparison(run_dir)]
    for fit in sorted((run_dir / "runs").glob("*/seed*/fit_report.csv")):
        scheme, seed = fit.parent.parent.name, fit.parent.name
        made.append(plot_fit_report(fit, run_dir / "figures" / f"fit_{scheme}_{seed}.png"))
    return [p for p in made if p is not None]
