"""Report figures: per-column real vs synthetic distributions and association heatmaps."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import MISSING_LABEL  # noqa: E402
from .schema import Dataset  # noqa: E402


def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def column_figure(real: Dataset, synth: Dataset, column: str, path) -> Path:
    spec = real.schema[column]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    if spec.is_numeric:
        r, s = real[column], synth[column]
        r, s = r[np.isfinite(r)], s[np.isfinite(s)]
        both = np.concatenate([r, s])
        bins = np.histogram_bin_edges(both, bins=40) if both.size else 10
        ax.hist(r, bins=bins, density=True, alpha=0.55, label="real")
        ax.hist(s, bins=bins, density=True, alpha=0.55, label="synthetic")
        ax.set_ylabel("density")
    else:
        lab = lambda v: MISSING_LABEL if v is None else str(v)  # noqa: E731
        r = [lab(v) for v in real[column]]
        s = [lab(v) for v in synth[column]]
        cats = sorted(set(r) | set(s))
        pos = np.arange(len(cats))
        share = lambda vals: np.array([vals.count(c) for c in cats]) / max(len(vals), 1)  # noqa: E731
        ax.bar(pos - 0.2, share(r), width=0.4, label="real")
        ax.bar(pos + 0.2, share(s), width=0.4, label="synthetic")
        ax.set_xticks(pos, cats, rotation=45 if len(cats) > 6 else 0, ha="right" if len(cats) > 6 else "center")
        ax.set_ylabel("share")
    ax.set_title(column)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def association_figure(real_m: np.ndarray, synth_m: np.ndarray, names, path) -> Path:
    diff = np.abs(real_m - synth_m)
    fig, axes = plt.subplots(1, 3, figsize=(13, 4.2))
    for ax, m, title, cmap, lim in ((axes[0], real_m, "real", "coolwarm", (-1, 1)),
                                    (axes[1], synth_m, "synthetic", "coolwarm", (-1, 1)),
                                    (axes[2], diff, "|difference|", "Reds", (0, 2))):
        im = ax.imshow(m, cmap=cmap, vmin=lim[0], vmax=lim[1])
        ax.set_xticks(range(len(names)), names, rotation=90)
        ax.set_yticks(range(len(names)), names)
        ax.set_title(title)
        fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def write_matrix_csv(matrix: np.ndarray, names, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["", *names])
        for name, row in zip(names, matrix):
            w.writerow([name, *(repr(float(v)) for v in row)])
    return path


def render_report_figures(real: Dataset, synth: Dataset, real_m: np.ndarray, synth_m: np.ndarray,
                          outdir) -> list[str]:
    """Write every figure and matrix dump into ``outdir``; returns the file names."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = real.schema.names
    written = [column_figure(real, synth, c, outdir / f"column_{_safe(c)}.png") for c in names]
    written.append(association_figure(real_m, synth_m, names, outdir / "association.png"))
    written.append(write_matrix_csv(real_m, names, outdir / "association_real.csv"))
    written.append(write_matrix_csv(synth_m, names, outdir / "association_synthetic.csv"))
    written.append(write_matrix_csv(real_m - synth_m, names, outdir / "association_difference.csv"))
    return [p.name for p in written]
