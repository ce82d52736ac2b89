"""Figures written straight to files (Agg backend, no display needed)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .beamformer import ImagePlane  # noqa: E402
from .metrics import Comparison, TargetROI  # noqa: E402


def _show(ax, image: ImagePlane, dynamic_range_db: float, title: str, rois=()):
    g = image.grid
    (x0, x1), (z0, z1) = g.x_extent, g.z_extent
    im = ax.imshow(image.db, cmap="gray", vmin=-dynamic_range_db, vmax=0, aspect="equal",
                   extent=(x0 * 1e3, x1 * 1e3, z1 * 1e3, z0 * 1e3), interpolation="nearest")
    for roi in rois:
        x, z = (c * 1e3 for c in roi.center)
        if roi.kind == "lesion":
            ax.add_patch(plt.Circle((x, z), roi.inner * 1e3, fill=False, color="tab:red", lw=0.8))
            ax.add_patch(plt.Circle((x, z), roi.background[1] * 1e3, fill=False,
                                    color="tab:orange", lw=0.6, ls="--"))
        else:
            ax.add_patch(plt.Rectangle((x - roi.half_width * 1e3, z - roi.half_height * 1e3),
                                       2e3 * roi.half_width, 2e3 * roi.half_height,
                                       fill=False, color="tab:cyan", lw=0.5))
    ax.set_xlabel("x [mm]")
    ax.set_ylabel("z [mm]")
    ax.set_title(title)
    return im


def plot_image(image: ImagePlane, path, dynamic_range_db: float = 40.0, title: str = "",
               rois: tuple[TargetROI, ...] = ()) -> None:
    fig, ax = plt.subplots(figsize=(5, 6))
    im = _show(ax, image, dynamic_range_db, title, rois)
    fig.colorbar(im, ax=ax, label="dB")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_pair(a: ImagePlane, b: ImagePlane, path, labels=("WCI", "HWCI"),
              dynamic_range_db: float = 40.0, rois=()) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(9, 6), sharey=True)
    for ax, image, label in zip(axes, (a, b), labels):
        im = _show(ax, image, dynamic_range_db, label, rois)
    fig.colorbar(im, ax=axes, label="dB", shrink=0.8)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fwhm(comparison: Comparison, path) -> None:
    a, b = comparison.a, comparison.b
    ids = [t[0] for t in a.targets]
    pos = np.arange(len(ids))
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(ids) + 2), 3.5))
    ax.bar(pos - 0.2, a.fwhm * 1e3, 0.4, label=a.method, color="tab:red")
    ax.bar(pos + 0.2, b.fwhm * 1e3, 0.4, label=b.method, color="tab:blue")
    ax.set_xticks(pos, ids, rotation=45, ha="right")
    ax.set_ylabel("lateral FWHM [mm]")
    ax.set_title(f"FWHM change {comparison.mean:.1f} ± {comparison.std:.1f} %")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
