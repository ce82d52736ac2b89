"""Objective image-quality metrics: lateral FWHM, gCNR, sharpness, and
WCI-vs-HWCI comparison statistics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata

from .beamformer import ImagePlane
from .errors import ComparisonError, InvalidParameterError, UnresolvedTargetError
from .grid import ImagingGrid

GCNR_BINS = 256
MIN_REGION = 100


@dataclass(frozen=True)
class TargetROI:
    """Rectangular pin window or circular lesion with a background annulus.

    For ``kind="lesion"`` the interior is the disk of radius ``inner`` and the
    background the annulus ``background = (r_in, r_out)``; ``half_width`` and
    ``half_height`` then bound the annulus.
    """

    center: tuple[float, float]
    half_width: float
    half_height: float
    kind: str = "pin"
    id: str = ""
    inner: float | None = None
    background: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in ("pin", "lesion"):
            raise InvalidParameterError(f"unknown ROI kind {self.kind!r}")
        if not (self.half_width > 0 and self.half_height > 0):
            raise InvalidParameterError("ROI half sizes must be positive")
        if self.kind == "lesion":
            if self.inner is None or self.background is None:
                raise InvalidParameterError("lesion ROI needs inner radius and background annulus")
            r0, r1 = self.background
            if not 0 < self.inner <= r0 < r1:
                raise InvalidParameterError("need 0 < inner <= background[0] < background[1]")

    @classmethod
    def pin(cls, x, z, half_width=1.5e-3, half_height=1.5e-3, id=""):
        return cls((x, z), half_width, half_height, "pin", id)

    @classmethod
    def lesion(cls, x, z, inner, background, id=""):
        r = background[1]
        return cls((x, z), r, r, "lesion", id, inner, tuple(background))

    def check_inside(self, grid: ImagingGrid) -> None:
        (xa, xb), (za, zb) = grid.x_extent, grid.z_extent
        x, z = self.center
        tol = 1e-9
        if (x - self.half_width < xa - tol or x + self.half_width > xb + tol
                or z - self.half_height < za - tol or z + self.half_height > zb + tol):
            raise InvalidParameterError(f"ROI {self.id or self.center} leaves the image grid")

    def window(self, grid: ImagingGrid) -> tuple[slice, slice]:
        """(row, column) slices of the bounding box."""
        self.check_inside(grid)
        x, z = self.center
        cols = np.flatnonzero(np.abs(grid.x - x) <= self.half_width + 1e-12)
        rows = np.flatnonzero(np.abs(grid.z - z) <= self.half_height + 1e-12)
        return slice(rows[0], rows[-1] + 1), slice(cols[0], cols[-1] + 1)

    def regions(self, grid: ImagingGrid) -> tuple[np.ndarray, np.ndarray]:
        """Boolean (interior, background) masks for a lesion ROI."""
        if self.kind != "lesion":
            raise InvalidParameterError("regions are defined for lesion ROIs only")
        self.check_inside(grid)
        X, Z = np.meshgrid(grid.x, grid.z)
        r = np.hypot(X - self.center[0], Z - self.center[1])
        return r <= self.inner, (r >= self.background[0]) & (r <= self.background[1])


# --- FWHM ---------------------------------------------------------------------------

def peak_position(image: ImagePlane, roi: TargetROI) -> tuple[float, float]:
    rows, cols = roi.window(image.grid)
    sub = image.intensity[rows, cols]
    j, i = np.unravel_index(np.argmax(sub), sub.shape)
    return float(image.grid.x[cols][i]), float(image.grid.z[rows][j])


def _crossing(prof, x, i, step, half):
    k = i
    while 0 <= k + step < prof.size:
        if prof[k + step] <= half:
            a, b = prof[k], prof[k + step]
            return x[k] + (a - half) / (a - b) * (x[k + step] - x[k])
        k += step
    raise UnresolvedTargetError("lateral profile does not drop below half maximum inside the ROI")


def fwhm_lateral(image: ImagePlane, roi: TargetROI) -> float:
    """Lateral full width at half maximum (m) of the peak inside ``roi``.

    The profile is the intensity row through the peak; both half-maximum
    crossings are found by linear interpolation between samples.
    """
    rows, cols = roi.window(image.grid)
    sub = image.intensity[rows, cols]
    if not np.any(sub > 0):
        raise UnresolvedTargetError("ROI is empty")
    j, i = np.unravel_index(np.argmax(sub), sub.shape)
    prof = sub[j]
    x = image.grid.x[cols]
    half = 0.5 * prof[i]
    return float(_crossing(prof, x, i, 1, half) - _crossing(prof, x, i, -1, half))


# --- gCNR ---------------------------------------------------------------------------

class GcnrResult(NamedTuple):
    value: float
    degenerate: bool = False

    def __float__(self):
        return self.value


def gcnr_samples(inside, outside, n_bins: int = GCNR_BINS,
                 binning: str = "linear") -> GcnrResult:
    """1 minus the overlap of normalised histograms on shared bins.

    ``binning="linear"`` spans the pooled intensity range with ``n_bins``
    equal bins; ``"rank"`` bins the pooled ranks instead, which makes the
    result invariant to any strictly monotone intensity remapping.
    """
    a = np.asarray(inside, dtype=float).ravel()
    b = np.asarray(outside, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise InvalidParameterError("empty region")
    if n_bins < 1:
        raise InvalidParameterError("n_bins must be positive")
    pooled = np.concatenate([a, b])
    if binning == "rank":
        pooled = rankdata(pooled)
    elif binning != "linear":
        raise InvalidParameterError(f"unknown binning {binning!r}")
    lo, hi = pooled.min(), pooled.max()
    if not hi > lo:
        return GcnrResult(0.0, True)
    edges = np.linspace(lo, hi, n_bins + 1)
    ha = np.histogram(pooled[:a.size], edges)[0] / a.size
    hb = np.histogram(pooled[a.size:], edges)[0] / b.size
    return GcnrResult(float(np.clip(1.0 - np.minimum(ha, hb).sum(), 0.0, 1.0)))


def gcnr(image: ImagePlane, interior: np.ndarray, background: np.ndarray,
         n_bins: int = GCNR_BINS, binning: str = "linear") -> GcnrResult:
    """gCNR between two disjoint pixel masks of ``image`` (linear intensity)."""
    interior = np.asarray(interior, dtype=bool)
    background = np.asarray(background, dtype=bool)
    if interior.shape != image.intensity.shape or background.shape != image.intensity.shape:
        raise InvalidParameterError("region masks must match the image shape")
    if np.any(interior & background):
        raise InvalidParameterError("regions overlap")
    if interior.sum() < MIN_REGION or background.sum() < MIN_REGION:
        raise InvalidParameterError(f"each region needs at least {MIN_REGION} pixels")
    return gcnr_samples(image.intensity[interior], image.intensity[background], n_bins, binning)


# --- sharpness ----------------------------------------------------------------------

def sharpness(image: ImagePlane, crop: float = 0.9) -> float:
    """Gradient-magnitude surrogate for no-reference sharpness.

    Mean L1 forward-difference gradient ``|d/dx| + |d/dz|`` of the dB view
    over the central ``crop`` fraction of the image, times 100.  Only useful
    for ranking images of the same scene.
    """
    db = image.db
    nz, nx = db.shape
    if nz < 16 or nx < 16:
        raise InvalidParameterError("sharpness needs at least a 16 x 16 image")
    mz = int(round(0.5 * (1 - crop) * nz))
    mx = int(round(0.5 * (1 - crop) * nx))
    c = db[mz:nz - mz, mx:nx - mx]
    return float(100 * (np.abs(np.diff(c, axis=1)).mean() + np.abs(np.diff(c, axis=0)).mean()))


# --- reports ------------------------------------------------------------------------

@dataclass
class MetricReport:
    """Metrics for one image; ``targets`` rows are (id, x, z, fwhm_m)."""

    method: str
    targets: list[tuple[str, float, float, float]] = field(default_factory=list)
    gcnr: dict[str, float] = field(default_factory=dict)
    sharpness: float | None = None

    def __post_init__(self):
        for t in self.targets:
            if not t[3] > 0:
                raise InvalidParameterError(f"FWHM of target {t[0]} must be positive")
        for k, v in self.gcnr.items():
            if not 0 <= v <= 1:
                raise InvalidParameterError(f"gCNR of {k} outside [0, 1]")

    @property
    def fwhm(self) -> np.ndarray:
        return np.array([t[3] for t in self.targets], dtype=float)

    @property
    def cv(self) -> float:
        return coefficient_of_variation(self.fwhm)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "x", "z", "fwhm_m", "method"])
        for tid, x, z, f in self.targets:
            w.writerow([tid, repr(float(x)), repr(float(z)), repr(float(f)), self.method])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, method: str | None = None) -> "MetricReport":
        rows = list(csv.DictReader(io.StringIO(text)))
        if method is None:
            method = rows[0]["method"] if rows else ""
        targets = [(r["id"], float(r["x"]), float(r["z"]), float(r["fwhm_m"]))
                   for r in rows if r["method"] == method]
        return cls(method, targets)


def evaluate(image: ImagePlane, rois: Sequence[TargetROI], method: str,
             n_bins: int = GCNR_BINS) -> MetricReport:
    targets, contrast = [], {}
    for k, roi in enumerate(rois):
        tid = roi.id or f"{roi.kind}{k}"
        if roi.kind == "pin":
            targets.append((tid, roi.center[0], roi.center[1], fwhm_lateral(image, roi)))
        else:
            contrast[tid] = gcnr(image, *roi.regions(image.grid), n_bins=n_bins).value
    return MetricReport(method, targets, contrast, sharpness(image))


def coefficient_of_variation(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(np.std(v, ddof=1) / np.mean(v))


@dataclass(frozen=True)
class Comparison:
    """``improvement`` is the per-target (a - b) / a in percent, so it is
    positive when ``b`` is narrower.  Swapping the arguments flips the sign
    and rescales by a / b (the base moves to the other method)."""

    a: MetricReport
    b: MetricReport
    improvement: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.improvement.mean())

    @property
    def std(self) -> float:
        return float(self.improvement.std(ddof=1)) if self.improvement.size > 1 else 0.0

    def text(self) -> str:
        """Plain-text block laid out like an objective-metrics table."""
        a, b = self.a, self.b
        fa, fb = a.fwhm * 1e3, b.fwhm * 1e3
        sd = lambda v: float(v.std(ddof=1)) if v.size > 1 else 0.0
        lines = [
            f"Objective image metrics for {a.method} and {b.method}",
            f"{'':10s} {'FWHM [mm]':>31s} {'gCNR':>17s} {'Sharpness':>19s}",
            f"{'':10s} {a.method:>15s} {b.method:>15s} {a.method:>8s} {b.method:>8s}"
            f" {a.method:>9s} {b.method:>9s}",
        ]
        ga = np.mean(list(a.gcnr.values())) if a.gcnr else float("nan")
        gb = np.mean(list(b.gcnr.values())) if b.gcnr else float("nan")
        sa = a.sharpness if a.sharpness is not None else float("nan")
        sb = b.sharpness if b.sharpness is not None else float("nan")
        lines.append(
            f"{'scene':10s} {fa.mean():7.3f} ± {sd(fa):5.3f} {fb.mean():7.3f} ± {sd(fb):5.3f}"
            f" {ga:8.3f} {gb:8.3f} {sa:9.2f} {sb:9.2f}")
        lines += [
            "",
            f"FWHM improvement: {self.mean:.1f} ± {self.std:.1f} % over {self.improvement.size} targets",
            f"FWHM coefficient of variation: {a.method} {100 * a.cv:.1f} %, {b.method} {100 * b.cv:.1f} %",
        ]
        for key in sorted(set(a.gcnr) & set(b.gcnr)):
            lines.append(f"gCNR {key}: {a.method} {a.gcnr[key]:.3f}, {b.method} {b.gcnr[key]:.3f}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "x", "z", f"fwhm_{self.a.method}", f"fwhm_{self.b.method}",
                    "improvement_pct"])
        for ta, tb, imp in zip(self.a.targets, self.b.targets, self.improvement):
            w.writerow([ta[0], repr(ta[1]), repr(ta[2]), repr(ta[3]), repr(tb[3]), repr(float(imp))])
        return buf.getvalue()


def compare_reports(a: MetricReport, b: MetricReport) -> Comparison:
    """Per-target percent FWHM change of ``b`` relative to ``a``."""
    if len(a.targets) != len(b.targets):
        raise ComparisonError(f"{len(a.targets)} vs {len(b.targets)} targets")
    if [t[0] for t in a.targets] != [t[0] for t in b.targets]:
        raise ComparisonError("target ids differ")
    fa, fb = a.fwhm, b.fwhm
    return Comparison(a, b, (fa - fb) / fa * 100.0)
