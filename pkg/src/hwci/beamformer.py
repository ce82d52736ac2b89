"""Wavefield correlation imaging (WCI) and its heterogeneous variant (HWCI).

The transmit field is synthesised from the known firing delays and marched
forward; the recorded echoes are marched backward with the conjugate
kernels.  At every depth the two fields are multiplied (receive conjugated)
and summed over the frequency band; the magnitude of that sum is the image.

WCI marches with the homogeneous angular-spectrum kernel at ``c0``; HWCI
marches through the full sound-speed map with the heterogeneous kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.fft as sfft
from scipy.signal.windows import tukey

from .errors import (BandError, ConfigurationError, DimensionError,
                     InvalidParameterError)
from .grid import ArrayGeometry, ImagingGrid, MediumMap, TransmitEvent
from .propagation import (SCATTER_ANGLES, LateralAxis, SpectralField, iter_march,
                          march_field)
from .pulse import hann_tone_spectrum

DEFAULT_C0 = 1540.0
TUKEY_ALPHA = 0.25
UPSAMPLE = 2
PAD_FACTOR = 1.25


@dataclass(frozen=True, eq=False)
class ChannelData:
    """RF echoes, shape ``(n_transmits, n_elements, n_time)``."""

    samples: np.ndarray
    fs: float
    t0: float
    array: ArrayGeometry
    events: tuple[TransmitEvent, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 3:
            raise DimensionError("samples must be (n_transmits, n_elements, n_time)")
        if s.shape[0] != len(self.events):
            raise DimensionError(f"{s.shape[0]} transmits but {len(self.events)} events")
        if s.shape[1] != self.array.n_elements:
            raise DimensionError("element count does not match the array")
        if not self.fs > 0:
            raise InvalidParameterError("fs must be positive")
        object.__setattr__(self, "events", tuple(self.events))

    @property
    def n_time(self) -> int:
        return self.samples.shape[2]

    def scaled(self, a: float) -> "ChannelData":
        return ChannelData(self.samples * a, self.fs, self.t0, self.array,
                           self.events, dict(self.meta))


def band_limits(center_frequency: float, fraction: float = 0.9) -> tuple[float, float]:
    """Imaging band of relative width ``fraction`` around the centre frequency."""
    if not 0 < fraction < 2:
        raise InvalidParameterError("band fraction must lie in (0, 2)")
    half = 0.5 * fraction * center_frequency
    return center_frequency - half, center_frequency + half


@dataclass(frozen=True, eq=False)
class BandSelection:
    f_lo: float
    f_hi: float
    bins: np.ndarray

    def __post_init__(self):
        if not self.f_lo < self.f_hi:
            raise BandError("need f_lo < f_hi")
        if len(self.bins) == 0:
            raise BandError("no frequency bins inside the band")

    @property
    def omega(self) -> np.ndarray:
        return 2 * np.pi * np.asarray(self.bins)

    @classmethod
    def from_record(cls, f_lo: float, f_hi: float, n_time: int, fs: float) -> "BandSelection":
        """DFT bins of an ``n_time``-sample record that fall inside the band."""
        if f_hi > fs / 2:
            raise BandError(f"band edge {f_hi:.4g} Hz is above Nyquist ({fs / 2:.4g} Hz)")
        f = sfft.rfftfreq(n_time, 1 / fs)
        sel = (f >= f_lo) & (f <= f_hi)
        return cls(f_lo, f_hi, f[sel])

    @classmethod
    def for_data(cls, raw: ChannelData, fraction: float = 0.9) -> "BandSelection":
        lo, hi = band_limits(raw.array.center_frequency, fraction)
        return cls.from_record(lo, hi, raw.n_time, raw.fs)

    def indices(self, n_time: int, fs: float) -> np.ndarray:
        f = sfft.rfftfreq(n_time, 1 / fs)
        idx = np.rint(np.asarray(self.bins) * n_time / fs).astype(np.intp)
        if np.any(idx >= f.size) or not np.allclose(f[idx], self.bins):
            raise BandError("band bins do not match the record's DFT grid")
        return idx


@dataclass(frozen=True, eq=False)
class ImagePlane:
    """Image intensity on ``grid``; ``complex_sum`` keeps the pre-magnitude
    correlation so images can be compounded coherently."""

    grid: ImagingGrid
    intensity: np.ndarray
    complex_sum: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.intensity.shape != self.grid.shape:
            raise DimensionError("intensity does not match grid")
        if np.any(self.intensity < 0):
            raise InvalidParameterError("intensity must be non-negative")

    @property
    def db(self) -> np.ndarray:
        """20 log10 of intensity normalised to its maximum (max = 0 dB)."""
        peak = self.intensity.max()
        if peak == 0:
            return np.zeros_like(self.intensity)
        ratio = self.intensity / peak
        return 20 * np.log10(np.maximum(ratio, np.finfo(float).tiny))


# --- geometry of the computational lateral axis -------------------------------

def computational_axis(array: ArrayGeometry, upsample: int = UPSAMPLE,
                       pad_factor: float = PAD_FACTOR) -> tuple[LateralAxis, slice]:
    """Padded lateral axis shared by transmit and receive fields.

    Returns the axis and the slice of it holding the upsampled aperture.
    """
    n_up = upsample * (array.n_elements - 1) + 1
    n_pad = sfft.next_fast_len(math.ceil(pad_factor * n_up))
    dx = array.pitch / upsample
    off = (n_pad - n_up) // 2
    x_first = array.element_positions[0]
    axis = LateralAxis(n=n_pad, dx=dx, x0=x_first - off * dx)
    return axis, slice(off, off + n_up)


def default_image_grid(array: ArrayGeometry, depth: float = 50e-3, dz: float = 0.1e-3,
                       z0: float = 0.0, upsample: int = UPSAMPLE) -> ImagingGrid:
    """Image grid spanning the aperture at the upsampled element spacing."""
    dx = array.pitch / upsample
    n_up = upsample * (array.n_elements - 1) + 1
    nz = int(round((depth - z0) / dz)) + 1
    return ImagingGrid(nx=n_up, nz=nz, dx=dx, dz=dz, x0=array.element_positions[0], z0=z0)


def _upsample_lines(lines: np.ndarray, factor: int) -> np.ndarray:
    """Linear interpolation between adjacent element lines (last axis)."""
    n = lines.shape[-1]
    pos = np.arange(factor * (n - 1) + 1) / factor
    i0 = np.minimum(np.floor(pos).astype(np.intp), n - 2)
    t = pos - i0
    return (1 - t) * lines[..., i0] + t * lines[..., i0 + 1]


# --- preprocessing ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReceiveSpectra:
    """Per-transmit, per-frequency receive lines at z = 0 on ``axis``.

    ``lines`` has shape ``(n_transmits, F, axis.n)`` (spatial domain).
    """

    lines: np.ndarray
    band: BandSelection
    axis: LateralAxis
    aperture: slice

    def field(self, transmit: int) -> SpectralField:
        return SpectralField(self.band.omega, 0.0, self.lines[transmit], self.axis, "space")


def temporal_spectrum(samples: np.ndarray, fs: float, t0: float, idx) -> np.ndarray:
    """Continuous-time spectrum int r(t) exp(i w t) dt at DFT bins ``idx``
    (last axis of ``samples`` is time)."""
    n = samples.shape[-1]
    spec = np.conj(sfft.rfft(samples, axis=-1))[..., idx] / fs
    w = 2 * np.pi * np.asarray(idx) * fs / n
    return spec * np.exp(1j * w * t0)


def preprocess(raw: ChannelData, band: BandSelection | None = None, *,
               tukey_alpha: float = TUKEY_ALPHA, upsample: int = UPSAMPLE,
               pad_factor: float = PAD_FACTOR) -> ReceiveSpectra:
    """Turn RF channel data into z = 0 receive lines per transmit and frequency.

    Lines are upsampled laterally by linear interpolation, apodised with a
    Tukey window, zero padded to at least ``pad_factor`` times the aperture
    and transformed to the frequency domain (bins inside ``band`` only).
    """
    if band is None:
        band = BandSelection.for_data(raw)
    if band.f_hi > raw.fs / 2:
        raise BandError(f"band edge {band.f_hi:.4g} Hz is above Nyquist ({raw.fs / 2:.4g} Hz)")
    idx = band.indices(raw.n_time, raw.fs)
    spec = temporal_spectrum(np.asarray(raw.samples, dtype=float), raw.fs, raw.t0, idx)
    # (n_tx, n_el, F) -> (n_tx, F, n_el)
    spec = np.swapaxes(spec, 1, 2)
    up = _upsample_lines(spec, upsample) if upsample > 1 else spec
    up = up * tukey(up.shape[-1], tukey_alpha)
    axis, ap = computational_axis(raw.array, upsample, pad_factor)
    lines = np.zeros(up.shape[:-1] + (axis.n,), dtype=complex)
    lines[..., ap] = up
    return ReceiveSpectra(lines=lines, band=band, axis=axis, aperture=ap)


# --- field synthesis ---------------------------------------------------------------

def transmit_source(event: TransmitEvent, array: ArrayGeometry, axis: LateralAxis,
                    aperture: slice, omega, upsample: int = UPSAMPLE) -> SpectralField:
    """z = 0 source line: pulse spectrum times exp(i w tau) over the aperture."""
    omega = np.asarray(omega, dtype=float)
    delays = event.per_element_delay
    if delays.shape != (array.n_elements,):
        raise DimensionError("event delays do not match the array")
    tau = _upsample_lines(delays, upsample) if upsample > 1 else delays
    amp = hann_tone_spectrum(omega, event.pulse_center_frequency, event.pulse_cycles)
    vals = np.zeros(omega.shape + (axis.n,), dtype=complex)
    vals[..., aperture] = amp[..., None] * np.exp(1j * omega[..., None] * tau)
    return SpectralField(omega, 0.0, vals, axis, "space")


def auto_substeps(grid: ImagingGrid, c_min: float, f_max: float, fraction: float = 8.0) -> int:
    """Substeps per grid row so the marching step is at most lambda_min/fraction."""
    return max(1, math.ceil(grid.dz / (c_min / f_max / fraction) - 1e-9))


def _resolve(mode_medium: MediumMap | None, kernel: str):
    if kernel in ("hasm", "split_step") and mode_medium is None:
        raise ConfigurationError(f"kernel {kernel!r} needs a medium map")


def _medium_or_default(medium, grid, c0=DEFAULT_C0):
    if medium is not None:
        return medium
    return MediumMap.homogeneous(grid, c0)


def _speed_floor(medium: MediumMap, kernel: str) -> float:
    return medium.c0 if kernel == "asm" else float(min(medium.c.min(), medium.c0))


def transmit_field(event: TransmitEvent, array: ArrayGeometry, medium: MediumMap | None,
                   kernel: str, band: BandSelection, grid: ImagingGrid, *,
                   upsample: int = UPSAMPLE, pad_factor: float = PAD_FACTOR,
                   substeps: int | None = None, scatter_angles=SCATTER_ANGLES) -> np.ndarray:
    """Forward-marched transmit field p_t, shape ``(F, nz, nx)``."""
    _resolve(medium, kernel)
    medium = _medium_or_default(medium, grid)
    axis, ap = computational_axis(array, upsample, pad_factor)
    src = transmit_source(event, array, axis, ap, band.omega, upsample)
    if substeps is None:
        substeps = auto_substeps(grid, _speed_floor(medium, kernel), band.f_hi)
    return march_field(src, medium, kernel, "forward", grid, substeps, scatter_angles)


def receive_field(spectral_receive: SpectralField, medium: MediumMap | None, kernel: str,
                  grid: ImagingGrid, *, substeps: int | None = None,
                  scatter_angles=SCATTER_ANGLES) -> np.ndarray:
    """Back-propagated receive field p_r, shape ``(F, nz, nx)``."""
    _resolve(medium, kernel)
    medium = _medium_or_default(medium, grid)
    if substeps is None:
        f_max = float(np.max(spectral_receive.omega)) / (2 * np.pi)
        substeps = auto_substeps(grid, _speed_floor(medium, kernel), f_max)
    return march_field(spectral_receive, medium, kernel, "backward", grid, substeps,
                       scatter_angles)


def correlate(p_t: np.ndarray, p_r: np.ndarray, band: BandSelection,
              grid: ImagingGrid) -> ImagePlane:
    """I(x, z) = | sum_w p_t(x, z, w) conj(p_r(x, z, w)) |.

    Fields have the frequency axis first: ``(F, nz, nx)``.
    """
    if p_t.shape != p_r.shape:
        raise DimensionError(f"field shapes differ: {p_t.shape} vs {p_r.shape}")
    if p_t.shape[0] != len(band.bins):
        raise DimensionError(f"fields carry {p_t.shape[0]} frequencies, band has {len(band.bins)}")
    if p_t.shape[1:] != grid.shape:
        raise DimensionError("fields do not match the image grid")
    csum = np.sum(p_t * np.conj(p_r), axis=0)
    return ImagePlane(grid, np.abs(csum), csum, {"transmits": 1})


def compound(images: Sequence[ImagePlane], mode: str = "coherent") -> ImagePlane:
    """Combine per-transmit images.

    ``coherent`` sums the complex frequency-summed correlations before taking
    the magnitude; ``incoherent`` averages the magnitudes.
    """
    images = list(images)
    if not images:
        raise InvalidParameterError("nothing to compound")
    grid = images[0].grid
    if any(im.grid != grid for im in images):
        raise DimensionError("images live on different grids")
    if len(images) == 1:
        im = images[0]
        return ImagePlane(grid, im.intensity, im.complex_sum, {**im.meta, "compounding": mode})
    if mode == "coherent":
        if any(im.complex_sum is None for im in images):
            raise InvalidParameterError("coherent compounding needs complex sums")
        total = images[0].complex_sum.copy()
        for im in images[1:]:
            total += im.complex_sum
        return ImagePlane(grid, np.abs(total), total,
                          {"transmits": len(images), "compounding": mode})
    if mode == "incoherent":
        acc = images[0].intensity.copy()
        for im in images[1:]:
            acc += im.intensity
        return ImagePlane(grid, acc / len(images), None,
                          {"transmits": len(images), "compounding": mode})
    raise InvalidParameterError(f"unknown compounding mode {mode!r}")


def beamform(raw: ChannelData, medium: MediumMap | None = None, mode: str = "wci",
             grid: ImagingGrid | None = None, band: BandSelection | None = None, *,
             kernel: str | None = None, compounding: str = "coherent",
             tukey_alpha: float = TUKEY_ALPHA, upsample: int = UPSAMPLE,
             pad_factor: float = PAD_FACTOR, substeps: int | None = None,
             scatter_angles=SCATTER_ANGLES, workers: int | None = None) -> ImagePlane:
    """Full WCI/HWCI pipeline for one acquisition.

    ``mode="wci"`` marches a homogeneous medium at ``medium.c0`` (or 1540 m/s
    without a medium) with the angular-spectrum kernel.  ``mode="hwci"``
    marches the given medium with ``kernel`` (default ``"hasm"``).

    Transmit and receive fields are marched side by side so only one depth
    row is held in memory per transmit.
    """
    if grid is None:
        grid = default_image_grid(raw.array)
    if band is None:
        band = BandSelection.for_data(raw)
    if mode == "wci":
        c0 = medium.c0 if medium is not None else DEFAULT_C0
        if kernel not in (None, "asm"):
            raise ConfigurationError("wci mode always uses the asm kernel")
        kernel = "asm"
        used = MediumMap.homogeneous(grid, c0)
    elif mode == "hwci":
        if medium is None:
            raise ConfigurationError("hwci mode needs a medium map")
        kernel = kernel or "hasm"
        used = medium
    else:
        raise ConfigurationError(f"unknown mode {mode!r}")
    if kernel not in ("asm", "hasm", "split_step"):
        raise ConfigurationError(f"unknown kernel {kernel!r}")

    with sfft.set_workers(workers or 1):
        rx = preprocess(raw, band, tukey_alpha=tukey_alpha, upsample=upsample,
                        pad_factor=pad_factor)
        if substeps is None:
            substeps = auto_substeps(grid, _speed_floor(used, kernel), band.f_hi)
        omega = band.omega
        images = []
        for t, event in enumerate(raw.events):
            src = transmit_source(event, raw.array, rx.axis, rx.aperture, omega, upsample)
            fwd = iter_march(src, used, kernel, "forward", grid, substeps, scatter_angles)
            bwd = iter_march(rx.field(t), used, kernel, "backward", grid, substeps,
                             scatter_angles)
            csum = np.zeros(grid.shape, dtype=complex)
            for (j, pt), (_, pr) in zip(fwd, bwd):
                csum[j] = np.sum(pt * np.conj(pr), axis=0)
            images.append(ImagePlane(grid, np.abs(csum), csum, {"transmits": 1}))
    out = compound(images, compounding)
    out.meta.update(mode=mode, kernel=kernel, substeps=substeps, f_lo=band.f_lo,
                    f_hi=band.f_hi, n_bins=len(band.bins), tukey_alpha=tukey_alpha,
                    c0=used.c0)
    return out
