"""Monochromatic field propagation in homogeneous and heterogeneous media.

Time dependence is ``exp(-i w t)`` throughout, so a forward step of ``dz``
multiplies the angular spectrum by ``exp(+i kz dz)`` and back-propagation uses
the complex-conjugate kernel.  Fields are 2-D (lateral ``x`` and depth ``z``);
the lateral axis is periodic with the usual DFT ordering of ``kx``.

Several frequencies are propagated at once: ``omega`` may be a vector of
length ``F`` with field values of shape ``(F, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Literal

import numpy as np
import scipy.fft as sfft
from scipy.special import hankel1

from .errors import (ConfigurationError, DimensionError, InvalidParameterError,
                     SingularityError, StepSizeError)
from .grid import ArrayGeometry, ImagingGrid, MediumMap

Direction = Literal["forward", "backward"]
KERNELS = ("asm", "hasm", "split_step")

# |kz| floor in the 1/(2 i kz) factor, as a fraction of w/c0
KZ_FLOOR = 1e-3
# scattering-term angle band limit (radians): full weight below the inner
# angle, raised-cosine roll-off to zero at the outer angle
SCATTER_ANGLES = (np.deg2rad(40.0), np.deg2rad(50.0))


@dataclass(frozen=True)
class LateralAxis:
    """Periodic lateral sampling used by the transform-domain kernels."""

    n: int
    dx: float
    x0: float = 0.0

    @property
    def x(self) -> np.ndarray:
        return self.x0 + np.arange(self.n) * self.dx

    @property
    def kx(self) -> np.ndarray:
        return 2 * np.pi * sfft.fftfreq(self.n, self.dx)

    @property
    def dkx(self) -> float:
        return 2 * np.pi / (self.n * self.dx)

    @classmethod
    def centered(cls, n: int, dx: float, center: float = 0.0) -> "LateralAxis":
        """Axis of ``n`` samples whose middle sample sits on ``center``."""
        return cls(n=n, dx=dx, x0=center - (n // 2) * dx)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex monochromatic field slice at depth ``z``.

    ``representation`` is ``"space"`` when ``values`` are samples p(x) on
    ``axis.x``, ``"spectral"`` when they are the DFT P(kx) = fft(p).
    """

    omega: np.ndarray | float
    z: float
    values: np.ndarray
    axis: LateralAxis
    representation: Literal["space", "spectral"] = "spectral"

    def __post_init__(self):
        if self.values.shape[-1] != self.axis.n:
            raise DimensionError(
                f"field has {self.values.shape[-1]} lateral samples, axis has {self.axis.n}")
        if self.representation not in ("space", "spectral"):
            raise InvalidParameterError(f"unknown representation {self.representation!r}")

    @property
    def w(self) -> np.ndarray:
        """Angular frequency shaped to broadcast against ``values``."""
        return np.asarray(self.omega, dtype=float)[..., None]

    def to_spectral(self) -> "SpectralField":
        if self.representation == "spectral":
            return self
        return replace(self, values=sfft.fft(self.values, axis=-1),
                       representation="spectral")

    def to_space(self) -> "SpectralField":
        if self.representation == "space":
            return self
        return replace(self, values=sfft.ifft(self.values, axis=-1),
                       representation="space")


@dataclass(frozen=True, eq=False)
class HeterogeneitySlab:
    """Sound-speed contrast of one depth slab.

    ``lambda_r`` is w^2/c0^2 - w^2/c(x)^2 on the field's lateral axis,
    shape ``(n,)`` or ``(F, n)``.  ``c`` keeps the speed profile for the
    split-step kernel.
    """

    lambda_r: np.ndarray
    z_slab: float
    dz: float
    c: np.ndarray | None = None

    @classmethod
    def from_speed(cls, c, c0, omega, z_slab=0.0, dz=0.0) -> "HeterogeneitySlab":
        c = np.asarray(c, dtype=float)
        contrast = 1.0 / c0**2 - 1.0 / c**2
        w = np.asarray(omega, dtype=float)[..., None]
        lam = w**2 * contrast
        return cls(lambda_r=lam, z_slab=z_slab, dz=dz, c=c)


def _require_spectral(field: SpectralField) -> None:
    if field.representation != "spectral":
        raise InvalidParameterError("kernel expects a field in spatial-frequency form")


def axial_wavenumber(w, kx, c) -> np.ndarray:
    """kz = sqrt(w^2/c^2 - kx^2); evanescent components get ``+i|kz|``."""
    kz2 = (np.asarray(w) / c) ** 2 - np.asarray(kx) ** 2
    root = np.sqrt(np.abs(kz2))
    return np.where(kz2 >= 0, root + 0j, 1j * root)


def _kernels(w, kx, c0, dz):
    """Homogeneous one-step propagator and the HASM scattering kernel.

    Evanescent components decay as exp(-|kz| dz); ``1/(2 i kz)`` uses |kz|
    floored at ``KZ_FLOOR * w / c0``.
    """
    kz = axial_wavenumber(w, kx, c0)
    prop = np.exp(1j * kz * dz)  # exp(-|kz| dz) on the evanescent band
    mag = np.abs(kz)
    floor = KZ_FLOOR * np.asarray(w) / c0
    scale = np.maximum(mag, floor) / np.where(mag > 0, mag, 1.0)
    kz_reg = np.where(mag > 0, kz * scale, floor + 0j)
    scat = prop / (2j * kz_reg)
    return prop, scat


def _orient(kernel, direction):
    if direction == "forward":
        return kernel
    if direction == "backward":
        return np.conj(kernel)
    raise InvalidParameterError(f"direction must be 'forward' or 'backward', got {direction!r}")


def scatter_band_limit(w, kx, c0, angles=SCATTER_ANGLES) -> np.ndarray:
    """Smooth angular window applied to the HASM scattering term."""
    lo, hi = np.sin(angles[0]), np.sin(angles[1])
    s = np.abs(np.asarray(kx)) * c0 / np.asarray(w)
    t = np.clip((s - lo) / (hi - lo), 0.0, 1.0)
    return 0.5 * (1 + np.cos(np.pi * t))


def asm_step(field: SpectralField, dz: float, c0: float,
             direction: Direction = "forward") -> SpectralField:
    """One angular-spectrum step of ``dz`` in a medium of speed ``c0``."""
    _require_spectral(field)
    if not dz > 0:
        raise InvalidParameterError("dz must be positive")
    prop, _ = _kernels(field.w, field.axis.kx, c0, dz)
    sign = 1 if direction == "forward" else -1
    return replace(field, values=field.values * _orient(prop, direction),
                   z=field.z + sign * dz)


def _scatter(values, lambda_r):
    """Spectral convolution Lambda * P via the convolution theorem."""
    return sfft.fft(lambda_r * sfft.ifft(values, axis=-1), axis=-1)


def hasm_step(field: SpectralField, slab: HeterogeneitySlab, c0: float,
              direction: Direction = "forward", band_limit=None) -> SpectralField:
    """One heterogeneous angular-spectrum step through ``slab``.

    P(z+dz) = P e^{i kz dz} + e^{i kz dz} / (2 i kz) (Lambda * P) dz

    Backward steps apply the complex conjugate of both kernels.  ``band_limit``
    (broadcastable to the field) weights the scattering term only.
    """
    _require_spectral(field)
    lam = np.asarray(slab.lambda_r)
    if lam.shape[-1] != field.axis.n:
        raise DimensionError(
            f"slab has {lam.shape[-1]} lateral samples, field has {field.axis.n}")
    dz = slab.dz
    if not dz > 0:
        raise InvalidParameterError("slab thickness must be positive")
    prop, scat = _kernels(field.w, field.axis.kx, c0, dz)
    prop, scat = _orient(prop, direction), _orient(scat, direction)
    conv = _scatter(field.values, lam) * dz
    if band_limit is not None:
        conv = conv * band_limit
    sign = 1 if direction == "forward" else -1
    return replace(field, values=prop * field.values + scat * conv,
                   z=field.z + sign * dz)


def split_step(field: SpectralField, slab: HeterogeneitySlab,
               direction: Direction = "forward") -> SpectralField:
    """Split-step step: mean-slowness spectral step, then a lateral phase screen.

    kbar = w * mean(1/c) drives the spectral step; the screen is
    exp(i k_res dz) with k_res = w (1/c(x) - mean(1/c)).
    """
    _require_spectral(field)
    if slab.c is None:
        raise ConfigurationError("split-step needs the slab speed profile")
    c = np.asarray(slab.c)
    if c.shape[-1] != field.axis.n:
        raise DimensionError(
            f"slab has {c.shape[-1]} lateral samples, field has {field.axis.n}")
    return _split_apply(field, 1.0 / c, slab.dz, direction)


def _split_apply(field, slowness, dz, direction):
    w = field.w
    mean_s = np.mean(slowness, axis=-1, keepdims=True)
    kz = axial_wavenumber(w * mean_s, field.axis.kx, 1.0)
    prop = _orient(np.exp(1j * kz * dz), direction)
    screen = _orient(np.exp(1j * w * (slowness - mean_s) * dz), direction)
    p = sfft.ifft(field.values * prop, axis=-1) * screen
    sign = 1 if direction == "forward" else -1
    return replace(field, values=sfft.fft(p, axis=-1), z=field.z + sign * dz)


# --- depth marching ----------------------------------------------------------

def max_stable_step(c_min: float, f_max: float) -> float:
    """Largest accepted marching step: a quarter of the shortest wavelength."""
    return c_min / f_max / 4.0


def lateral_speed_rows(medium: MediumMap, axis: LateralAxis) -> np.ndarray:
    """Speed of every medium row resampled onto ``axis``.

    Axis samples beyond the medium's lateral extent carry ``c0``.
    """
    g = medium.grid
    x = axis.x
    pos = (x - g.x0) / g.dx
    inside = (pos >= -1e-9) & (pos <= g.nx - 1 + 1e-9)
    pos = np.clip(pos, 0, g.nx - 1)
    i0 = np.minimum(np.floor(pos).astype(np.intp), g.nx - 2)
    t = pos - i0
    rows = (1 - t) * medium.c[:, i0] + t * medium.c[:, i0 + 1]
    return np.where(inside, rows, medium.c0)


class _Recorder:
    """Linear interpolation of axis samples onto the record grid columns."""

    def __init__(self, axis: LateralAxis, x):
        pos = (np.asarray(x) - axis.x0) / axis.dx
        self.valid = (pos >= -1e-9) & (pos <= axis.n - 1 + 1e-9)
        pos = np.clip(pos, 0, axis.n - 1)
        self.i0 = np.minimum(np.floor(pos).astype(np.intp), axis.n - 2)
        self.t = pos - self.i0
        self.exact = bool(np.all(np.abs(self.t) < 1e-9) and np.all(self.valid))

    def __call__(self, p):
        if self.exact:
            return p[..., self.i0]
        out = (1 - self.t) * p[..., self.i0] + self.t * p[..., self.i0 + 1]
        return np.where(self.valid, out, 0)


def iter_march(initial: SpectralField, medium: MediumMap, kernel: str = "asm",
               direction: Direction = "forward", record_grid: ImagingGrid | None = None,
               substeps: int = 1, scatter_angles=SCATTER_ANGLES
               ) -> Iterator[tuple[int, np.ndarray]]:
    """Step ``initial`` (at z = 0) down through ``medium``.

    Yields ``(j, p)`` for every depth row ``j`` of ``record_grid`` where ``p``
    is the spatial field (shape ``(..., record_grid.nx)``).  The marching step
    is ``record_grid.dz / substeps``; heterogeneity is sampled at each step's
    midpoint depth.  Raises StepSizeError when the step exceeds a quarter of
    the shortest wavelength in the band.
    """
    if kernel not in KERNELS:
        raise ConfigurationError(f"unknown kernel {kernel!r}; choose from {KERNELS}")
    if direction not in ("forward", "backward"):
        raise InvalidParameterError(f"bad direction {direction!r}")
    field = initial.to_spectral()
    if record_grid is None:
        raise ConfigurationError("record_grid is required")
    substeps = int(substeps)
    if substeps < 1:
        raise InvalidParameterError("substeps must be >= 1")
    step = record_grid.dz / substeps
    c0 = medium.c0
    axis = field.axis
    w = field.w
    f_max = float(np.max(w)) / (2 * np.pi)
    c_rows = lateral_speed_rows(medium, axis)
    c_min = float(min(c_rows.min(), c0)) if kernel != "asm" else c0
    if f_max > 0 and step > max_stable_step(c_min, f_max) * (1 + 1e-12):
        raise StepSizeError(
            f"marching step {step:.3e} m exceeds lambda_min/4 = "
            f"{max_stable_step(c_min, f_max):.3e} m; use more substeps or a finer grid")

    n_rec = np.rint(record_grid.z / step).astype(np.int64)
    if np.any(n_rec < 0) or np.any(np.abs(n_rec * step - record_grid.z) > 1e-6 * step):
        raise InvalidParameterError("record depths must be non-negative multiples of dz")

    prop, scat = _kernels(w, axis.kx, c0, step)
    prop, scat = _orient(prop, direction), _orient(scat, direction)
    band = scatter_band_limit(w, axis.kx, c0, scatter_angles) if scatter_angles else None
    contrast_rows = 1.0 / c0**2 - 1.0 / c_rows**2
    gz = medium.grid
    record = _Recorder(axis, record_grid.x)
    P = field.values
    targets = {int(n): j for j, n in enumerate(n_rec)}
    s = 0
    last = int(n_rec.max())
    while True:
        if s in targets:
            yield targets[s], record(sfft.ifft(P, axis=-1))
        if s >= last:
            break
        zmid = (s + 0.5) * step
        fz = np.clip((zmid - gz.z0) / gz.dz, 0, gz.nz - 1)
        i0 = min(int(np.floor(fz)), gz.nz - 2)
        tz = fz - i0
        if tz == 0.0:
            contrast = contrast_rows[i0]
            c_mid = c_rows[i0]
        else:
            contrast = (1 - tz) * contrast_rows[i0] + tz * contrast_rows[i0 + 1]
            c_mid = (1 - tz) * c_rows[i0] + tz * c_rows[i0 + 1]
        if kernel == "asm" or np.all(c_mid == c0):
            P = prop * P
        elif kernel == "hasm":
            conv = _scatter(P, w**2 * contrast) * step
            if band is not None:
                conv = conv * band
            P = prop * P + scat * conv
        else:
            P = _split_apply(replace(field, values=P), 1.0 / c_mid, step, direction).values
        s += 1


def march_field(initial: SpectralField, medium: MediumMap, kernel: str = "asm",
                direction: Direction = "forward", record_grid: ImagingGrid | None = None,
                substeps: int = 1, scatter_angles=SCATTER_ANGLES) -> np.ndarray:
    """Collect :func:`iter_march` into an array of shape ``(..., nz, nx)``."""
    out = None
    for j, p in iter_march(initial, medium, kernel, direction, record_grid,
                           substeps, scatter_angles):
        if out is None:
            out = np.zeros(p.shape[:-1] + record_grid.shape, dtype=complex)
        out[..., j, :] = p
    return out


# --- Rayleigh integral oracle ------------------------------------------------

def element_quadrature(array: ArrayGeometry, n_sub: int = 1):
    """Midpoint quadrature nodes across each element face.

    Returns ``(x, weight, owner)``: node positions, their width (m) and the
    index of the element each node belongs to.
    """
    n_sub = int(n_sub)
    if n_sub < 1:
        raise InvalidParameterError("n_sub must be >= 1")
    offsets = ((np.arange(n_sub) + 0.5) / n_sub - 0.5) * array.pitch
    x = (array.element_positions[:, None] + offsets[None, :]).ravel()
    owner = np.repeat(np.arange(array.n_elements), n_sub)
    return x, np.full(x.shape, array.pitch / n_sub), owner


def rayleigh_project(source_velocity, array: ArrayGeometry, targets, omega: float,
                     c0: float, rho0: float = 1000.0, kernel: str = "hankel",
                     n_sub: int = 1) -> np.ndarray:
    """Pressure radiated by the array's normal velocity, summed element by element.

    ``kernel`` selects the free-space Green's function of each element:

    * ``"hankel"``: line source, (w rho0 / 2) H0(kr) per unit length (exact 2-D);
    * ``"asymptotic"``: its large-kr form sqrt(2/(pi k r)) exp(i(kr - pi/4));
    * ``"spherical"``: point source, (-i w rho0 / 2 pi) exp(ikr)/r.

    Each element is integrated with ``n_sub`` midpoint nodes across its face.
    """
    if not (c0 > 0 and rho0 > 0):
        raise InvalidParameterError("c0 and rho0 must be positive")
    u = np.asarray(source_velocity, dtype=complex)
    if u.shape != (array.n_elements,):
        raise DimensionError("need one velocity per element")
    pts = np.atleast_2d(np.asarray(targets, dtype=float))
    if np.any(pts[:, 1] < 0):
        raise InvalidParameterError("targets must lie at z >= 0")
    on_face = (pts[:, 1] == 0) & (
        np.min(np.abs(pts[:, :1] - array.element_positions[None, :]), axis=1) <= array.pitch / 2)
    if np.any(on_face):
        raise SingularityError("target lies on an element face (distance 0)")
    xs, dA, owner = element_quadrature(array, n_sub)
    r = np.hypot(pts[:, :1] - xs[None, :], pts[:, 1:2])
    k = omega / c0
    if kernel == "hankel":
        g = 0.5 * omega * rho0 * hankel1(0, k * r)
    elif kernel == "asymptotic":
        g = 0.5 * omega * rho0 * np.sqrt(2 / (np.pi * k * r)) * np.exp(1j * (k * r - np.pi / 4))
    elif kernel == "spherical":
        g = (-1j * omega * rho0 / (2 * np.pi)) * np.exp(1j * k * r) / r
    else:
        raise InvalidParameterError(f"unknown Rayleigh kernel {kernel!r}")
    return g @ (u[owner] * dA)
