"""Imaging grids, sound-speed maps and linear-array geometry.

All arrays indexed by position use ``(depth, lateral)`` order, i.e. shape
``(nz, nx)``.  Depth ``z = 0`` is the transducer face.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidParameterError


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ImagingGrid:
    """Uniform lateral/depth sampling lattice (metres)."""

    nx: int
    nz: int
    dx: float
    dz: float
    x0: float = 0.0
    z0: float = 0.0

    def __post_init__(self):
        if not (self.dx > 0 and self.dz > 0):
            raise InvalidParameterError("grid spacing must be positive")
        if self.nx < 2 or self.nz < 2:
            raise InvalidParameterError("grid needs at least 2 samples per axis")
        if not all(np.isfinite([self.dx, self.dz, self.x0, self.z0])):
            raise InvalidParameterError("grid parameters must be finite")

    @property
    def x(self) -> np.ndarray:
        return self.x0 + np.arange(self.nx) * self.dx

    @property
    def z(self) -> np.ndarray:
        return self.z0 + np.arange(self.nz) * self.dz

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nz, self.nx)

    @property
    def x_extent(self) -> tuple[float, float]:
        return (self.x0, self.x0 + (self.nx - 1) * self.dx)

    @property
    def z_extent(self) -> tuple[float, float]:
        return (self.z0, self.z0 + (self.nz - 1) * self.dz)

    @classmethod
    def from_extent(cls, x_min, x_max, z_min, z_max, dx, dz=None) -> "ImagingGrid":
        """Grid covering ``[x_min, x_max] x [z_min, z_max]`` (end points included
        when they fall on the lattice)."""
        dz = dx if dz is None else dz
        nx = int(np.floor((x_max - x_min) / dx + 1e-9)) + 1
        nz = int(np.floor((z_max - z_min) / dz + 1e-9)) + 1
        return cls(nx=nx, nz=nz, dx=dx, dz=dz, x0=x_min, z0=z_min)


@dataclass(frozen=True, eq=False)
class MediumMap:
    """Speed of sound (and optionally density) sampled on a grid.

    ``c0`` and ``rho0`` are the reference background values used by the
    homogeneous propagators.
    """

    grid: ImagingGrid
    c: np.ndarray
    c0: float = 1540.0
    rho: np.ndarray | None = None
    rho0: float = 1000.0

    def __post_init__(self):
        c = _frozen(self.c)
        if c.shape != self.grid.shape:
            raise InvalidParameterError(
                f"c has shape {c.shape}, grid expects {self.grid.shape}")
        if not np.all(np.isfinite(c)) or np.any(c <= 0):
            raise InvalidParameterError("sound speed must be finite and positive")
        if not (np.isfinite(self.c0) and self.c0 > 0):
            raise InvalidParameterError("c0 must be finite and positive")
        object.__setattr__(self, "c", c)
        if self.rho is not None:
            rho = _frozen(self.rho)
            if rho.shape != self.grid.shape:
                raise InvalidParameterError("rho shape does not match grid")
            object.__setattr__(self, "rho", rho)

    @classmethod
    def homogeneous(cls, grid: ImagingGrid, c0: float = 1540.0, rho0: float = 1000.0):
        return cls(grid=grid, c=np.full(grid.shape, float(c0)), c0=c0, rho0=rho0)

    @property
    def is_homogeneous(self) -> bool:
        return bool(np.all(self.c == self.c0))

    def sample(self, x, z, fill=None) -> np.ndarray:
        """Bilinear sample of ``c`` at arbitrary points.

        Points outside the grid take the nearest-edge value, or ``fill`` when
        one is given.
        """
        return bilinear(self.grid, self.c, x, z, fill=fill)


def bilinear(grid: ImagingGrid, values: np.ndarray, x, z, fill=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    x, z = np.broadcast_arrays(x, z)
    fx = np.clip((x - grid.x0) / grid.dx, 0.0, grid.nx - 1)
    fz = np.clip((z - grid.z0) / grid.dz, 0.0, grid.nz - 1)
    ix = np.minimum(np.floor(fx).astype(np.intp), grid.nx - 2)
    iz = np.minimum(np.floor(fz).astype(np.intp), grid.nz - 2)
    tx = fx - ix
    tz = fz - iz
    v00 = values[iz, ix]
    v01 = values[iz, ix + 1]
    v10 = values[iz + 1, ix]
    v11 = values[iz + 1, ix + 1]
    out = (1 - tz) * ((1 - tx) * v00 + tx * v01) + tz * ((1 - tx) * v10 + tx * v11)
    if fill is not None:
        (xa, xb), (za, zb) = grid.x_extent, grid.z_extent
        tol = 1e-9 * max(grid.dx, grid.dz)
        outside = (x < xa - tol) | (x > xb + tol) | (z < za - tol) | (z > zb + tol)
        out = np.where(outside, fill, out)
    return out


@dataclass(frozen=True)
class ArrayGeometry:
    """Linear array centred on ``x = 0``."""

    n_elements: int
    pitch: float
    center_frequency: float

    def __post_init__(self):
        if self.n_elements < 1 or not self.pitch > 0 or not self.center_frequency > 0:
            raise InvalidParameterError("invalid array geometry")

    @property
    def element_positions(self) -> np.ndarray:
        return (np.arange(self.n_elements) - (self.n_elements - 1) / 2) * self.pitch

    @property
    def aperture(self) -> float:
        return self.n_elements * self.pitch

    @classmethod
    def l11_5v(cls) -> "ArrayGeometry":
        return cls(n_elements=128, pitch=0.3e-3, center_frequency=7.1e6)


@dataclass(frozen=True, eq=False)
class TransmitEvent:
    steering_angle: float
    per_element_delay: np.ndarray
    pulse_center_frequency: float
    pulse_cycles: int = 1

    def __post_init__(self):
        d = _frozen(self.per_element_delay)
        if d.ndim != 1 or np.any(d < 0) or not np.all(np.isfinite(d)):
            raise InvalidParameterError("delays must be a finite, non-negative vector")
        object.__setattr__(self, "per_element_delay", d)

    @classmethod
    def plane_wave(cls, array: ArrayGeometry, angle: float, c0: float,
                   pulse_frequency: float = 5e6, cycles: int = 1) -> "TransmitEvent":
        return cls(angle, plane_wave_delays(array, angle, c0), pulse_frequency, cycles)


def plane_wave_delays(array: ArrayGeometry, angle: float, c0: float) -> np.ndarray:
    """Per-element firing delays (s) for a plane wave steered by ``angle``.

    The earliest element fires at ``t = 0``.
    """
    if not (np.isfinite(angle) and np.isfinite(c0)):
        raise InvalidParameterError("angle and c0 must be finite")
    if c0 <= 0 or abs(angle) >= np.pi / 2:
        raise InvalidParameterError("need c0 > 0 and |angle| < pi/2")
    s = array.element_positions * np.sin(angle)
    return (s - s.min()) / c0


def resample_medium(medium: MediumMap, target: ImagingGrid) -> MediumMap:
    """Bilinear resampling onto ``target``; nodes outside the source grid take
    the nearest-edge value."""
    src = medium.grid
    (sx0, sx1), (sz0, sz1) = src.x_extent, src.z_extent
    (tx0, tx1), (tz0, tz1) = target.x_extent, target.z_extent
    if tx0 > sx1 or tx1 < sx0 or tz0 > sz1 or tz1 < sz0:
        raise InvalidParameterError("target grid does not overlap the medium")
    X, Z = np.meshgrid(target.x, target.z)
    c = bilinear(src, medium.c, X, Z)
    rho = None if medium.rho is None else bilinear(src, medium.rho, X, Z)
    return MediumMap(grid=target, c=c, c0=medium.c0, rho=rho, rho0=medium.rho0)


# MEDIUM.bin v1 ----------------------------------------------------------------

MEDIUM_MAGIC = b"HWCIMED\x00"
MEDIUM_VERSION = 1
_MEDIUM_HEAD = struct.Struct("<8sI4x")  # 16 bytes
_MEDIUM_META = struct.Struct("<QQddddd")


def write_medium(path, medium: MediumMap) -> None:
    """Write ``medium`` in the MEDIUM.bin v1 container (see docs/formats.md)."""
    g = medium.grid
    with open(path, "wb") as fh:
        fh.write(_MEDIUM_HEAD.pack(MEDIUM_MAGIC, MEDIUM_VERSION))
        fh.write(_MEDIUM_META.pack(g.nx, g.nz, g.dx, g.dz, g.x0, g.z0, medium.c0))
        fh.write(np.ascontiguousarray(medium.c, dtype="<f4").tobytes())


def read_medium(path) -> MediumMap:
    data = Path(path).read_bytes()
    if len(data) < _MEDIUM_HEAD.size + _MEDIUM_META.size:
        raise FormatError(f"{path}: truncated medium header")
    magic, version = _MEDIUM_HEAD.unpack_from(data, 0)
    if magic != MEDIUM_MAGIC:
        raise FormatError(f"{path}: not a medium file")
    if version != MEDIUM_VERSION:
        raise FormatError(f"{path}: unsupported medium version {version}")
    nx, nz, dx, dz, x0, z0, c0 = _MEDIUM_META.unpack_from(data, _MEDIUM_HEAD.size)
    off = _MEDIUM_HEAD.size + _MEDIUM_META.size
    if len(data) - off != 4 * nx * nz:
        raise FormatError(f"{path}: payload size mismatch")
    c = np.frombuffer(data, dtype="<f4", offset=off).reshape(nz, nx).astype(float)
    grid = ImagingGrid(nx=nx, nz=nz, dx=dx, dz=dz, x0=x0, z0=z0)
    return MediumMap(grid=grid, c=c, c0=c0)
