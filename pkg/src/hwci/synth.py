"""Synthetic layered phantoms and a straight-ray Born RF simulator.

The simulator is deliberately independent of the beamformer: echo arrival
times come from integrating slowness along straight rays through the
sound-speed map, not from any wave propagation, so it can serve as ground
truth for the end-to-end tests.  It ignores refraction, so keep sound-speed
contrasts modest (about 10 % or less).
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the TBB layer shipped on some systems is too old and only warns
    numba.config.THREADING_LAYER = "omp"

from .beamformer import ChannelData
from .errors import InvalidParameterError, ResolutionError
from .grid import ArrayGeometry, ImagingGrid, MediumMap, TransmitEvent

# name: (c [m/s], rho [kg/m^3], B/A, alpha0 [dB/cm/MHz^y]); B/A and alpha0 are
# recorded for reference only, the simulator is linear and lossless.
MATERIALS = {
    "liver": (1560.0, 1070.0, 6.8, 0.06),
    "muscle": (1590.0, 1050.0, 7.4, 0.35),
    "fat": (1440.0, 900.0, 10.0, 0.22),
    "blood": (1580.0, 1000.0, 6.1, 0.02),
    "background": (1540.0, 1000.0, None, None),
}

PIN_GAIN = 100.0


@dataclass(frozen=True)
class Layer:
    material: str
    thickness: float
    c: float | None = None
    rho: float | None = None

    @property
    def speed(self) -> float:
        return self.c if self.c is not None else MATERIALS[self.material][0]

    @property
    def density(self) -> float:
        return self.rho if self.rho is not None else MATERIALS[self.material][1]


@dataclass(frozen=True)
class Vessel:
    """Anechoic circular region (no scatterers) filled with ``material``."""

    x: float
    z: float
    radius: float
    material: str = "blood"


@dataclass(frozen=True)
class PhantomSpec:
    layers: tuple[Layer, ...]
    interface_shape: str = "flat"
    interface_amplitude: float = 0.0
    interface_period: float = 10e-3
    scatterer_density: float = 1000.0  # per cm^2
    scatter_strength: float = 5e-3
    pins: tuple[tuple[float, float], ...] = ()
    vessels: tuple[Vessel, ...] = ()
    rng_seed: int = 0
    jitter: float = 0.03
    width: float = 57.6e-3
    depth: float = 50e-3
    dx: float = 0.1e-3
    dz: float = 0.1e-3
    c0: float = 1540.0
    rho0: float = 1000.0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(
            l if isinstance(l, Layer) else Layer(*l) for l in self.layers))
        object.__setattr__(self, "pins", tuple(tuple(map(float, p)) for p in self.pins))
        object.__setattr__(self, "vessels", tuple(
            v if isinstance(v, Vessel) else Vessel(*v) for v in self.vessels))
        if not self.layers:
            raise InvalidParameterError("phantom needs at least one layer")
        if any(l.thickness <= 0 for l in self.layers):
            raise InvalidParameterError("layer thicknesses must be positive")
        if sum(l.thickness for l in self.layers) < self.depth - 1e-12:
            raise InvalidParameterError("layers do not reach the phantom depth")
        if self.interface_shape not in ("flat", "sinusoidal"):
            raise InvalidParameterError(f"unknown interface shape {self.interface_shape!r}")
        if not 0 <= self.jitter < 1:
            raise InvalidParameterError("jitter must lie in [0, 1)")

    @property
    def grid(self) -> ImagingGrid:
        return ImagingGrid.from_extent(-self.width / 2, self.width / 2, 0.0, self.depth,
                                       self.dx, self.dz)


@dataclass(frozen=True, eq=False)
class ScattererSet:
    positions: np.ndarray  # (n, 2) as (x, z)
    reflectivities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        r = np.asarray(self.reflectivities, dtype=float).reshape(-1)
        if p.shape[0] != r.shape[0]:
            raise InvalidParameterError("positions and reflectivities differ in length")
        if not np.all(np.isfinite(r)):
            raise InvalidParameterError("reflectivities must be finite")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "reflectivities", r)

    def __len__(self):
        return self.reflectivities.size

    def __add__(self, other: "ScattererSet") -> "ScattererSet":
        return ScattererSet(np.vstack([self.positions, other.positions]),
                            np.concatenate([self.reflectivities, other.reflectivities]))

    @classmethod
    def empty(cls) -> "ScattererSet":
        return cls(np.zeros((0, 2)), np.zeros(0))


def _interface_depths(spec: PhantomSpec, x: np.ndarray) -> list[np.ndarray]:
    bounds = np.cumsum([l.thickness for l in spec.layers])[:-1]
    if spec.interface_shape == "sinusoidal":
        wiggle = spec.interface_amplitude * np.sin(2 * np.pi * x / spec.interface_period)
    else:
        wiggle = np.zeros_like(x)
    return [b + wiggle for b in bounds]


def build_phantom(spec: PhantomSpec) -> tuple[MediumMap, ScattererSet]:
    """Sound-speed map and scatterers for ``spec``; deterministic in ``rng_seed``."""
    grid = spec.grid
    if any(l.thickness < grid.dz for l in spec.layers):
        raise ResolutionError("a layer is thinner than one grid cell")
    rng = np.random.default_rng(spec.rng_seed)
    n_layers = len(spec.layers)
    jit = rng.uniform(-spec.jitter, spec.jitter, size=(n_layers, 2))
    c_layer = np.array([l.speed for l in spec.layers]) * (1 + jit[:, 0])
    rho_layer = np.array([l.density for l in spec.layers]) * (1 + jit[:, 1])

    X, Z = np.meshgrid(grid.x, grid.z)
    region = np.zeros(grid.shape, dtype=np.intp)
    for b in _interface_depths(spec, grid.x):
        region += Z >= b[None, :]
    c = c_layer[region]
    rho = rho_layer[region]
    vjit = rng.uniform(-spec.jitter, spec.jitter, size=(len(spec.vessels), 2))
    for v, (jc, jr) in zip(spec.vessels, vjit):
        inside = (X - v.x) ** 2 + (Z - v.z) ** 2 <= v.radius**2
        c = np.where(inside, MATERIALS[v.material][0] * (1 + jc), c)
        rho = np.where(inside, MATERIALS[v.material][1] * (1 + jr), rho)
    medium = MediumMap(grid=grid, c=c, c0=spec.c0, rho=rho, rho0=spec.rho0)

    area_cm2 = spec.width * spec.depth * 1e4
    n = int(round(spec.scatterer_density * area_cm2))
    xs = rng.uniform(-spec.width / 2, spec.width / 2, n)
    zs = rng.uniform(0.0, spec.depth, n)
    amp = spec.scatter_strength * rng.standard_normal(n)
    keep = np.ones(n, dtype=bool)
    for v in spec.vessels:
        keep &= (xs - v.x) ** 2 + (zs - v.z) ** 2 > v.radius**2
    pos = np.column_stack([xs[keep], zs[keep]])
    refl = amp[keep]
    if spec.pins:
        pins = np.asarray(spec.pins, dtype=float)
        pos = np.vstack([pos, pins])
        refl = np.concatenate([refl, np.full(len(pins), PIN_GAIN * spec.scatter_strength)])
    return medium, ScattererSet(pos, refl)


def pin_grid(depth_step: float, lateral_step: float, extent) -> list[tuple[float, float]]:
    """Regular pin lattice inside ``extent = (x_min, x_max, z_min, z_max)``.

    Depths are whole multiples of ``depth_step`` (z = 0 excluded); lateral
    positions are centred on the middle of the extent.  An axis shorter than
    one step gets a single centred pin.
    """
    if not (depth_step > 0 and lateral_step > 0):
        raise InvalidParameterError("steps must be positive")
    x_min, x_max, z_min, z_max = extent
    xc = 0.5 * (x_min + x_max)
    half = 0.5 * (x_max - x_min)
    k = int(math.floor(half / lateral_step + 1e-9))
    xs = [xc + i * lateral_step for i in range(-k, k + 1)]
    tol = 1e-9 * depth_step
    first = max(1, math.ceil(z_min / depth_step - 1e-9))
    zs = []
    j = first
    while j * depth_step <= z_max + tol:
        zs.append(j * depth_step)
        j += 1
    if not zs:
        zs = [0.5 * (z_min + z_max)]
    return [(x, z) for z in zs for x in xs]


# --- RF simulation --------------------------------------------------------------

@numba.njit(cache=True, inline="always")
def _slowness_at(slow, x0, dx, nx, z0, dz, nz, x, z):
    fx = (x - x0) / dx
    fz = (z - z0) / dz
    fx = min(max(fx, 0.0), nx - 1.0)
    fz = min(max(fz, 0.0), nz - 1.0)
    ix = min(int(fx), nx - 2)
    iz = min(int(fz), nz - 2)
    tx = fx - ix
    tz = fz - iz
    top = (1 - tx) * slow[iz, ix] + tx * slow[iz, ix + 1]
    bot = (1 - tx) * slow[iz + 1, ix] + tx * slow[iz + 1, ix + 1]
    return (1 - tz) * top + tz * bot


@numba.njit(cache=True)
def _ray_time(slow, g, xa, za, xb, zb, h):
    """Trapezoid integral of slowness along the segment a -> b, steps <= h."""
    x0, dx, nx, z0, dz, nz = g[0], g[1], int(g[2]), g[3], g[4], int(g[5])
    length = math.hypot(xb - xa, zb - za)
    n = max(1, int(math.ceil(length / h)))
    acc = 0.5 * (_slowness_at(slow, x0, dx, nx, z0, dz, nz, xa, za)
                 + _slowness_at(slow, x0, dx, nx, z0, dz, nz, xb, zb))
    for i in range(1, n):
        t = i / n
        acc += _slowness_at(slow, x0, dx, nx, z0, dz, nz, xa + t * (xb - xa), za + t * (zb - za))
    return acc * length / n


@numba.njit(cache=True)
def _tx_times(slow, g, h, pos, starts, angles, start_delay):
    n_ev = angles.size
    n_s = pos.shape[0]
    out = np.empty((n_ev, n_s))
    for e in range(n_ev):
        for s in range(n_s):
            xs, zs = pos[s, 0], pos[s, 1]
            out[e, s] = start_delay[e, s] + _ray_time(slow, g, starts[e, s], 0.0, xs, zs, h)
    return out


@numba.njit(cache=True, parallel=True)
def _render(slow, g, h, pos, refl, elem_x, tx_time, tx_len, tx_ok, pulse_f, pulse_cycles,
            fs, t0, n_time, half_width_k):
    n_ev = tx_time.shape[0]
    n_el = elem_x.size
    n_s = pos.shape[0]
    out = np.zeros((n_ev, n_el, n_time))
    # each element owns its traces, so the sum order is fixed for any thread count
    for el in numba.prange(n_el):
        xe = elem_x[el]
        for s in range(n_s):
            xs, zs = pos[s, 0], pos[s, 1]
            t_rx = _ray_time(slow, g, xs, zs, xe, 0.0, h)
            r_rx = math.hypot(xs - xe, zs)
            for e in range(n_ev):
                if not tx_ok[e, s]:
                    continue
                amp = refl[s] / math.sqrt(tx_len[e, s] * r_rx)
                if half_width_k[e] > 0:
                    # finite element face: sinc directivity at the pulse frequency
                    u = half_width_k[e] * (xs - xe) / r_rx
                    if u != 0.0:
                        amp *= math.sin(u) / u
                t_arr = tx_time[e, s] + t_rx
                a = 2 * math.pi * pulse_f[e]
                span = pulse_cycles[e] / pulse_f[e]
                n_lo = max(0, int(math.ceil((t_arr - t0) * fs)))
                n_hi = min(n_time - 1, int(math.floor((t_arr + span - t0) * fs)))
                for n in range(n_lo, n_hi + 1):
                    tau = t0 + n / fs - t_arr
                    env = 0.5 * (1 - math.cos(a * tau / pulse_cycles[e]))
                    out[e, el, n] += amp * math.sin(a * tau) * env
    return out


def _extrapolate(x, xp, fp):
    """Piecewise-linear interpolation with linear extension past the ends."""
    y = np.interp(x, xp, fp)
    lo = x < xp[0]
    hi = x > xp[-1]
    if xp.size > 1:
        s0 = (fp[1] - fp[0]) / (xp[1] - xp[0])
        s1 = (fp[-1] - fp[-2]) / (xp[-1] - xp[-2])
        y = np.where(lo, fp[0] + s0 * (x - xp[0]), y)
        y = np.where(hi, fp[-1] + s1 * (x - xp[-1]), y)
    return y


def record_duration(medium: MediumMap, array: ArrayGeometry, events, margin: float = 2e-6) -> float:
    """Record length covering the deepest two-way echo at the slowest speed."""
    g = medium.grid
    depth = g.z_extent[1]
    reach = max(abs(g.x_extent[0]), abs(g.x_extent[1])) + array.aperture / 2
    c_min = float(medium.c.min())
    delay = max(float(ev.per_element_delay.max()) for ev in events)
    pulse = max(ev.pulse_cycles / ev.pulse_center_frequency for ev in events)
    return (depth + math.hypot(depth, reach)) / c_min + delay + pulse + margin


def simulate_rf(medium: MediumMap, scatterers: ScattererSet, events, array: ArrayGeometry,
                fs: float = 40e6, duration: float | None = None, t0: float = 0.0,
                threads: int | None = None, element_width: float | None = None,
                plane_wave_spreading: bool = True) -> ChannelData:
    """Born single-scattering RF data for plane-wave ``events``.

    Each echo arrives at tau_tx + tau_rx where both legs integrate 1/c along
    straight rays (trapezoid rule, step <= half the finer grid spacing).  The
    transmit leg starts where the ray of the steered plane wave meets the
    array face, at that point's firing delay; scatterers whose ray starts
    outside the aperture are not insonified.  Echo amplitude is
    reflectivity / sqrt(r_tx r_rx) with a Hann-windowed tone pulse.
    """
    events = tuple(events)
    if not events:
        raise InvalidParameterError("no transmit events")
    f_pulse = np.array([ev.pulse_center_frequency for ev in events], dtype=float)
    cycles = np.array([ev.pulse_cycles for ev in events], dtype=float)
    if fs < 4 * f_pulse.max():
        raise InvalidParameterError("fs must be at least 4x the pulse frequency")
    g = medium.grid
    if duration is None:
        duration = record_duration(medium, array, events)
    min_needed = 2 * g.z_extent[1] / float(medium.c.max())
    if duration < min_needed:
        raise InvalidParameterError("duration does not cover the two-way time to max depth")
    n_time = int(math.ceil(duration * fs))

    pos = scatterers.positions
    refl = scatterers.reflectivities
    (xa, xb), (za, zb) = g.x_extent, g.z_extent
    tol = 1e-12
    inside = ((pos[:, 0] >= xa - tol) & (pos[:, 0] <= xb + tol)
              & (pos[:, 1] > 0) & (pos[:, 1] <= zb + tol))
    rejected = int(np.count_nonzero(~inside))
    if rejected:
        warnings.warn(f"{rejected} scatterer(s) outside the medium were ignored")
    pos = np.ascontiguousarray(pos[inside])
    refl = np.ascontiguousarray(refl[inside])

    slow = np.ascontiguousarray(1.0 / medium.c)
    gvec = np.array([g.x0, g.dx, g.nx, g.z0, g.dz, g.nz], dtype=float)
    h = 0.5 * min(g.dx, g.dz)
    elem_x = array.element_positions
    half = array.pitch / 2
    angles = np.array([ev.steering_angle for ev in events], dtype=float)
    starts = pos[None, :, 0] - pos[None, :, 1] * np.tan(angles)[:, None]
    start_delay = np.stack([_extrapolate(starts[e], elem_x, ev.per_element_delay)
                            for e, ev in enumerate(events)])
    tx_ok = (starts >= elem_x[0] - half) & (starts <= elem_x[-1] + half)
    if plane_wave_spreading:
        tx_len = pos[None, :, 1] / np.cos(angles)[:, None]
    else:
        tx_len = np.ones((len(events), len(refl)))
    c_ref = float(np.mean(medium.c))
    hwk = np.zeros(len(events)) if not element_width else np.pi * f_pulse * element_width / c_ref

    if threads:
        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    tx_time = _tx_times(slow, gvec, h, pos, np.ascontiguousarray(starts), angles,
                        np.ascontiguousarray(start_delay))
    rf = _render(slow, gvec, h, pos, refl, elem_x, tx_time, np.ascontiguousarray(tx_len),
                 np.ascontiguousarray(tx_ok), f_pulse, cycles, float(fs), float(t0), n_time, hwk)
    meta = {"rejected_scatterers": rejected, "n_scatterers": int(len(refl))}
    return ChannelData(rf, fs, t0, array, events, meta)


def plane_wave_events(array: ArrayGeometry, angles_deg=(0.0, -6.0, 6.0, -12.0, 12.0),
                      c0: float = 1540.0, pulse_frequency: float = 5e6,
                      cycles: int = 1) -> tuple[TransmitEvent, ...]:
    return tuple(TransmitEvent.plane_wave(array, np.deg2rad(a), c0, pulse_frequency, cycles)
                 for a in angles_deg)


# Lateral pin offsets of +-4.95 mm sit on nodes of the default image grid
# (pitch / 2 = 0.15 mm), so FWHM estimates carry no sub-pixel sampling bias.
ACCEPTANCE_PINS = tuple((x, z) for z in (20e-3, 30e-3, 40e-3) for x in (-4.95e-3, 0.0, 4.95e-3))
# Below the slab, clear of the lateral sidelobe bands of the pins.
ACCEPTANCE_LESION = Vessel(x=-11e-3, z=14e-3, radius=2e-3, material="blood")


def acceptance_scene(seed: int = 0, lesion: bool = True, **overrides) -> PhantomSpec:
    """Desk-scale aberration scene: 10 mm fat-like slab (1440 m/s) over a
    1540 m/s background, pins at 20/30/40 mm and an optional anechoic lesion."""
    kw = dict(
        layers=(Layer("fat", 10e-3, 1440.0, 900.0), Layer("background", 40e-3, 1540.0, 1000.0)),
        pins=ACCEPTANCE_PINS,
        vessels=(ACCEPTANCE_LESION,) if lesion else (),
        rng_seed=seed,
        jitter=0.0,
    )
    kw.update(overrides)
    return PhantomSpec(**kw)
