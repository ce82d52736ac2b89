"""On-disk formats: ChannelData container v1, image exports, scatterer tables.

Byte layouts are documented in docs/formats.md.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .beamformer import ChannelData, ImagePlane
from .errors import FormatError, InvalidParameterError
from .grid import ArrayGeometry, ImagingGrid, TransmitEvent
from .synth import ScattererSet

CHANNEL_MAGIC = b"HWCICHN\x00"
CHANNEL_VERSION = 1
_CHN_HEAD = struct.Struct("<8sQQQQdddd")
_CHN_EVENT = struct.Struct("<ddQ")


def write_channels(path, raw: ChannelData) -> None:
    """ChannelData container v1; samples are stored as float32."""
    n_tx, n_el, n_t = raw.samples.shape
    a = raw.array
    with open(path, "wb") as fh:
        fh.write(_CHN_HEAD.pack(CHANNEL_MAGIC, CHANNEL_VERSION, n_tx, n_el, n_t,
                                raw.fs, raw.t0, a.pitch, a.center_frequency))
        for ev in raw.events:
            fh.write(_CHN_EVENT.pack(ev.steering_angle, ev.pulse_center_frequency,
                                     int(ev.pulse_cycles)))
            fh.write(np.ascontiguousarray(ev.per_element_delay, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(raw.samples, dtype="<f4").tobytes())


def read_channels(path) -> ChannelData:
    data = Path(path).read_bytes()
    if len(data) < _CHN_HEAD.size:
        raise FormatError(f"{path}: truncated channel header")
    magic, version, n_tx, n_el, n_t, fs, t0, pitch, fc = _CHN_HEAD.unpack_from(data, 0)
    if magic != CHANNEL_MAGIC:
        raise FormatError(f"{path}: not a channel-data file")
    if version != CHANNEL_VERSION:
        raise FormatError(f"{path}: unsupported channel-data version {version}")
    off = _CHN_HEAD.size
    expected = off + n_tx * (_CHN_EVENT.size + 8 * n_el) + 4 * n_tx * n_el * n_t
    if len(data) != expected:
        raise FormatError(f"{path}: size {len(data)} does not match header ({expected})")
    array = ArrayGeometry(n_el, pitch, fc)
    events = []
    for _ in range(n_tx):
        angle, f, cycles = _CHN_EVENT.unpack_from(data, off)
        off += _CHN_EVENT.size
        delays = np.frombuffer(data, dtype="<f8", count=n_el, offset=off).astype(float)
        off += 8 * n_el
        events.append(TransmitEvent(angle, delays, f, int(cycles)))
    samples = np.frombuffer(data, dtype="<f4", offset=off).reshape(n_tx, n_el, n_t)
    return ChannelData(samples.astype(float), fs, t0, array, tuple(events))


# --- images ---------------------------------------------------------------------------

def grey_levels(image: ImagePlane, dynamic_range_db: float = 40.0, bits: int = 8) -> np.ndarray:
    """dB view clipped to ``[-dynamic_range_db, 0]`` and mapped to integers."""
    if not dynamic_range_db > 0:
        raise InvalidParameterError("dynamic range must be positive")
    if bits not in (8, 16):
        raise InvalidParameterError("bits must be 8 or 16")
    top = (1 << bits) - 1
    v = np.clip(image.db / dynamic_range_db + 1.0, 0.0, 1.0)
    return np.rint(v * top).astype(np.uint8 if bits == 8 else ">u2")


def write_pgm(path, image: ImagePlane, dynamic_range_db: float = 40.0, bits: int = 8) -> None:
    g = grey_levels(image, dynamic_range_db, bits)
    nz, nx = g.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {nz}\n{(1 << bits) - 1}\n".encode("ascii"))
        fh.write(g.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    nx, nz, top = int(parts[1]), int(parts[2]), int(parts[3])
    dtype = np.uint8 if top < 256 else ">u2"
    body = data[len(data) - nx * nz * np.dtype(dtype).itemsize:]
    return np.frombuffer(body, dtype=dtype).reshape(nz, nx)


def _format_meta(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def write_image(stem, image: ImagePlane, dynamic_range_db: float = 40.0, bits: int = 8) -> dict:
    """Write ``stem.pgm`` (dB grey map), ``stem.f64`` (raw little-endian float64
    intensity, depth-major) and ``stem.txt`` (grid and run metadata)."""
    stem = Path(stem)
    paths = {k: stem.with_suffix(s) for k, s in
             (("pgm", ".pgm"), ("raw", ".f64"), ("meta", ".txt"))}
    write_pgm(paths["pgm"], image, dynamic_range_db, bits)
    paths["raw"].write_bytes(np.ascontiguousarray(image.intensity, dtype="<f8").tobytes())
    g = image.grid
    meta = {"nx": g.nx, "nz": g.nz, "dx": g.dx, "dz": g.dz, "x0": g.x0, "z0": g.z0,
            "dynamic_range_db": float(dynamic_range_db), "bits": bits}
    meta.update({k: v for k, v in image.meta.items() if k not in meta})
    paths["meta"].write_text("".join(f"{k} = {_format_meta(v)}\n" for k, v in meta.items()))
    return paths


def read_meta(path) -> dict:
    meta = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    return meta


def read_image(stem) -> ImagePlane:
    stem = Path(stem)
    meta = read_meta(stem.with_suffix(".txt"))
    try:
        grid = ImagingGrid(int(meta["nx"]), int(meta["nz"]), float(meta["dx"]),
                           float(meta["dz"]), float(meta["x0"]), float(meta["z0"]))
    except KeyError as exc:
        raise FormatError(f"{stem}: metadata lacks {exc}") from None
    raw = stem.with_suffix(".f64").read_bytes()
    if len(raw) != 8 * grid.nx * grid.nz:
        raise FormatError(f"{stem}: raw intensity size does not match the grid")
    intensity = np.frombuffer(raw, dtype="<f8").reshape(grid.shape).astype(float)
    return ImagePlane(grid, intensity, None, meta)


# --- scatterers -----------------------------------------------------------------------

def write_scatterers(path, scatterers: ScattererSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_m", "z_m", "reflectivity"])
        for (x, z), r in zip(scatterers.positions, scatterers.reflectivities):
            w.writerow([repr(float(x)), repr(float(z)), repr(float(r))])


def read_scatterers(path) -> ScattererSet:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return ScattererSet.empty()
    try:
        pos = np.array([[float(r["x_m"]), float(r["z_m"])] for r in rows])
        refl = np.array([float(r["reflectivity"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad scatterer table ({exc})") from None
    return ScattererSet(pos, refl)
