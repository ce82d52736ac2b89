"""Structured configuration: phantom specs and pipeline settings.

Configuration files are TOML; the schema is documented in docs/formats.md.
Command-line flags override file values.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .synth import Layer, PhantomSpec, Vessel, pin_grid

KERNEL_ALIASES = {"asm": "asm", "hasm": "hasm", "split-step": "split_step",
                  "split_step": "split_step"}


@dataclass
class AcquisitionConfig:
    n_elements: int = 128
    pitch: float = 0.3e-3
    center_frequency: float = 7.1e6
    angles_deg: tuple[float, ...] = (0.0, -6.0, 6.0, -12.0, 12.0)
    pulse_frequency: float = 5e6
    pulse_cycles: int = 1
    fs: float = 40e6
    c0: float = 1540.0


@dataclass
class PipelineConfig:
    mode: str = "hwci"
    kernel: str | None = None
    band_fraction: float = 0.9
    dynamic_range_db: float = 40.0
    threads: int = 1
    seed: int = 0
    compounding: str = "coherent"
    tukey_alpha: float = 0.25
    image_bits: int = 8
    out_dir: str = "."
    medium: str | None = None
    channels: str | None = None
    image: str | None = None
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    phantom: dict = field(default_factory=dict)

    def validate(self) -> "PipelineConfig":
        if not 0 < self.band_fraction < 1:
            raise ConfigurationError("band fraction must lie in (0, 1)")
        if not self.dynamic_range_db > 0:
            raise ConfigurationError("dynamic range must be positive")
        if self.mode not in ("wci", "hwci"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.kernel is not None:
            if self.kernel not in KERNEL_ALIASES:
                raise ConfigurationError(f"unknown kernel {self.kernel!r}")
            self.kernel = KERNEL_ALIASES[self.kernel]
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        if self.compounding not in ("coherent", "incoherent"):
            raise ConfigurationError(f"unknown compounding {self.compounding!r}")
        if self.image_bits not in (8, 16):
            raise ConfigurationError("image bits must be 8 or 16")
        return self


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def pipeline_config(data: dict) -> PipelineConfig:
    data = dict(data)
    acq = data.pop("acquisition", {})
    phantom = data.pop("phantom", {})
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    acq_known = {f.name for f in fields(AcquisitionConfig)}
    if set(acq) - acq_known:
        raise ConfigurationError(f"unknown acquisition keys: {sorted(set(acq) - acq_known)}")
    if "angles_deg" in acq:
        acq["angles_deg"] = tuple(float(a) for a in acq["angles_deg"])
    cfg = PipelineConfig(**data, acquisition=AcquisitionConfig(**acq), phantom=phantom)
    return cfg.validate()


# --- phantom specs ---------------------------------------------------------------

def default_phantom(seed: int = 0) -> PhantomSpec:
    """Fat over muscle over liver with a pin lattice and one vessel."""
    pins = pin_grid(10e-3, 2.5e-3, (-5e-3, 5e-3, 10e-3, 40e-3))
    return PhantomSpec(
        layers=(Layer("fat", 8e-3), Layer("muscle", 6e-3), Layer("liver", 36e-3)),
        pins=tuple(pins),
        vessels=(Vessel(-12e-3, 30e-3, 2e-3, "blood"),),
        rng_seed=seed,
    )


def _parse_length(text: str) -> float:
    text = text.strip().lower()
    for unit, scale in (("mm", 1e-3), ("cm", 1e-2), ("um", 1e-6), ("m", 1.0)):
        if text.endswith(unit):
            return float(text[: -len(unit)]) * scale
    return float(text)


def parse_layers(text: str) -> tuple[Layer, ...]:
    """``"fat:10mm,liver:40mm"`` -> layers with tissue-table properties."""
    from .synth import MATERIALS

    layers = []
    for item in text.split(","):
        try:
            name, thick = item.split(":")
        except ValueError:
            raise ConfigurationError(f"bad layer {item!r}; expected material:thickness") from None
        name = name.strip().lower()
        if name not in MATERIALS:
            raise ConfigurationError(f"unknown material {name!r}")
        layers.append(Layer(name, _parse_length(thick)))
    return tuple(layers)


def phantom_from_dict(data: dict, seed: int | None = None) -> PhantomSpec:
    """Build a PhantomSpec from a ``[phantom]`` table; missing keys keep the
    dataclass defaults, and no layers means the default tissue model."""
    data = dict(data)
    base = default_phantom(0)
    kw = {}
    if "layers" in data:
        kw["layers"] = tuple(Layer(l["material"], float(l["thickness"]), l.get("c"), l.get("rho"))
                             for l in data.pop("layers"))
    iface = data.pop("interface", None)
    if iface:
        kw["interface_shape"] = iface.get("shape", "flat")
        kw["interface_amplitude"] = float(iface.get("amplitude", 0.0))
        kw["interface_period"] = float(iface.get("period", 10e-3))
    if "pins" in data:
        kw["pins"] = tuple((float(x), float(z)) for x, z in data.pop("pins"))
    grid = data.pop("pin_grid", None)
    if grid:
        kw["pins"] = tuple(pin_grid(grid["depth_step"], grid["lateral_step"],
                                    (grid["x_min"], grid["x_max"], grid["z_min"], grid["z_max"])))
    if "vessels" in data:
        kw["vessels"] = tuple(Vessel(float(v["x"]), float(v["z"]), float(v["radius"]),
                                     v.get("material", "blood")) for v in data.pop("vessels"))
    if "seed" in data:
        kw["rng_seed"] = int(data.pop("seed"))
    names = {f.name for f in fields(PhantomSpec)}
    unknown = set(data) - names
    if unknown:
        raise ConfigurationError(f"unknown phantom keys: {sorted(unknown)}")
    kw.update(data)
    if seed is not None:
        kw["rng_seed"] = seed
    try:
        if "layers" in kw:
            # a user-supplied layer stack drops the default pins and vessel
            return PhantomSpec(**{"pins": (), "vessels": (), **kw})
        return replace(base, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid phantom spec: {exc}") from None


def phantom_to_dict(spec: PhantomSpec) -> dict:
    d = asdict(spec)
    d["layers"] = [asdict(l) for l in spec.layers]
    d["vessels"] = [asdict(v) for v in spec.vessels]
    d["pins"] = [list(p) for p in spec.pins]
    return d


def phantom_from_json(path) -> PhantomSpec:
    d = json.loads(Path(path).read_text())
    d["layers"] = tuple(Layer(**l) for l in d["layers"])
    d["vessels"] = tuple(Vessel(**v) for v in d["vessels"])
    d["pins"] = tuple(tuple(p) for p in d["pins"])
    return PhantomSpec(**d)
