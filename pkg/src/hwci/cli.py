"""Command-line pipeline: phantom -> simulate -> beamform -> evaluate -> compare.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import io as hio
from .beamformer import DEFAULT_C0, BandSelection, band_limits, beamform, default_image_grid
from .config import (KERNEL_ALIASES, PipelineConfig, load_toml, parse_layers,
                     phantom_from_dict, phantom_to_dict, pipeline_config)
from .errors import ConfigurationError, HWCIError, InvalidParameterError
from .grid import ArrayGeometry, read_medium, write_medium
from .metrics import TargetROI, compare_reports, evaluate, MetricReport
from .synth import acceptance_scene, build_phantom, plane_wave_events, simulate_rf

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# --- shared helpers ----------------------------------------------------------------

def _config(args) -> PipelineConfig:
    data = load_toml(args.config) if getattr(args, "config", None) else {}
    cfg = pipeline_config(data)
    for name in ("mode", "kernel", "band_fraction", "dynamic_range_db", "threads", "seed",
                 "out_dir", "medium", "compounding"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    return cfg.validate()


def _array(cfg: PipelineConfig) -> ArrayGeometry:
    a = cfg.acquisition
    return ArrayGeometry(a.n_elements, a.pitch, a.center_frequency)


def _out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def targets_for(spec) -> dict:
    pins = [{"id": f"pin{k}", "x": x, "z": z, "half_width": 1.5e-3, "half_height": 1.5e-3}
            for k, (x, z) in enumerate(spec.pins)]
    lesions = [{"id": f"lesion{k}", "x": v.x, "z": v.z, "inner": 0.75 * v.radius,
                "background": [1.5 * v.radius, 2.25 * v.radius]}
               for k, v in enumerate(spec.vessels)]
    return {"pins": pins, "lesions": lesions}


def rois_from_targets(d: dict) -> list[TargetROI]:
    rois = [TargetROI.pin(p["x"], p["z"], p["half_width"], p["half_height"], p["id"])
            for p in d.get("pins", [])]
    rois += [TargetROI.lesion(l["x"], l["z"], l["inner"], tuple(l["background"]), l["id"])
             for l in d.get("lesions", [])]
    return rois


def load_targets(path) -> list[TargetROI]:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read targets {path}: {exc}") from None
    try:
        return rois_from_targets(d)
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"{path}: bad target entry ({exc})") from None


def _image_grid(raw, medium, depth=50e-3, dz=0.1e-3):
    """Default image grid, no deeper than the medium map or the record's reach."""
    if medium is not None:
        depth = min(depth, medium.grid.z_extent[1])
    else:
        depth = min(depth, 0.5 * DEFAULT_C0 * (raw.t0 + raw.n_time / raw.fs))
    return default_image_grid(raw.array, depth=math.floor(depth / dz + 1e-9) * dz, dz=dz)


def _inside(rois, grid):
    keep = []
    for r in rois:
        try:
            r.check_inside(grid)
        except InvalidParameterError:
            print(f"warning: target {r.id} lies outside the image and is skipped",
                  file=sys.stderr)
            continue
        keep.append(r)
    return keep


# --- commands ------------------------------------------------------------------------

def cmd_phantom(args) -> int:
    cfg = _config(args)
    if args.scene == "acceptance":
        spec = acceptance_scene(cfg.seed)
    else:
        spec = phantom_from_dict(cfg.phantom, seed=cfg.seed)
    if args.layers:
        layers = parse_layers(args.layers)
        total = sum(l.thickness for l in layers)
        spec = replace(spec, layers=layers, depth=min(spec.depth, total), pins=(), vessels=())
    medium, scat = build_phantom(spec)
    out = _out(cfg)
    write_medium(out / "MEDIUM.bin", medium)
    hio.write_scatterers(out / "scatterers.csv", scat)
    (out / "phantom.json").write_text(json.dumps(phantom_to_dict(spec), indent=2) + "\n")
    (out / "targets.json").write_text(json.dumps(targets_for(spec), indent=2) + "\n")
    g = medium.grid
    print(f"phantom: {g.nx}x{g.nz} grid, c in [{medium.c.min():.1f}, {medium.c.max():.1f}] m/s, "
          f"{len(scat)} scatterers, {len(spec.pins)} pins -> {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    medium_path = Path(cfg.medium or out / "MEDIUM.bin")
    scat_path = Path(args.scatterers or out / "scatterers.csv")
    medium = read_medium(medium_path)
    scat = hio.read_scatterers(scat_path)
    array = _array(cfg)
    a = cfg.acquisition
    events = plane_wave_events(array, a.angles_deg, a.c0, a.pulse_frequency, a.pulse_cycles)
    raw = simulate_rf(medium, scat, events, array, fs=a.fs, duration=args.duration,
                      threads=cfg.threads)
    path = Path(args.output) if args.output else out / "channels.bin"
    hio.write_channels(path, raw)
    rej = raw.meta["rejected_scatterers"]
    print(f"simulate: {raw.samples.shape[0]} transmits x {raw.samples.shape[1]} elements x "
          f"{raw.n_time} samples, {rej} scatterers rejected -> {path}")
    return EXIT_OK


def cmd_beamform(args) -> int:
    cfg = _config(args)
    if cfg.mode == "hwci" and not cfg.medium:
        raise UsageError("--mode hwci requires --medium")
    out = _out(cfg)
    raw = hio.read_channels(args.channels or out / "channels.bin")
    medium = read_medium(cfg.medium) if cfg.medium else None
    lo, hi = band_limits(raw.array.center_frequency, cfg.band_fraction)
    band = BandSelection.from_record(lo, hi, raw.n_time, raw.fs)
    image = beamform(raw, medium, cfg.mode, _image_grid(raw, medium), band, kernel=cfg.kernel,
                     compounding=cfg.compounding, tukey_alpha=cfg.tukey_alpha,
                     workers=cfg.threads)
    stem = out / (args.name or cfg.mode)
    hio.write_image(stem, image, cfg.dynamic_range_db, cfg.image_bits)
    from .plotting import plot_image
    plot_image(image, stem.with_suffix(".png"), cfg.dynamic_range_db,
               f"{cfg.mode.upper()} ({image.meta['kernel']})")
    print(f"beamform: {cfg.mode} / {image.meta['kernel']}, {image.meta['n_bins']} bins, "
          f"{image.meta['substeps']} substeps per row -> {stem}.pgm")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    image = hio.read_image(args.image)
    method = args.method or image.meta.get("mode", Path(args.image).name)
    rois = _inside(load_targets(args.targets or out / "targets.json"), image.grid)
    report = evaluate(image, rois, method)
    stem = out / f"metrics_{method}"
    stem.with_suffix(".csv").write_text(report.to_csv())
    lines = [f"method: {method}", f"targets: {len(report.targets)}",
             f"mean FWHM [mm]: {1e3 * report.fwhm.mean():.4f}" if report.targets else "mean FWHM: n/a",
             f"FWHM CV [%]: {100 * report.cv:.2f}",
             f"sharpness: {report.sharpness:.3f}"]
    lines += [f"gCNR {k}: {v:.4f}" for k, v in report.gcnr.items()]
    stem.with_suffix(".txt").write_text("\n".join(lines) + "\n")
    from .plotting import plot_image
    plot_image(image, stem.with_suffix(".png"), cfg.dynamic_range_db, method, tuple(rois))
    print("evaluate: " + "; ".join(lines[2:]))
    return EXIT_OK


def _report(path, method=None) -> MetricReport:
    path = Path(path)
    report = MetricReport.from_csv(path.read_text(), method)
    summary = path.with_suffix(".txt")
    if summary.exists():
        for line in summary.read_text().splitlines():
            key, _, value = line.partition(":")
            if key.startswith("gCNR "):
                report.gcnr[key[5:]] = float(value)
            elif key == "sharpness":
                report.sharpness = float(value)
    return report


def cmd_compare(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    comp = compare_reports(_report(args.a), _report(args.b))
    (out / "comparison.txt").write_text(comp.text())
    (out / "comparison.csv").write_text(comp.to_csv())
    from .plotting import plot_fwhm
    plot_fwhm(comp, out / "comparison_fwhm.png")
    if args.images:
        from .plotting import plot_pair
        a, b = (hio.read_image(s) for s in args.images)
        plot_pair(a, b, out / "comparison_images.png", (comp.a.method, comp.b.method),
                  cfg.dynamic_range_db)
    print(comp.text(), end="")
    return EXIT_OK


def cmd_repro(args) -> int:
    """Acceptance scene end to end: phantom, RF, WCI + HWCI, metrics, comparison."""
    cfg = _config(args)
    out = str(_out(cfg))
    common = ["--out-dir", out, "--seed", str(cfg.seed), "--threads", str(cfg.threads)]
    if args.config:
        common += ["--config", args.config]
    steps = [
        ["phantom", "--scene", "acceptance"],
        ["simulate"],
        ["beamform", "--mode", "wci"],
        ["beamform", "--mode", "hwci", "--medium", f"{out}/MEDIUM.bin"],
        ["evaluate", "--image", f"{out}/wci", "--method", "wci"],
        ["evaluate", "--image", f"{out}/hwci", "--method", "hwci"],
        ["compare", f"{out}/metrics_wci.csv", f"{out}/metrics_hwci.csv",
         "--images", f"{out}/wci", f"{out}/hwci"],
    ]
    for step in steps:
        code = main(step + common)
        if code != EXIT_OK:
            return code
    return EXIT_OK


# --- parser ------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML configuration file (flags override it)")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--dynamic-range-db", dest="dynamic_range_db", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hwci", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="build a medium map and scatterers")
    _common(p)
    p.add_argument("--scene", choices=("default", "acceptance"), default="default")
    p.add_argument("--layers", help='layer stack such as "fat:10mm,liver:40mm"')
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("simulate", help="straight-ray Born RF simulation")
    _common(p)
    p.add_argument("--medium")
    p.add_argument("--scatterers")
    p.add_argument("--duration", type=float, help="record length (s); default covers the depth")
    p.add_argument("--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("beamform", help="form a WCI or HWCI image")
    _common(p)
    p.add_argument("--channels")
    p.add_argument("--medium")
    p.add_argument("--mode", choices=("wci", "hwci"))
    p.add_argument("--kernel", choices=sorted(KERNEL_ALIASES))
    p.add_argument("--band-fraction", dest="band_fraction", type=float)
    p.add_argument("--compounding", choices=("coherent", "incoherent"))
    p.add_argument("--name", help="output file stem (default: the mode)")
    p.set_defaults(func=cmd_beamform)

    p = sub.add_parser("evaluate", help="FWHM, gCNR and sharpness of an image")
    _common(p)
    p.add_argument("--image", required=True, help="image stem (without extension)")
    p.add_argument("--targets")
    p.add_argument("--method")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="compare two metric reports")
    _common(p)
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--images", nargs=2, metavar=("A", "B"))
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("repro", help="run the acceptance scene end to end")
    _common(p)
    p.set_defaults(func=cmd_repro)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        print(f"hwci {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (HWCIError, OSError, ValueError) as exc:
        print(f"hwci {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
