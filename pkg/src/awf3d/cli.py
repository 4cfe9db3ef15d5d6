"""Command-line front end: ``awf3d <command> --config cfg.json --out DIR``.

Commands: simulate, reconstruct, baseline, sweep, evaluate, gradcheck.
Exit codes: 0 ok, 1 validation, 2 numerical failure, 3 I/O or file format.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .awf import ReconConfig, correct, make_known_masks, reconstruct
from .baseline import BaselineConfig, two_step_reconstruct
from .diagnostics import run_all
from .exceptions import FormatError, NumericalError, ValidationError
from .forward import NoiseModel, make_probes, read_measurements, simulate_measurements, write_measurements
from .projector import make_geometry
from .volume import LayerSpec, RoiMask, make_phantom, read_volume, relative_error, write_volume

logger = logging.getLogger("awf3d")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

_SECTIONS = {
    "phantom": {"dims": [16, 16, 16], "pitch": 1.0, "layer": {}},
    "geometry": {"n_angles": 8, "wavelength": 0.2, "detector_u": None, "angles": None},
    "probes": {"grid": [3, 3], "radius": None, "stride": None, "edge": 2.0, "amplitude": 1.0},
    "noise": {"kind": "none", "sigma": 0.0, "dose": 0.0, "seed": None},
    "recon": {f.name: f.default for f in fields(ReconConfig) if f.name != "seed"},
    "baseline": {f.name: f.default for f in fields(BaselineConfig)},
    "known": {"fraction": None},
    "roi": {"fraction": 0.5},
    "gradcheck": {"gradient_scale": 1.0},
}
_TOP = {"seed": 0, "slices": None, "sweep": [4, 8, 16, 32], "out": None}
_LAYER_KEYS = {f.name for f in fields(LayerSpec)}


# ---------------------------------------------------------------- config


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


def resolve_config(raw: dict, seed: int | None = None) -> dict:
    """Merge ``raw`` over the defaults, rejecting unknown keys."""
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    unknown = set(raw) - set(_SECTIONS) - set(_TOP)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    cfg = {k: _plain(v) for k, v in _TOP.items()}
    for key in _TOP:
        if key in raw:
            cfg[key] = raw[key]
    for name, defaults in _SECTIONS.items():
        given = raw.get(name, {})
        if not isinstance(given, dict):
            raise ValidationError(f"config section {name!r} must be an object")
        bad = set(given) - set(defaults)
        if bad:
            raise ValidationError(f"unknown keys in {name!r}: {sorted(bad)}")
        cfg[name] = {k: _plain(given.get(k, v)) for k, v in defaults.items()}
    bad = set(cfg["phantom"]["layer"]) - _LAYER_KEYS
    if bad:
        raise ValidationError(f"unknown keys in 'phantom.layer': {sorted(bad)}")
    if seed is not None:
        cfg["seed"] = seed
    if isinstance(cfg["seed"], bool) or not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ValidationError(f"seed must be a non-negative integer, got {cfg['seed']!r}")
    if cfg["noise"]["seed"] is None:
        cfg["noise"]["seed"] = cfg["seed"]
    dims = cfg["phantom"]["dims"]
    if cfg["slices"] is None:
        cfg["slices"] = [int(dims[2]) // 2]
    if any(not isinstance(z, int) or not 0 <= z < dims[2] for z in cfg["slices"]):
        raise ValidationError(f"slice indices must lie in [0, {dims[2]})")
    if not cfg["sweep"] or any(not isinstance(L, int) or L < 1 for L in cfg["sweep"]):
        raise ValidationError("sweep must be a non-empty list of positive integers")
    # Build every object once so bad values fail before any compute.
    try:
        _phantom(cfg)
        _probes(cfg, _geometry(cfg))
        _recon_cfg(cfg)
        _baseline_cfg(cfg)
        NoiseModel(**cfg["noise"])
        RoiMask.centered(tuple(dims), cfg["roi"]["fraction"])
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid config value: {exc}") from None
    return cfg


def load_config(path: str | None, seed: int | None = None) -> dict:
    raw = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return resolve_config(raw, seed)


def _layer_spec(cfg) -> LayerSpec | None:
    layer = dict(cfg["phantom"]["layer"])
    if not layer:
        return None
    if "palette" in layer:
        layer["palette"] = {k: complex(*v) if isinstance(v, list) else complex(v) for k, v in layer["palette"].items()}
    for key in ("block_materials", "block_extent"):
        if key in layer:
            layer[key] = tuple(layer[key])
    return LayerSpec(**layer)


def _phantom(cfg):
    p = cfg["phantom"]
    return make_phantom(tuple(p["dims"]), cfg["seed"], _layer_spec(cfg), p["pitch"])


def _geometry(cfg, n_angles: int | None = None):
    g = cfg["geometry"]
    L = n_angles if n_angles is not None else g["n_angles"]
    angles = g["angles"] if n_angles is None else None
    return make_geometry(tuple(cfg["phantom"]["dims"]), L, g["wavelength"], cfg["phantom"]["pitch"],
                         g["detector_u"], angles)


def _probes(cfg, geom):
    p = cfg["probes"]
    return make_probes(geom.detector_dims, tuple(p["grid"]), p["radius"], p["stride"], p["edge"], p["amplitude"])


def _recon_cfg(cfg) -> ReconConfig:
    r = dict(cfg["recon"])
    r["tv_weights"] = tuple(r["tv_weights"])
    return ReconConfig(seed=cfg["seed"], **r)


def _baseline_cfg(cfg) -> BaselineConfig:
    b = dict(cfg["baseline"])
    b["tv_weights"] = tuple(b["tv_weights"])
    return BaselineConfig(**b)


# ---------------------------------------------------------------- artifacts


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _file_list(root: Path, paths) -> list[dict]:
    return [{"file": p.relative_to(root).as_posix(), "sha256": _sha(p)} for p in sorted(paths)]


def write_pgm(path: Path, img: np.ndarray) -> dict:
    """8-bit binary graymap, linearly mapping ``[min, max]`` to ``[0, 255]``."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        q = np.round((img - lo) / (hi - lo) * 255.0)
    else:
        q = np.zeros_like(img)
    rows = q.T.astype(np.uint8)  # one row per y, x along the row
    path.write_bytes(f"P5\n{rows.shape[1]} {rows.shape[0]}\n255\n".encode() + rows.tobytes())
    return {"file": path.name, "min": lo, "max": hi, "scale": (hi - lo) / 255.0}


def _write_slices(folder: Path, vol, zs) -> list[dict]:
    folder.mkdir(parents=True, exist_ok=True)
    out = []
    for z in zs:
        sl = vol.data[:, :, z]
        for kind, img in (("mag", np.abs(sl)), ("phase", np.angle(sl))):
            info = write_pgm(folder / f"z{z:03d}_{kind}.pgm", img)
            info.update(z=z, kind=kind)
            out.append(info)
    return out


def _truth(out: Path):
    try:
        return read_volume(out / "truth")
    except FileNotFoundError:
        raise OSError(f"missing ground truth in {out}; run 'simulate' first") from None


def _known_and_roi(cfg, truth, geom):
    known = make_known_masks(truth, geom, cfg["known"]["fraction"])
    return known, RoiMask.centered(truth.dims, cfg["roi"]["fraction"])


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg: dict, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    truth = _phantom(cfg)
    geom = _geometry(cfg)
    ms = simulate_measurements(truth, geom, _probes(cfg, geom), NoiseModel(**cfg["noise"]))
    written = list(write_volume(out / "truth", truth))
    mdir = out / "measurements"
    write_measurements(mdir, ms)
    written += sorted(mdir.iterdir())
    _write_json(out / "manifest.json", {"command": "simulate", "version": __version__, "config": cfg,
                                        "files": _file_list(out, written)})
    logger.info("simulated %d views x %d probes into %s", ms.n_angles, ms.n_probes, out)
    return EXIT_OK


def _emit_reconstruction(out: Path, sub: str, cfg, raw, corrected, trace, extra: dict) -> None:
    d = out / sub
    d.mkdir(parents=True, exist_ok=True)
    files = list(write_volume(d / "raw", raw)) + list(write_volume(d / "corrected", corrected))
    files.append(trace.to_csv(d / "trace.csv"))
    slices = _write_slices(d / "slices", corrected, cfg["slices"])
    files += [d / "slices" / s["file"] for s in slices]
    manifest = {"command": sub, "version": __version__, "config": cfg, "slices": slices,
                "files": _file_list(d, files), **extra}
    _write_json(d / "manifest.json", manifest)


def cmd_reconstruct(cfg: dict, out: Path) -> int:
    mdir = out / "measurements"
    if not (mdir / "manifest.json").exists():
        raise OSError(f"missing measurements in {mdir}; run 'simulate' first")
    ms = read_measurements(mdir)
    truth = _truth(out)
    known, roi = _known_and_roi(cfg, truth, ms.geometry)
    raw, trace = reconstruct(ms, _recon_cfg(cfg), x_true=truth, known=known, roi=roi)
    corrected = correct(raw, known, ms.geometry)
    extra = {"rel_err_raw": relative_error(raw, truth, roi), "rel_err_corrected": relative_error(corrected, truth, roi),
             "lambda_tv": trace.lambda_tv}
    _emit_reconstruction(out, "reconstruct", cfg, raw, corrected, trace, extra)
    logger.info("3D-AWF relative error raw %.4g, corrected %.4g", extra["rel_err_raw"], extra["rel_err_corrected"])
    return EXIT_OK


def cmd_baseline(cfg: dict, out: Path) -> int:
    truth = _truth(out)
    geom = _geometry(cfg)
    known, roi = _known_and_roi(cfg, truth, geom)
    best, trace = two_step_reconstruct(truth, geom, _baseline_cfg(cfg), known=known, roi=roi)
    corrected = correct(best, known, geom)
    extra = {"rel_err_raw": relative_error(best, truth, roi), "rel_err_corrected": relative_error(corrected, truth, roi),
             "best_iter": trace.best_iter, "lambda_tv": trace.lambda_tv}
    _emit_reconstruction(out, "baseline", cfg, best, corrected, trace, extra)
    logger.info("2-Step relative error raw %.4g, corrected %.4g", extra["rel_err_raw"], extra["rel_err_corrected"])
    return EXIT_OK


def sweep_rows(cfg: dict) -> list[tuple[str, int, float, float]]:
    """Relative errors of both methods for every L in ``cfg['sweep']``."""
    truth = _phantom(cfg)
    rows = []
    for L in cfg["sweep"]:
        geom = _geometry(cfg, L)
        ms = simulate_measurements(truth, geom, _probes(cfg, geom), NoiseModel(**cfg["noise"]))
        known, roi = _known_and_roi(cfg, truth, geom)
        raw, _ = reconstruct(ms, _recon_cfg(cfg))
        rows.append(("3d-awf", L, relative_error(raw, truth, roi),
                     relative_error(correct(raw, known, geom), truth, roi)))
        best, _ = two_step_reconstruct(truth, geom, _baseline_cfg(cfg), known=known, roi=roi)
        rows.append(("2-step", L, relative_error(best, truth, roi),
                     relative_error(correct(best, known, geom), truth, roi)))
        logger.info("L=%d: 3D-AWF %.4g, 2-Step %.4g", L, rows[-2][3], rows[-1][3])
    return rows


def cmd_sweep(cfg: dict, out: Path) -> int:
    d = out / "sweep"
    d.mkdir(parents=True, exist_ok=True)
    rows = sweep_rows(cfg)
    path = d / "sweep.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "L", "re_raw", "re_corrected"))
        for m, L, a, b in rows:
            w.writerow((m, L, repr(float(a)), repr(float(b))))
    _write_json(d / "manifest.json", {"command": "sweep", "version": __version__, "config": cfg,
                                      "files": _file_list(d, [path])})
    return EXIT_OK


def cmd_evaluate(cfg: dict, out: Path) -> int:
    truth = _truth(out)
    roi = RoiMask.centered(truth.dims, cfg["roi"]["fraction"])
    metrics = {}
    for sub in ("reconstruct", "baseline"):
        if (out / sub / "raw.json").exists():
            metrics[sub] = {kind: relative_error(read_volume(out / sub / kind), truth, roi)
                            for kind in ("raw", "corrected")}
    if not metrics:
        raise OSError(f"no reconstructions found in {out}")
    _write_json(out / "metrics.json", {"roi": {"lo": list(roi.lo), "hi": list(roi.hi)}, "relative_error": metrics})
    for sub, m in metrics.items():
        print(f"{sub:<12s} raw {m['raw']:.6g}  corrected {m['corrected']:.6g}")
    return EXIT_OK


def cmd_gradcheck(cfg: dict, out: Path | None) -> int:
    results = run_all(seed=cfg["seed"], gradient_scale=cfg["gradcheck"]["gradient_scale"])
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "gradcheck.json", {"passed": ok, "checks": [
            {"name": r.name, "value": r.value, "tol": r.tol, "passed": r.passed} for r in results]})
    return EXIT_OK if ok else EXIT_NUMERICAL


_COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "baseline": cmd_baseline,
    "sweep": cmd_sweep,
    "evaluate": cmd_evaluate,
    "gradcheck": cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="awf3d", description="3D phaseless tomography via accelerated Wirtinger flow")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=f"run the {name} step")
        p.add_argument("--config", help="JSON experiment config (defaults used when omitted)")
        p.add_argument("--out", help="experiment directory (overrides the config 'out')")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP threads")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.seed is not None and args.seed < 0:
            raise ValidationError("--seed must be non-negative")
        if args.threads is not None and args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        cfg = load_config(args.config, args.seed)
        out = args.out or cfg["out"]
        if out is None and args.command != "gradcheck":
            raise ValidationError("no output directory: pass --out or set 'out' in the config")
        out = Path(out) if out is not None else None
        if args.threads is not None:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(args.threads):
                return _COMMANDS[args.command](cfg, out)
        return _COMMANDS[args.command](cfg, out)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
