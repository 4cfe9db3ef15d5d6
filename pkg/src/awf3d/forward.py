"""Exit waves, the ptychographic operator and measurement simulation.

The far-field transform is the unitary 2D DFT, so ``A^H A = diag(sum_k |p_k|^2)``
and the largest probe weight is exactly ``||A||_2^2``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .exceptions import FormatError, ValidationError
from .projector import Geometry, project, project_all
from .volume import ComplexVolume

__all__ = [
    "ProbeSet",
    "NoiseModel",
    "MeasurementSet",
    "make_probes",
    "overlap_fraction",
    "exit_wave",
    "exit_waves",
    "linearized_exit_wave",
    "exit_wave_nmse",
    "apply_A",
    "apply_A_adjoint",
    "simulate_measurements",
    "write_measurements",
    "read_measurements",
]

MIN_OVERLAP = 0.6


@dataclass(frozen=True, eq=False)
class ProbeSet:
    """``K`` complex illumination functions on the detector grid, shape ``(K, P_u, P_v)``."""

    probes: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.array(self.probes, dtype=np.complex128, copy=True)
        if p.ndim == 2:
            p = p[None]
        if p.ndim != 3 or p.shape[0] < 1:
            raise ValidationError(f"probes must have shape (K, P_u, P_v), got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValidationError("probes must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "probes", p)
        object.__setattr__(self, "params", dict(self.params))

    @property
    def n_probes(self) -> int:
        return self.probes.shape[0]

    @property
    def detector_dims(self) -> tuple[int, int]:
        return self.probes.shape[1:]

    @cached_property
    def sum_weight(self) -> np.ndarray:
        """``sum_k |p_k|^2`` per detector pixel."""
        w = np.sum(np.abs(self.probes) ** 2, axis=0)
        w.setflags(write=False)
        return w

    @cached_property
    def lambda_max(self) -> float:
        """``||sum_k diag(|p_k|^2)||_2``, equal to ``||A||_2^2``."""
        return float(self.sum_weight.max())

    def scaled(self, c: complex) -> "ProbeSet":
        return ProbeSet(self.probes * c, {**self.params, "scale": self.params.get("scale", 1.0) * abs(c)})


def overlap_fraction(radius: float, stride: float) -> float:
    """Area overlap of two discs of ``radius`` whose centres are ``stride`` apart."""
    r, d = float(radius), float(stride)
    if d >= 2 * r:
        return 0.0
    lens = 2 * r * r * math.acos(d / (2 * r)) - 0.5 * d * math.sqrt(4 * r * r - d * d)
    return lens / (math.pi * r * r)


def make_probes(detector_dims, grid=(3, 3), radius: float | None = None, stride: float | None = None,
                edge: float = 2.0, amplitude: float = 1.0) -> ProbeSet:
    """Raster of shifted circular top-hat probes with a raised-cosine rim.

    With ``radius`` omitted it is chosen so the raster spans the longer detector
    axis; ``stride`` defaults to ``0.6 * radius`` (about 62% area overlap).
    """
    pu, pv = (int(n) for n in detector_dims)
    if len(grid) != 2:
        raise ValidationError(f"probe grid must have two entries, got {grid}")
    nu, nv = (int(n) for n in grid)
    if nu < 1 or nv < 1:
        raise ValidationError(f"probe grid must be positive, got {grid}")
    if radius is None:
        span_u = pu / (2 + 0.6 * (nu - 1))
        span_v = pv / (2 + 0.6 * (nv - 1))
        radius = max(span_u, span_v)
    if stride is None:
        stride = 0.6 * radius
    if radius <= 0 or stride <= 0 or edge < 0 or amplitude <= 0:
        raise ValidationError("radius, stride and amplitude must be positive, edge non-negative")
    if nu * nv > 1 and overlap_fraction(radius, stride) < MIN_OVERLAP:
        raise ValidationError(
            f"stride {stride:.3g} gives {overlap_fraction(radius, stride):.0%} overlap at radius {radius:.3g}; "
            f"need >= {MIN_OVERLAP:.0%}"
        )
    cu = (pu - 1) / 2.0 + (np.arange(nu) - (nu - 1) / 2.0) * stride
    cv = (pv - 1) / 2.0 + (np.arange(nv) - (nv - 1) / 2.0) * stride
    uu, vv = np.meshgrid(np.arange(pu), np.arange(pv), indexing="ij")
    inner = max(radius - edge, 0.0)
    out = []
    for a in cu:
        for b in cv:
            rho = np.hypot(uu - a, vv - b)
            amp = np.where(rho <= inner, 1.0, 0.0)
            if edge > 0:
                rim = (rho > inner) & (rho < radius)
                amp = np.where(rim, 0.5 * (1 + np.cos(np.pi * (rho - inner) / edge)), amp)
            out.append(amplitude * amp)
    params = {"kind": "tophat", "grid": [nu, nv], "radius": float(radius), "stride": float(stride),
              "edge": float(edge), "amplitude": float(amplitude)}
    return ProbeSet(np.array(out), params)


def _phase_factor(geom: Geometry) -> complex:
    return 2j * np.pi / geom.wavelength


def exit_wave(v, geom: Geometry, l: int) -> np.ndarray:
    """``exp((2 pi i / lambda) T_l x)`` for view ``l``."""
    return np.exp(_phase_factor(geom) * project(v, geom, l))


def exit_waves(v, geom: Geometry) -> np.ndarray:
    """Exit waves of every view, shape ``(L, P_u, P_v)``."""
    return np.exp(_phase_factor(geom) * project_all(v, geom))


def linearized_exit_wave(v, geom: Geometry, l: int | None = None) -> np.ndarray:
    """First-order model ``1 + (2 pi i / lambda) T_l x`` (all views when ``l`` is None)."""
    t = project_all(v, geom) if l is None else project(v, geom, l)
    return 1.0 + _phase_factor(geom) * t


def exit_wave_nmse(v, geom: Geometry) -> float:
    """``sum ||g - g_lin||^2 / sum ||g||^2`` between exponential and linearized exit waves."""
    g = exit_waves(v, geom)
    return float(np.sum(np.abs(g - linearized_exit_wave(v, geom)) ** 2) / np.sum(np.abs(g) ** 2))


def _check_detector(shape, probes: ProbeSet) -> None:
    if tuple(shape[-2:]) != tuple(probes.detector_dims):
        raise ValidationError(f"field shape {tuple(shape[-2:])} does not match probes {probes.detector_dims}")


def apply_A(g, probes: ProbeSet) -> np.ndarray:
    """Unitary DFT of each ``p_k * g``.

    ``g`` of shape ``(P_u, P_v)`` gives ``(K, P_u, P_v)``; a leading batch axis
    is kept, so ``(L, P_u, P_v)`` gives ``(L, K, P_u, P_v)``.
    """
    g = np.asarray(g)
    _check_detector(g.shape, probes)
    return np.fft.fft2(probes.probes * g[..., None, :, :], norm="ortho")


def apply_A_adjoint(z, probes: ProbeSet) -> np.ndarray:
    """``sum_k conj(p_k) * IDFT(z_k)``; inverse of the shape convention of :func:`apply_A`."""
    z = np.asarray(z)
    _check_detector(z.shape, probes)
    if z.shape[-3] != probes.n_probes:
        raise ValidationError(f"expected {probes.n_probes} probe images, got {z.shape[-3]}")
    return np.sum(np.conj(probes.probes) * np.fft.ifft2(z, norm="ortho"), axis=-3)


@dataclass(frozen=True)
class NoiseModel:
    """``kind`` is ``"none"``, ``"gaussian"`` (additive, clamped at 0) or ``"poisson"`` (photon dose)."""

    kind: str = "none"
    sigma: float = 0.0
    dose: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "poisson"):
            raise ValidationError(f"unknown noise kind {self.kind!r}")
        if self.kind == "gaussian" and not self.sigma >= 0:
            raise ValidationError("gaussian sigma must be non-negative")
        if self.kind == "poisson" and not self.dose > 0:
            raise ValidationError(f"photon dose must be positive, got {self.dose}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma, "dose": self.dose, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict | None) -> "NoiseModel":
        return cls(**(d or {}))


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Magnitudes ``y[l, k]`` of shape ``(L, K, P_u, P_v)`` with their acquisition setup."""

    y: np.ndarray
    geometry: Geometry
    probes: ProbeSet
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        y = np.array(self.y, dtype=np.float64, copy=True)
        want = (self.geometry.n_angles, self.probes.n_probes, *self.geometry.detector_dims)
        if y.shape != want:
            raise ValidationError(f"measurement shape {y.shape}, expected {want}")
        if tuple(self.probes.detector_dims) != tuple(self.geometry.detector_dims):
            raise ValidationError("probe grid does not match detector")
        if not np.all(np.isfinite(y)) or np.any(y < 0):
            raise ValidationError("measurements must be finite and non-negative")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def n_angles(self) -> int:
        return self.y.shape[0]

    @property
    def n_probes(self) -> int:
        return self.y.shape[1]


def simulate_measurements(v, geom: Geometry, probes: ProbeSet, noise: NoiseModel | dict | None = None) -> MeasurementSet:
    """Far-field magnitudes ``|A g_l|`` for every view, optionally with noise."""
    if isinstance(noise, dict) or noise is None:
        noise = NoiseModel.from_dict(noise)
    if isinstance(v, ComplexVolume) and not v.is_admissible():
        raise ValidationError("ground-truth volume must have non-negative attenuation")
    if not isinstance(v, ComplexVolume) and np.any(np.asarray(v).imag < 0):
        raise ValidationError("ground-truth volume must have non-negative attenuation")
    z = apply_A(exit_waves(v, geom), probes)
    y = np.abs(z)
    rng = np.random.default_rng(noise.seed)
    if noise.kind == "gaussian":
        y = np.maximum(y + noise.sigma * rng.standard_normal(y.shape), 0.0)
    elif noise.kind == "poisson":
        counts = rng.poisson(noise.dose * y ** 2)
        y = np.sqrt(counts / noise.dose)
    return MeasurementSet(y, geom, probes, noise)


def _sha256(b: bytes) -> str:
    return hashlib.sha256(b).hexdigest()


def write_measurements(directory, ms: MeasurementSet) -> Path:
    """Write ``manifest.json``, ``probes.bin`` and one ``y_lLLL_kKKK.bin`` per image.

    Images are float64 little-endian with u varying fastest; the manifest lists
    them l-major.  ``probes.bin`` holds complex128 probes, k-major, u fastest.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for l in range(ms.n_angles):
        for k in range(ms.n_probes):
            name = f"y_l{l:03d}_k{k:03d}.bin"
            raw = ms.y[l, k].astype("<f8").ravel(order="F").tobytes()
            (d / name).write_bytes(raw)
            files.append({"l": l, "k": k, "file": name, "sha256": _sha256(raw)})
    praw = ms.probes.probes.astype("<c16").transpose(0, 2, 1).tobytes()
    (d / "probes.bin").write_bytes(praw)
    manifest = {
        "L": ms.n_angles,
        "K": ms.n_probes,
        "detector_dims": list(ms.geometry.detector_dims),
        "wavelength": ms.geometry.wavelength,
        "noise": ms.noise.to_dict(),
        "seed": ms.noise.seed,
        "dtype": "float64",
        "order": "l-major; each image u-fastest",
        "geometry": ms.geometry.to_dict(),
        "probes": {"params": ms.probes.params, "file": "probes.bin", "dtype": "complex128",
                   "sha256": _sha256(praw)},
        "images": files,
    }
    path = d / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_measurements(directory) -> MeasurementSet:
    d = Path(directory)
    mpath = d / "manifest.json" if d.is_dir() else d
    d = mpath.parent
    try:
        m = json.loads(mpath.read_text())
        geom = Geometry.from_dict(m["geometry"])
        L, K = int(m["L"]), int(m["K"])
        pu, pv = m["detector_dims"]
        images = m["images"]
        pinfo = m["probes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{mpath}: malformed measurement manifest ({exc})") from None
    if len(images) != L * K:
        raise FormatError(f"{mpath}: expected {L * K} images, manifest lists {len(images)}")
    praw = (d / pinfo["file"]).read_bytes()
    if len(praw) != K * pu * pv * 16:
        raise FormatError(f"{d / pinfo['file']}: probe payload size mismatch")
    if "sha256" in pinfo and _sha256(praw) != pinfo["sha256"]:
        raise FormatError(f"{d / pinfo['file']}: checksum mismatch")
    probes = np.frombuffer(praw, dtype="<c16").reshape((K, pv, pu)).transpose(0, 2, 1).astype(np.complex128)
    y = np.empty((L, K, pu, pv))
    for i, entry in enumerate(images):
        l, k = divmod(i, K)
        if (entry["l"], entry["k"]) != (l, k):
            raise FormatError(f"{mpath}: images are not listed l-major")
        raw = (d / entry["file"]).read_bytes()
        if len(raw) != pu * pv * 8:
            raise FormatError(f"{d / entry['file']}: expected {pu * pv} float64 values, got {len(raw) / 8:g}")
        if "sha256" in entry and _sha256(raw) != entry["sha256"]:
            raise FormatError(f"{d / entry['file']}: checksum mismatch")
        y[l, k] = np.frombuffer(raw, dtype="<f8").reshape((pu, pv), order="F")
    return MeasurementSet(y, geom, ProbeSet(probes, pinfo.get("params", {})), NoiseModel.from_dict(m["noise"]))
