"""Complex refractive-index volumes: container, phantoms, ROI metric and file I/O.

Arrays are indexed ``[x, y, z]`` so ``data.shape == (N1, N2, N3)``.  On disk the
payload is written with x varying fastest (Fortran order of that array), which is
the single canonical layout shared with the projector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .exceptions import FormatError, ValidationError

__all__ = [
    "ComplexVolume",
    "RoiMask",
    "LayerSpec",
    "DEFAULT_PALETTE",
    "make_phantom",
    "relative_error",
    "read_volume",
    "write_volume",
]

_DTYPES = {"complex64": np.dtype("<c8"), "complex128": np.dtype("<c16")}


@dataclass(frozen=True, eq=False)
class ComplexVolume:
    """Complex refractive index ``x = d + i b`` on an ``N1 x N2 x N3`` lattice.

    The wrapped array is copied and made read-only, so a volume can be shared
    freely.  ``pitch`` is the voxel edge length in the same units as the
    wavelength.
    """

    data: np.ndarray
    pitch: float = 1.0

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValidationError(f"volume data must be a non-empty 3D array, got shape {arr.shape}")
        if not np.iscomplexobj(arr):
            arr = arr.astype(np.complex128)
        arr = np.array(arr, copy=True)
        arr.setflags(write=False)
        if not (np.isfinite(self.pitch) and self.pitch > 0):
            raise ValidationError(f"pitch must be positive, got {self.pitch}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "pitch", float(self.pitch))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @property
    def real(self) -> np.ndarray:
        """Phase-shift part ``d``."""
        return self.data.real

    @property
    def imag(self) -> np.ndarray:
        """Attenuation part ``b``."""
        return self.data.imag

    def is_admissible(self) -> bool:
        """True for a passive medium (``b >= 0`` everywhere)."""
        return bool(np.all(self.data.imag >= 0))

    def with_data(self, data) -> "ComplexVolume":
        return ComplexVolume(data, self.pitch)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return np.array(self.data, copy=True)
        return self.data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, ComplexVolume):
            return NotImplemented
        return (
            self.pitch == other.pitch
            and self.data.dtype == other.data.dtype
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None


@dataclass(frozen=True)
class RoiMask:
    """Axis-aligned box ``[lo, hi)`` of voxel indices."""

    lo: tuple[int, int, int]
    hi: tuple[int, int, int]

    def __post_init__(self):
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3 or any(a < 0 or a >= b for a, b in zip(lo, hi)):
            raise ValidationError(f"invalid ROI lo={self.lo} hi={self.hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def full(cls, dims) -> "RoiMask":
        return cls((0, 0, 0), tuple(dims))

    @classmethod
    def centered(cls, dims, fraction: float = 0.5) -> "RoiMask":
        """Central box whose edges are ``fraction`` of each volume edge."""
        if not 0 < fraction <= 1:
            raise ValidationError(f"ROI fraction must be in (0, 1], got {fraction}")
        lo, hi = [], []
        for n in dims:
            m = max(1, int(round(n * fraction)))
            a = (n - m) // 2
            lo.append(a)
            hi.append(a + m)
        return cls(tuple(lo), tuple(hi))

    def check(self, dims) -> None:
        if any(h > n for h, n in zip(self.hi, dims)):
            raise ValidationError(f"ROI {self.lo}-{self.hi} exceeds volume dims {tuple(dims)}")

    @property
    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(a, b) for a, b in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        return int(np.prod([b - a for a, b in zip(self.lo, self.hi)]))


# Desk-scale palette, chosen for a 1 nm voxel and a 0.2 nm wavelength so a
# 16-voxel ray accumulates O(1) rad of phase.  These are not physical constants.
DEFAULT_PALETTE: dict[str, complex] = {
    "vacuum": 0.0 + 0.0j,
    "dielectric": 4.0e-3 + 2.0e-4j,
    "metal": 1.2e-2 + 3.0e-3j,
}


@dataclass(frozen=True)
class LayerSpec:
    """Recipe for a layered, piecewise-constant phantom.

    The interior (everything except a ``shell``-voxel vacuum border) is cut into
    z-layers of ``layer_thickness`` voxels.  Each layer is filled with
    ``background`` and then receives ``blocks_per_layer`` axis-aligned
    rectangles whose material is drawn from ``block_materials``.
    """

    palette: Mapping[str, complex] = field(default_factory=lambda: dict(DEFAULT_PALETTE))
    background: str = "dielectric"
    block_materials: Sequence[str] = ("metal", "metal", "vacuum")
    layer_thickness: int = 2
    blocks_per_layer: int = 3
    block_extent: tuple[float, float] = (0.2, 0.6)
    shell: int = 2
    border_material: str = "vacuum"

    @classmethod
    def uniform(cls, value: complex) -> "LayerSpec":
        """Single material over every voxel."""
        return cls(palette={"m": complex(value)}, background="m", block_materials=(),
                   blocks_per_layer=0, shell=0, border_material="m")


def make_phantom(dims, seed: int = 0, layer_spec: LayerSpec | None = None, pitch: float = 1.0) -> ComplexVolume:
    """Generate a reproducible layered phantom with ``b >= 0``.

    Same ``(dims, seed, layer_spec)`` always gives a bit-identical volume.
    """
    spec = layer_spec or LayerSpec()
    dims = tuple(int(n) for n in dims)
    if len(dims) != 3 or min(dims) < 4:
        raise ValidationError(f"phantom dims must be >= (4, 4, 4), got {dims}")
    palette = {k: complex(v) for k, v in spec.palette.items()}
    used = {spec.background, spec.border_material, *spec.block_materials}
    missing = used - set(palette)
    if missing:
        raise ValidationError(f"materials {sorted(missing)} not in palette")
    if any(v.imag < 0 for v in palette.values()):
        raise ValidationError("palette attenuation (imaginary part) must be non-negative")
    s = int(spec.shell)
    if s < 0 or any(n - 2 * s < 1 for n in dims):
        raise ValidationError(f"shell {s} leaves no interior for dims {dims}")

    rng = np.random.default_rng(seed)
    vol = np.full(dims, palette[spec.border_material], dtype=np.complex128)
    n1, n2, n3 = dims
    ix, iy = (s, n1 - s), (s, n2 - s)
    wx, wy = ix[1] - ix[0], iy[1] - iy[0]
    lo_f, hi_f = spec.block_extent
    z = s
    layer = 0
    while z < n3 - s:
        z1 = min(z + max(1, int(spec.layer_thickness)), n3 - s)
        slab = np.full((wx, wy, z1 - z), palette[spec.background], dtype=np.complex128)
        for _ in range(int(spec.blocks_per_layer)):
            if not spec.block_materials:
                break
            mat = spec.block_materials[int(rng.integers(len(spec.block_materials)))]
            # alternate the long axis between layers, like routing levels
            long_ax = layer % 2
            ext = rng.uniform(lo_f, hi_f, size=2)
            sx = max(1, int(round(wx * (ext[0] if long_ax == 0 else ext[0] / 2))))
            sy = max(1, int(round(wy * (ext[1] if long_ax == 1 else ext[1] / 2))))
            x0 = int(rng.integers(0, wx - sx + 1))
            y0 = int(rng.integers(0, wy - sy + 1))
            slab[x0:x0 + sx, y0:y0 + sy, :] = palette[mat]
        vol[ix[0]:ix[1], iy[0]:iy[1], z:z1] = slab
        z = z1
        layer += 1
    return ComplexVolume(vol, pitch)


def _as_array(v) -> np.ndarray:
    return v.data if isinstance(v, ComplexVolume) else np.asarray(v)


def relative_error(x_hat, x_star, roi: RoiMask | None = None) -> float:
    """``||M(x_hat - x_star)|| / ||M x_star||`` restricted to ``roi``."""
    a, b = _as_array(x_hat), _as_array(x_star)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch {a.shape} vs {b.shape}")
    if roi is None:
        roi = RoiMask.full(b.shape)
    roi.check(b.shape)
    sl = roi.slices
    den = np.linalg.norm(b[sl])
    if den == 0:
        raise ValidationError("ground truth vanishes on the ROI; relative error undefined")
    return float(np.linalg.norm(a[sl] - b[sl]) / den)


def _stem(path) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".json", ".bin") else p


def write_volume(path, v: ComplexVolume) -> tuple[Path, Path]:
    """Write ``<stem>.json`` (header) and ``<stem>.bin`` (payload); return both paths."""
    if not isinstance(v, ComplexVolume):
        v = ComplexVolume(v)
    dtype = "complex64" if v.data.dtype == np.complex64 else "complex128"
    stem = _stem(path)
    header = {"dims": list(v.dims), "dtype": dtype, "order": "x-fastest", "pitch": v.pitch}
    payload = np.asarray(v.data, dtype=_DTYPES[dtype]).ravel(order="F").tobytes()
    jpath, bpath = stem.with_suffix(".json"), stem.with_suffix(".bin")
    jpath.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    bpath.write_bytes(payload)
    return jpath, bpath


def read_volume(path) -> ComplexVolume:
    stem = _stem(path)
    jpath, bpath = stem.with_suffix(".json"), stem.with_suffix(".bin")
    try:
        header = json.loads(jpath.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{jpath}: header is not valid JSON ({exc})") from None
    if not isinstance(header, dict) or set(header) != {"dims", "dtype", "order", "pitch"}:
        raise FormatError(f"{jpath}: header must have exactly dims, dtype, order, pitch")
    dims = header["dims"]
    if not (isinstance(dims, list) and len(dims) == 3 and all(isinstance(n, int) and n > 0 for n in dims)):
        raise FormatError(f"{jpath}: dims must be three positive integers, got {dims!r}")
    if header["dtype"] not in _DTYPES:
        raise FormatError(f"{jpath}: unsupported dtype {header['dtype']!r}")
    if header["order"] != "x-fastest":
        raise FormatError(f"{jpath}: unsupported order {header['order']!r}")
    pitch = header["pitch"]
    if isinstance(pitch, bool) or not isinstance(pitch, (int, float)) or not pitch > 0:
        raise FormatError(f"{jpath}: pitch must be a positive number")
    dt = _DTYPES[header["dtype"]]
    raw = bpath.read_bytes()
    n = int(np.prod(dims))
    if len(raw) % dt.itemsize:
        raise FormatError(f"{bpath}: truncated payload ({len(raw)} bytes)")
    if len(raw) != n * dt.itemsize:
        raise FormatError(f"{bpath}: payload has {len(raw) // dt.itemsize} values, dims {dims} need {n}")
    data = np.frombuffer(raw, dtype=dt).reshape(dims, order="F")
    native = np.complex64 if header["dtype"] == "complex64" else np.complex128
    return ComplexVolume(data.astype(native), float(pitch))
