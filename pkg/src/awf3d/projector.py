"""Parallel-beam Radon transform about the y axis with an exactly matched adjoint.

Each view rotates the (x, z) plane by ``-theta`` (bilinear interpolation, zero
outside the volume), samples one point per voxel step along the ray and sums.
The interpolation weights are identical for every y slice, so a view is stored
as one sparse ``(P_u, N1*N3)`` matrix applied to all slices at once; the
adjoint is the transpose of the same matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exceptions import ValidationError
from .volume import ComplexVolume

__all__ = [
    "Geometry",
    "make_geometry",
    "default_angles",
    "project",
    "backproject",
    "project_all",
    "backproject_all",
]

_SNAP = 1e-9


def default_angles(n_angles: int) -> tuple[float, ...]:
    """``theta_l = (l - 1) * pi / L`` for ``l = 1..L``."""
    if n_angles < 1:
        raise ValidationError("need at least one angle")
    return tuple(l * math.pi / n_angles for l in range(n_angles))


def _min_width(n1: int, n3: int, parity: int) -> int:
    w = math.ceil(math.hypot(n1, n3))
    if w % 2 != parity % 2:
        w += 1
    return w


@dataclass(frozen=True)
class Geometry:
    """Acquisition geometry for a volume of ``volume_dims``.

    ``detector_dims = (P_u, P_v)`` with ``P_v == N2``; ``P_u`` must cover the
    rotated (x, z) footprint and share the parity of ``N1`` so the zero-angle
    view lines up with voxel columns.
    """

    volume_dims: tuple[int, int, int]
    angles: tuple[float, ...]
    detector_dims: tuple[int, int]
    wavelength: float
    pitch: float = 1.0

    def __post_init__(self):
        dims = tuple(int(n) for n in self.volume_dims)
        det = tuple(int(n) for n in self.detector_dims)
        angles = tuple(float(a) for a in self.angles)
        object.__setattr__(self, "volume_dims", dims)
        object.__setattr__(self, "detector_dims", det)
        object.__setattr__(self, "angles", angles)
        if len(dims) != 3 or min(dims) < 1:
            raise ValidationError(f"bad volume dims {dims}")
        if not angles:
            raise ValidationError("geometry needs at least one angle")
        if not all(math.isfinite(a) for a in angles):
            raise ValidationError("angles must be finite")
        if not (self.wavelength > 0 and math.isfinite(self.wavelength)):
            raise ValidationError(f"wavelength must be positive, got {self.wavelength}")
        if not (self.pitch > 0 and math.isfinite(self.pitch)):
            raise ValidationError(f"pitch must be positive, got {self.pitch}")
        n1, n2, n3 = dims
        pu, pv = det
        if pv != n2:
            raise ValidationError(f"P_v must equal N2={n2}, got {pv}")
        if pu < math.ceil(math.hypot(n1, n3)):
            raise ValidationError(f"P_u={pu} clips the rotated footprint (need >= {math.ceil(math.hypot(n1, n3))})")
        if (pu - n1) % 2:
            raise ValidationError(f"P_u={pu} must have the parity of N1={n1}")

    @property
    def n_angles(self) -> int:
        return len(self.angles)

    @property
    def n_pixels(self) -> int:
        """``P = P_u * P_v``, pixels per exit wave."""
        return self.detector_dims[0] * self.detector_dims[1]

    @property
    def n_samples(self) -> int:
        n1, _, n3 = self.volume_dims
        return _min_width(n1, n3, n3)

    def with_angles(self, angles) -> "Geometry":
        return Geometry(self.volume_dims, tuple(angles), self.detector_dims, self.wavelength, self.pitch)

    def with_wavelength(self, wavelength: float) -> "Geometry":
        return Geometry(self.volume_dims, self.angles, self.detector_dims, wavelength, self.pitch)

    def to_dict(self) -> dict:
        return {
            "volume_dims": list(self.volume_dims),
            "angles": list(self.angles),
            "detector_dims": list(self.detector_dims),
            "wavelength": self.wavelength,
            "pitch": self.pitch,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Geometry":
        return cls(tuple(d["volume_dims"]), tuple(d["angles"]), tuple(d["detector_dims"]),
                   float(d["wavelength"]), float(d.get("pitch", 1.0)))

    # Cached operators.  cached_property writes straight into __dict__, which a
    # frozen dataclass permits.
    @cached_property
    def _view_matrices(self) -> tuple[sp.csr_matrix, ...]:
        return tuple(_view_matrix(self, th) for th in self.angles)

    @cached_property
    def _stacked(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        w = sp.vstack(self._view_matrices, format="csr")
        return w, w.T.tocsr()

    @cached_property
    def view_norms_sq(self) -> np.ndarray:
        """Exact ``||T_l||_2^2`` per view (largest eigenvalue of ``W_l W_l^T``)."""
        out = np.empty(self.n_angles)
        for l, w in enumerate(self._view_matrices):
            out[l] = np.linalg.eigvalsh((w @ w.T).toarray())[-1]
        out.setflags(write=False)
        return out

    def view_matrix(self, l: int) -> sp.csr_matrix:
        """Sparse ``(P_u, N1*N3)`` matrix of view ``l`` (columns ``x*N3 + z``)."""
        if not 0 <= l < self.n_angles:
            raise IndexError(f"angle index {l} out of range for L={self.n_angles}")
        return self._view_matrices[l]


def make_geometry(volume_dims, n_angles: int, wavelength: float, pitch: float = 1.0,
                  detector_u: int | None = None, angles=None) -> Geometry:
    """Geometry with the default half-turn angle schedule and minimal detector."""
    n1, n2, n3 = (int(n) for n in volume_dims)
    pu = detector_u if detector_u is not None else _min_width(n1, n3, n1)
    ang = default_angles(n_angles) if angles is None else tuple(angles)
    return Geometry((n1, n2, n3), ang, (pu, n2), wavelength, pitch)


def _snap(c: np.ndarray) -> np.ndarray:
    r = np.round(c)
    return np.where(np.abs(c - r) < _SNAP, r, c)


def _view_matrix(geom: Geometry, theta: float) -> sp.csr_matrix:
    n1, _, n3 = geom.volume_dims
    pu = geom.detector_dims[0]
    ps = geom.n_samples
    u = np.arange(pu) - (pu - 1) / 2.0
    s = np.arange(ps) - (ps - 1) / 2.0
    uu, ss = np.meshgrid(u, s, indexing="ij")
    c, sn = math.cos(theta), math.sin(theta)
    x = _snap((n1 - 1) / 2.0 + uu * c + ss * sn)
    z = _snap((n3 - 1) / 2.0 - uu * sn + ss * c)
    x0 = np.floor(x).astype(np.int64)
    z0 = np.floor(z).astype(np.int64)
    fx = x - x0
    fz = z - z0
    rows = np.broadcast_to(np.arange(pu)[:, None], uu.shape)
    rr, cc, vv = [], [], []
    for dx, dz, w in ((0, 0, (1 - fx) * (1 - fz)), (1, 0, fx * (1 - fz)),
                      (0, 1, (1 - fx) * fz), (1, 1, fx * fz)):
        xi, zi = x0 + dx, z0 + dz
        ok = (xi >= 0) & (xi < n1) & (zi >= 0) & (zi < n3) & (w > 0)
        rr.append(rows[ok])
        cc.append(xi[ok] * n3 + zi[ok])
        vv.append(w[ok])
    m = sp.coo_matrix(
        (np.concatenate(vv) * geom.pitch, (np.concatenate(rr), np.concatenate(cc))),
        shape=(pu, n1 * n3),
    )
    return m.tocsr()


def _as_array(v) -> np.ndarray:
    return v.data if isinstance(v, ComplexVolume) else np.asarray(v)


def _to_columns(v: np.ndarray) -> np.ndarray:
    n1, n2, n3 = v.shape
    return v.transpose(0, 2, 1).reshape(n1 * n3, n2)


def _from_columns(c: np.ndarray, dims) -> np.ndarray:
    n1, n2, n3 = dims
    return c.reshape(n1, n3, n2).transpose(0, 2, 1)


def _check_volume(v: np.ndarray, geom: Geometry) -> None:
    if v.shape != geom.volume_dims:
        raise ValidationError(f"volume shape {v.shape} does not match geometry {geom.volume_dims}")


def project(v, geom: Geometry, l: int) -> np.ndarray:
    """Line integrals of ``v`` for view ``l``; returns a ``(P_u, P_v)`` image."""
    arr = _as_array(v)
    _check_volume(arr, geom)
    return np.asarray(geom.view_matrix(l) @ _to_columns(arr))


def backproject(img, geom: Geometry, l: int) -> np.ndarray:
    """Transpose of :func:`project` for view ``l``; returns an ``(N1, N2, N3)`` array."""
    img = np.asarray(img)
    if img.shape != geom.detector_dims:
        raise ValidationError(f"image shape {img.shape} does not match detector {geom.detector_dims}")
    return _from_columns(np.asarray(geom.view_matrix(l).T @ img), geom.volume_dims)


def project_all(v, geom: Geometry) -> np.ndarray:
    """All views at once, shape ``(L, P_u, P_v)``."""
    arr = _as_array(v)
    _check_volume(arr, geom)
    w, _ = geom._stacked
    out = np.asarray(w @ _to_columns(arr))
    return out.reshape(geom.n_angles, *geom.detector_dims)


def backproject_all(imgs, geom: Geometry) -> np.ndarray:
    """``sum_l T_l^H imgs[l]``, accumulated in a fixed order."""
    imgs = np.asarray(imgs)
    want = (geom.n_angles, *geom.detector_dims)
    if imgs.shape != want:
        raise ValidationError(f"image stack shape {imgs.shape}, expected {want}")
    _, wt = geom._stacked
    cols = np.asarray(wt @ imgs.reshape(geom.n_angles * geom.detector_dims[0], geom.detector_dims[1]))
    return _from_columns(cols, geom.volume_dims)
