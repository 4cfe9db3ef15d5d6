"""Proximal accelerated Wirtinger flow for 3D phaseless tomography, plus the
closed-form constant correction of the phase-wrapping ambiguity.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .exceptions import NumericalError, ValidationError
from .forward import MeasurementSet
from .objective import loss, loss_and_gradient, step_size_adaptive, step_size_theorem
from .projector import Geometry, project_all
from .tvprox import TvWeights, prox_tv_solve, tv_value
from .volume import ComplexVolume, RoiMask, relative_error

__all__ = [
    "ReconConfig",
    "ReconTrace",
    "KnownRegionMask",
    "reconstruct",
    "correct",
    "correction_offset",
    "make_known_masks",
    "vacuum_shell",
    "TRACE_COLUMNS",
]

logger = logging.getLogger(__name__)

STEP_MODES = ("adaptive", "theorem", "fixed")
MOMENTUM_MODES = ("nesterov", "off")
TRACE_COLUMNS = ("iter", "loss_total", "loss_data", "tv", "step", "delta_norm", "rel_err_raw", "rel_err_corrected")


@dataclass(frozen=True)
class ReconConfig:
    """Settings of one reconstruction run.

    ``lambda_tv=None`` scales ``lambda_tv_anchor`` linearly with the number of
    views, anchored at ``anchor_angles``.
    """

    n_iter: int = 550
    step_mode: str = "adaptive"
    fixed_step: float | None = None
    momentum: str = "nesterov"
    lambda_tv: float | None = None
    lambda_tv_anchor: float = 0.1
    anchor_angles: int = 100
    tv_weights: tuple[float, float, float] = (1.0, 1.0, 0.1)
    tv_mode: str = "complex"
    prox_max_iter: int = 50
    prox_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if int(self.n_iter) < 1:
            raise ValidationError(f"n_iter must be >= 1, got {self.n_iter}")
        if self.step_mode not in STEP_MODES:
            raise ValidationError(f"step_mode must be one of {STEP_MODES}, got {self.step_mode!r}")
        if self.step_mode == "fixed" and not (self.fixed_step and self.fixed_step > 0):
            raise ValidationError("step_mode='fixed' needs a positive fixed_step")
        if self.momentum not in MOMENTUM_MODES:
            raise ValidationError(f"momentum must be one of {MOMENTUM_MODES}, got {self.momentum!r}")
        if self.lambda_tv is not None and self.lambda_tv < 0:
            raise ValidationError("lambda_tv must be non-negative")
        if self.lambda_tv_anchor < 0 or self.anchor_angles < 1:
            raise ValidationError("lambda_tv_anchor must be >= 0 and anchor_angles >= 1")
        if int(self.prox_max_iter) < 1 or not self.prox_tol > 0:
            raise ValidationError("prox_max_iter must be >= 1 and prox_tol > 0")
        object.__setattr__(self, "tv_weights", tuple(float(w) for w in self.tv_weights))
        TvWeights(self.tv_weights, 0.0, self.tv_mode)

    def resolved_lambda(self, n_angles: int) -> float:
        if self.lambda_tv is not None:
            return float(self.lambda_tv)
        return self.lambda_tv_anchor * n_angles / self.anchor_angles

    def tv(self, n_angles: int) -> TvWeights:
        return TvWeights(self.tv_weights, self.resolved_lambda(n_angles), self.tv_mode)

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}


@dataclass
class ReconTrace:
    """Per-iteration history; every array has length ``n_iter``.

    ``initial_loss_total`` is the objective at the starting point ``x_0``.
    """

    loss_total: np.ndarray
    loss_data: np.ndarray
    tv: np.ndarray
    step: np.ndarray
    delta_norm: np.ndarray
    rel_err_raw: np.ndarray
    rel_err_corrected: np.ndarray
    initial_loss_total: float = math.nan
    lambda_tv: float = 0.0
    best_iter: int | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, n: int) -> "ReconTrace":
        def nan():
            return np.full(n, np.nan)
        return cls(nan(), nan(), nan(), nan(), nan(), nan(), nan())

    def __len__(self) -> int:
        return len(self.loss_total)

    def rows(self):
        for i in range(len(self)):
            yield (i + 1, self.loss_total[i], self.loss_data[i], self.tv[i], self.step[i],
                   self.delta_norm[i], self.rel_err_raw[i], self.rel_err_corrected[i])

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in self.rows():
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
        return path

    @classmethod
    def from_csv(cls, path) -> "ReconTrace":
        with Path(path).open() as fh:
            r = csv.reader(fh)
            header = next(r)
            if tuple(header) != TRACE_COLUMNS:
                raise ValidationError(f"unexpected trace header {header}")
            data = np.array([[float(v) for v in row[1:]] for row in r]).reshape(-1, len(TRACE_COLUMNS) - 1)
        return cls(*(data[:, i].copy() for i in range(data.shape[1])))


@dataclass(frozen=True, eq=False)
class KnownRegionMask:
    """Detector pixels whose ground-truth line integrals of ``d`` are known.

    ``masks[l]`` is the binary diagonal of ``D_l`` and ``known[l] = D_l T_l d*``.
    """

    masks: np.ndarray
    known: np.ndarray

    def __post_init__(self):
        m = np.array(self.masks, dtype=bool, copy=True)
        k = np.array(self.known, dtype=np.float64, copy=True)
        if m.shape != k.shape or m.ndim != 3:
            raise ValidationError(f"mask/known shapes {m.shape} and {k.shape} must match (L, P_u, P_v)")
        k = np.where(m, k, 0.0)
        m.setflags(write=False)
        k.setflags(write=False)
        object.__setattr__(self, "masks", m)
        object.__setattr__(self, "known", k)

    def denominator(self, geom: Geometry) -> float:
        t1 = project_all(np.ones(geom.volume_dims), geom)
        return float(np.sum(self.masks * t1 * t1))


def _arr(v) -> np.ndarray:
    return v.data if isinstance(v, ComplexVolume) else np.asarray(v)


def vacuum_shell(x_star) -> np.ndarray:
    """Boolean mask of the thickest all-zero border shell of ``x_star``."""
    x = _arr(x_star)
    shape = x.shape
    best = np.zeros(shape, dtype=bool)
    for s in range(1, min(shape) // 2 + 1):
        inner = np.zeros(shape, dtype=bool)
        inner[s:shape[0] - s, s:shape[1] - s, s:shape[2] - s] = True
        shell = ~inner
        if np.all(x[shell] == 0):
            best = shell
        else:
            break
    return best


def make_known_masks(x_star, geom: Geometry, fraction: float | None = None,
                     region: np.ndarray | None = None) -> KnownRegionMask:
    """Known-pixel masks and the exact masked projections of ``Re(x_star)``.

    By default a pixel is known when its ray only crosses ``region`` (the vacuum
    border shell unless given).  With ``fraction`` in (0, 1] the
    ``ceil(fraction * P)`` pixels per view crossing the least unknown material
    are marked instead, so ``fraction=1`` marks every pixel.
    """
    x = _arr(x_star)
    if x.shape != geom.volume_dims:
        raise ValidationError("ground truth does not match geometry")
    if region is None:
        region = vacuum_shell(x)
    region = np.asarray(region, dtype=bool)
    unknown = project_all((~region).astype(np.float64), geom)
    t1 = project_all(np.ones(geom.volume_dims), geom)
    if fraction is None:
        masks = unknown <= 1e-12 * max(1.0, float(t1.max()))
    else:
        if not 0 < fraction <= 1:
            raise ValidationError(f"known fraction must be in (0, 1], got {fraction}")
        n_keep = math.ceil(fraction * geom.n_pixels)
        masks = np.zeros(unknown.shape, dtype=bool)
        for l in range(geom.n_angles):
            u, t = unknown[l].ravel(), t1[l].ravel()
            order = np.lexsort((np.arange(u.size), -t, u))
            flat = np.zeros(u.size, dtype=bool)
            flat[order[:n_keep]] = True
            masks[l] = flat.reshape(unknown.shape[1:])
    if float(np.sum(masks * t1 * t1)) <= 0:
        raise ValidationError("known-pixel masks are empty (no known ray crosses the volume)")
    known = np.where(masks, project_all(x.real, geom), 0.0)
    return KnownRegionMask(masks, known)


def correction_offset(x_hat, known: KnownRegionMask, geom: Geometry) -> float:
    """Least-squares constant ``d~`` such that ``D_l T_l (d_hat - d~ 1)`` best matches the known pixels."""
    x = _arr(x_hat)
    if known.masks.shape != (geom.n_angles, *geom.detector_dims):
        raise ValidationError("known masks do not match geometry")
    t1 = project_all(np.ones(geom.volume_dims), geom)
    w = known.masks * t1
    den = float(np.sum(w * t1))
    if den <= 0:
        raise ValidationError("correction denominator is zero (empty masks)")
    num = float(np.sum(w * (project_all(x.real, geom) - known.known)))
    return num / den


def correct(x_hat, known: KnownRegionMask, geom: Geometry):
    """Subtract the fitted real constant from every voxel; ``b`` is untouched."""
    d = correction_offset(x_hat, known, geom)
    x = _arr(x_hat)
    out = x - d
    if isinstance(x_hat, ComplexVolume):
        return x_hat.with_data(out)
    return out


def reconstruct(ms: MeasurementSet, cfg: ReconConfig | None = None, x_true=None,
                known: KnownRegionMask | None = None, roi: RoiMask | None = None,
                x0=None, callback: Callable | None = None):
    """Run ``cfg.n_iter`` proximal Wirtinger-flow iterations from ``x_0 = 0``.

    Each iteration takes the momentum point ``q = x + beta (x - x_prev)`` with
    ``beta_tau = (tau + 1) / (tau + 3)`` (or 0), a gradient step
    ``z = q - mu grad L(q)`` and ``x_new = argmin_u ||u - z||^2 / (2 mu) + lambda_TV TV(u) / 2``.
    The halved TV weight matches the conjugate-gradient convention, under which
    a step ``mu`` moves each real coordinate by ``mu/2`` times its derivative.

    Returns ``(ComplexVolume, ReconTrace)``.
    """
    cfg = cfg or ReconConfig()
    geom = ms.geometry
    L = geom.n_angles
    tvw = cfg.tv(L)
    lam = tvw.lam
    if x_true is not None:
        x_true = _arr(x_true)
        if x_true.shape != geom.volume_dims:
            raise ValidationError("x_true does not match geometry")
        roi = roi or RoiMask.full(geom.volume_dims)
        roi.check(geom.volume_dims)

    x = np.zeros(geom.volume_dims, dtype=np.complex128) if x0 is None else np.array(_arr(x0), dtype=np.complex128)
    x_prev = x.copy()
    trace = ReconTrace.empty(cfg.n_iter)
    trace.lambda_tv = lam
    trace.initial_loss_total = loss(x, ms) + lam * tv_value(x, tvw)
    mu_thm = step_size_theorem(ms) if cfg.step_mode == "theorem" else None
    dual = None
    for tau in range(1, cfg.n_iter + 1):
        beta = (tau + 1) / (tau + 3) if cfg.momentum == "nesterov" else 0.0
        q = x + beta * (x - x_prev) if beta else x
        try:
            _, grad, ws = loss_and_gradient(q, ms)
        except NumericalError as exc:
            raise NumericalError(f"iteration {tau}: {exc}") from None
        if cfg.step_mode == "adaptive":
            mu = step_size_adaptive(ws, ms.probes)
        elif cfg.step_mode == "theorem":
            mu = mu_thm
        else:
            mu = float(cfg.fixed_step)
        z = q - mu * grad
        if lam > 0:
            x_new, dual, _ = prox_tv_solve(z, tvw.w, 0.5 * mu * lam, tvw.mode, cfg.prox_max_iter, cfg.prox_tol, dual)
        else:
            x_new = z
        data = loss(x_new, ms)
        tv = tv_value(x_new, tvw)
        total = data + lam * tv
        if not (np.isfinite(total) and np.all(np.isfinite(x_new))):
            raise NumericalError(f"iteration {tau}: non-finite iterate (loss {total})")
        i = tau - 1
        trace.loss_total[i] = total
        trace.loss_data[i] = data
        trace.tv[i] = tv
        trace.step[i] = mu
        trace.delta_norm[i] = float(np.linalg.norm(x_new - x))
        if x_true is not None:
            trace.rel_err_raw[i] = relative_error(x_new, x_true, roi)
            if known is not None:
                trace.rel_err_corrected[i] = relative_error(correct(x_new, known, geom), x_true, roi)
        x_prev, x = x, x_new
        if callback is not None:
            callback(tau, x, trace)
    logger.debug("reconstruct: %d iterations, final loss %.6g", cfg.n_iter, trace.loss_total[-1])
    return ComplexVolume(x, geom.pitch), trace
