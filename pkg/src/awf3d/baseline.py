"""2-Step comparison method: perfect exit waves followed by ramp-filtered,
linearized tomography solved with nonlinear conjugate gradient.

The loss is ``sum_l ||H f_l - c H T_l x||^2 + lambda_TV TV_huber(x)`` with
``c = 2 pi i / lambda`` and ``H`` the ramp filter along the detector u axis.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

import numpy as np

from .awf import KnownRegionMask, ReconTrace, correct
from .exceptions import NumericalError, ValidationError
from .forward import exit_waves
from .projector import Geometry, backproject_all, project_all
from .tvprox import TvWeights, _diff, _diff_adj
from .volume import ComplexVolume, RoiMask, relative_error

__all__ = ["RampFilter", "ramp_apply", "BaselineConfig", "two_step_loss", "two_step_gradient",
           "huber_tv", "two_step_reconstruct"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RampFilter:
    """Discrete ``|k|`` response on ``width`` samples (cycles per sample, zero at DC)."""

    width: int

    def __post_init__(self):
        if int(self.width) < 1:
            raise ValidationError("ramp filter width must be >= 1")

    @property
    def response(self) -> np.ndarray:
        return np.abs(np.fft.fftfreq(int(self.width)))

    def apply(self, img: np.ndarray, axis: int = -2) -> np.ndarray:
        img = np.asarray(img)
        shape = [1] * img.ndim
        shape[axis] = self.width
        f = np.fft.fft(img, axis=axis, norm="ortho") * self.response.reshape(shape)
        out = np.fft.ifft(f, axis=axis, norm="ortho")
        return out.real if np.isrealobj(img) else out


def ramp_apply(img, axis: int = -2) -> np.ndarray:
    """Ramp-filter every detector row along u (axis ``-2`` of ``(..., P_u, P_v)``)."""
    img = np.asarray(img)
    return RampFilter(img.shape[axis]).apply(img, axis)


@dataclass(frozen=True)
class BaselineConfig:
    """2-Step settings.  ``lambda_tv=None`` scales the anchor linearly with L."""

    n_iter: int = 550
    lambda_tv: float | None = None
    lambda_tv_anchor: float = 1e2
    anchor_angles: int = 100
    tv_weights: tuple[float, float, float] = (1.0, 1.0, 0.1)
    huber_eps: float | None = None
    restart_every: int = 50
    max_backtrack: int = 60
    select: str = "best"

    def __post_init__(self):
        if int(self.n_iter) < 1:
            raise ValidationError("n_iter must be >= 1")
        if self.lambda_tv is not None and self.lambda_tv < 0:
            raise ValidationError("lambda_tv must be non-negative")
        if self.huber_eps is not None and not self.huber_eps > 0:
            raise ValidationError("huber_eps must be positive")
        if self.restart_every < 1 or self.max_backtrack < 1:
            raise ValidationError("restart_every and max_backtrack must be >= 1")
        if self.select not in ("best", "last"):
            raise ValidationError("select must be 'best' or 'last'")
        object.__setattr__(self, "tv_weights", tuple(float(w) for w in self.tv_weights))
        TvWeights(self.tv_weights, 0.0)

    def resolved_lambda(self, n_angles: int) -> float:
        if self.lambda_tv is not None:
            return float(self.lambda_tv)
        return self.lambda_tv_anchor * n_angles / self.anchor_angles

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}


def huber_tv(x: np.ndarray, w, eps: float):
    """Huber-smoothed weighted TV and its gradient (real-coordinate gradient
    packed as a complex array)."""
    total = 0.0
    grad = np.zeros(x.shape, dtype=np.complex128)
    for a in range(3):
        if w[a] <= 0 or x.shape[a] < 2:
            continue
        d = _diff(x, a)
        m = np.abs(d)
        small = m <= eps
        total += w[a] * float(np.sum(np.where(small, m * m / (2 * eps), m - eps / 2)))
        grad += w[a] * _diff_adj(d / np.maximum(m, eps), a, x.shape)
    return total, grad


def _filtered(fhat: np.ndarray) -> np.ndarray:
    return ramp_apply(fhat, axis=-2)


def two_step_loss(x, fhat_filtered: np.ndarray, geom: Geometry) -> float:
    """Data term ``sum_l ||H f_l - c H T_l x||^2``."""
    c = 2j * np.pi / geom.wavelength
    r = fhat_filtered - c * ramp_apply(project_all(x, geom))
    return float(np.sum(np.abs(r) ** 2))


def two_step_gradient(x, fhat_filtered: np.ndarray, geom: Geometry):
    """Data term and its real-coordinate gradient ``G`` (``dE = Re<G, dx>``)."""
    c = 2j * np.pi / geom.wavelength
    r = fhat_filtered - c * ramp_apply(project_all(x, geom))
    return float(np.sum(np.abs(r) ** 2)), -2.0 * np.conj(c) * backproject_all(ramp_apply(r), geom)


def two_step_reconstruct(x_star, geom: Geometry, cfg: BaselineConfig | None = None,
                         known: KnownRegionMask | None = None, roi: RoiMask | None = None,
                         fhat=None, x0=None):
    """Run the 2-Step baseline from ``x_0 = 0`` with perfect exit waves of ``x_star``.

    ``fhat`` overrides the exit waves (for instance with the linearized model).
    Returns the best iterate by corrected (or raw, without masks) ROI error,
    or the last one with ``select="last"``, together with the trace.
    """
    cfg = cfg or BaselineConfig()
    xs = x_star.data if isinstance(x_star, ComplexVolume) else np.asarray(x_star)
    if xs.shape != geom.volume_dims:
        raise ValidationError("ground truth does not match geometry")
    roi = roi or RoiMask.full(geom.volume_dims)
    roi.check(geom.volume_dims)
    lam = cfg.resolved_lambda(geom.n_angles)
    w = cfg.tv_weights
    eps = cfg.huber_eps
    if eps is None:
        rng = float(np.ptp(np.abs(xs)))
        eps = 1e-6 * (rng if rng > 0 else 1.0)
    f = exit_waves(xs, geom) if fhat is None else np.asarray(fhat, dtype=np.complex128)
    hf = _filtered(f)

    def objective(x):
        data, gd = two_step_gradient(x, hf, geom)
        if lam > 0:
            tv, gt = huber_tv(x, w, eps)
        else:
            tv, gt = 0.0, 0.0
        return data + lam * tv, data, tv, gd + lam * gt

    x = np.zeros(geom.volume_dims, dtype=np.complex128) if x0 is None else np.array(x0, dtype=np.complex128)
    c = 2 * np.pi / geom.wavelength
    trace = ReconTrace.empty(cfg.n_iter)
    trace.lambda_tv = lam
    fval, cur_data, cur_tv, grad = objective(x)
    trace.initial_loss_total = fval
    p = -grad
    best = (math.inf, x.copy(), 0)
    alpha_prev = None
    for it in range(1, cfg.n_iter + 1):
        slope = float(np.vdot(grad, p).real)
        if not slope < 0 or (it - 1) % cfg.restart_every == 0:
            p = -grad
            slope = -float(np.vdot(grad, grad).real)
        # Exact minimizer of the quadratic data term along p as the first trial.
        hp = ramp_apply(project_all(p, geom))
        curv = 2 * c * c * float(np.sum(np.abs(hp) ** 2))
        alpha = -slope / curv if curv > 0 else (alpha_prev or 1.0)
        if lam > 0 and alpha_prev is not None:
            alpha = min(alpha, 4 * alpha_prev)
        accepted = False
        for _ in range(cfg.max_backtrack):
            x_try = x + alpha * p
            f_try, data, tv, g_try = objective(x_try)
            if not np.isfinite(f_try):
                raise NumericalError(f"iteration {it}: non-finite 2-Step loss")
            if f_try <= fval + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        i = it - 1
        if accepted:
            beta = max(0.0, float(np.vdot(g_try, g_try - grad).real) / float(np.vdot(grad, grad).real))
            trace.delta_norm[i] = alpha * float(np.linalg.norm(p))
            x, fval, cur_data, cur_tv, grad = x_try, f_try, data, tv, g_try
            p = -grad + beta * p
            alpha_prev = alpha
        else:
            # Line search failed: keep x, restart along the gradient next time.
            trace.delta_norm[i] = 0.0
            p = -grad
            alpha = 0.0
        trace.loss_total[i] = fval
        trace.loss_data[i] = cur_data
        trace.tv[i] = cur_tv
        trace.step[i] = alpha
        trace.rel_err_raw[i] = relative_error(x, xs, roi)
        score = trace.rel_err_raw[i]
        if known is not None:
            trace.rel_err_corrected[i] = relative_error(correct(x, known, geom), xs, roi)
            score = trace.rel_err_corrected[i]
        if score < best[0]:
            best = (score, x.copy(), it)
    if cfg.select == "best":
        trace.best_iter = best[2]
        out = best[1]
    else:
        trace.best_iter = cfg.n_iter
        out = x
    logger.debug("two_step: best iteration %s of %d", trace.best_iter, cfg.n_iter)
    return ComplexVolume(out, geom.pitch), trace
