"""Amplitude loss, its smoothed variant, the Wirtinger gradient and step sizes.

Gradients follow the conjugate-cogradient convention: for a real loss ``f``,
``grad = df/d(conj x)``, so that

    d/dt f(x + t e_j) = 2 Re(grad_j),    d/dt f(x + i t e_j) = 2 Im(grad_j),

and ``x - mu * grad`` is a descent step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NumericalError, ValidationError
from .forward import MeasurementSet, ProbeSet, apply_A, apply_A_adjoint, exit_waves
from .projector import backproject_all

__all__ = [
    "GradientWorkspace",
    "csign",
    "loss",
    "smoothed_loss",
    "gradient",
    "smoothed_gradient",
    "loss_and_gradient",
    "step_size_adaptive",
    "step_size_theorem",
]


@dataclass
class GradientWorkspace:
    """Per-view intermediates of one gradient evaluation.

    ``g`` exit waves ``(L, P_u, P_v)``; ``residual`` is ``A g - y * sgn(A g)``
    ``(L, K, P_u, P_v)``; ``h = A^H residual``; ``diag = conj(g) * h``.
    """

    g: np.ndarray
    residual: np.ndarray
    h: np.ndarray
    diag: np.ndarray
    wavelength: float
    view_norms_sq: np.ndarray | None = None


def csign(z: np.ndarray) -> np.ndarray:
    """Complex signum with ``sgn(0) = 0``."""
    a = np.abs(z)
    out = np.zeros_like(z)
    nz = a > 0
    out[nz] = z[nz] / a[nz]
    return out


def _far_field(v, ms: MeasurementSet):
    g = exit_waves(v, ms.geometry)
    return g, apply_A(g, ms.probes)


def loss(v, ms: MeasurementSet) -> float:
    """``sum_l || y_l - |A g_l| ||^2``."""
    _, z = _far_field(v, ms)
    return float(np.sum((ms.y - np.abs(z)) ** 2))


def smoothed_loss(v, ms: MeasurementSet, eps: float) -> float:
    """Loss with every modulus replaced by ``sqrt(|.|^2 + eps)``."""
    if not eps > 0:
        raise ValidationError(f"smoothing eps must be positive, got {eps}")
    _, z = _far_field(v, ms)
    return float(np.sum((np.sqrt(np.abs(z) ** 2 + eps) - ms.y) ** 2))


def _backpropagate(g, residual, ms: MeasurementSet):
    h = apply_A_adjoint(residual, ms.probes)
    diag = np.conj(g) * h
    grad = np.conj(2j * np.pi / ms.geometry.wavelength) * backproject_all(diag, ms.geometry)
    return grad, h, diag


def loss_and_gradient(v, ms: MeasurementSet):
    """Loss, generalized gradient and the workspace used by the step-size rule."""
    g, z = _far_field(v, ms)
    value = float(np.sum((ms.y - np.abs(z)) ** 2))
    residual = z - ms.y * csign(z)
    grad, h, diag = _backpropagate(g, residual, ms)
    if not (np.isfinite(value) and np.all(np.isfinite(grad))):
        raise NumericalError("non-finite loss or gradient")
    return value, grad, GradientWorkspace(g, residual, h, diag, ms.geometry.wavelength,
                                          ms.geometry.view_norms_sq)


def gradient(v, ms: MeasurementSet) -> np.ndarray:
    """Generalized Wirtinger gradient of :func:`loss`."""
    return loss_and_gradient(v, ms)[1]


def smoothed_gradient(v, ms: MeasurementSet, eps: float) -> np.ndarray:
    """Exact Wirtinger gradient of :func:`smoothed_loss`; used by checks only."""
    if not eps > 0:
        raise ValidationError(f"smoothing eps must be positive, got {eps}")
    g, z = _far_field(v, ms)
    residual = z - ms.y * z / np.sqrt(np.abs(z) ** 2 + eps)
    return _backpropagate(g, residual, ms)[0]


def step_size_adaptive(ws: GradientWorkspace, probes: ProbeSet) -> float:
    """``1 / Gamma_tau`` from the current exit waves and exit-plane gradient.

    ``Gamma_tau = (4 pi^2 / lambda^2) sum_l ||T_l||^2 [max_j(w_j |g_lj|^2) + max_j |D_lj|]``
    where ``w = sum_k |p_k|^2``; spectral norms of diagonal matrices are their
    largest absolute entries.  The ``||T_l||^2`` factor is 1 for a
    non-expansive projector; ours sums one sample per voxel step, so its norm
    grows with the ray length and must be kept.
    """
    w = probes.sum_weight
    first = np.max(w * np.abs(ws.g) ** 2, axis=(-2, -1))
    second = np.max(np.abs(ws.diag), axis=(-2, -1))
    tn = 1.0 if ws.view_norms_sq is None else ws.view_norms_sq
    gamma = 4 * np.pi ** 2 / ws.wavelength ** 2 * float(np.sum(tn * (first + second)))
    if not (gamma > 0 and np.isfinite(gamma)):
        raise NumericalError(f"adaptive step undefined (Gamma = {gamma})")
    return 1.0 / gamma


def step_size_theorem(ms: MeasurementSet) -> float:
    """Iteration-independent step bound for the momentum-free iteration.

    ``[(4 pi^2 / lambda^2) t ((1 + sqrt(P)) L lambda_max + sqrt(lambda_max) sum_l ||y_l||)]^-1``
    with ``t = max_l ||T_l||^2`` (``t = 1`` recovers the non-expansive case).
    """
    if ms.n_angles == 0 or ms.y.size == 0:
        raise ValidationError("empty measurement set")
    lam = ms.probes.lambda_max
    P = ms.geometry.n_pixels
    L = ms.n_angles
    ynorm = float(np.sum(np.sqrt(np.sum(ms.y ** 2, axis=(1, 2, 3)))))
    t = float(np.max(ms.geometry.view_norms_sq))
    gamma = 4 * np.pi ** 2 / ms.geometry.wavelength ** 2 * t * ((1 + np.sqrt(P)) * L * lam + np.sqrt(lam) * ynorm)
    if not gamma > 0:
        raise NumericalError("theorem step undefined for all-zero probes")
    return 1.0 / gamma
