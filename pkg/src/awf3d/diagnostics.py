"""Self-checks packaged for the ``gradcheck`` command: adjoint identities,
finite-difference gradient checks and a prox optimality certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import apply_A, apply_A_adjoint, make_probes, simulate_measurements
from .objective import gradient, smoothed_gradient, smoothed_loss
from .projector import backproject, make_geometry, project
from .tvprox import prox_tv_solve
from .volume import make_phantom

__all__ = ["CheckResult", "check_projector_adjoint", "check_A_adjoint", "check_gradient",
           "tv1d_certificate", "check_prox", "run_all"]


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tol)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<28s} {self.value:.3e}  (tol {self.tol:.0e})"


def _crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def check_projector_adjoint(dims=(8, 8, 8), trials: int = 20, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    """Worst ``|<T v, u> - <v, T^H u>| / (||v|| ||u||)`` over random views."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        geom = make_geometry(dims, 1, 0.2, angles=(float(rng.uniform(0, 2 * np.pi)),))
        v = _crandn(rng, dims)
        u = _crandn(rng, geom.detector_dims)
        lhs = np.vdot(u, project(v, geom, 0))
        rhs = np.vdot(backproject(u, geom, 0), v)
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(v) * np.linalg.norm(u)))
    return CheckResult("projector adjoint", worst, tol)


def check_A_adjoint(detector=(12, 8), trials: int = 20, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    probes = make_probes(detector)
    worst = 0.0
    for _ in range(trials):
        g = _crandn(rng, detector)
        z = _crandn(rng, (probes.n_probes, *detector))
        lhs = np.vdot(z, apply_A(g, probes))
        rhs = np.vdot(apply_A_adjoint(z, probes), g)
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(g) * np.linalg.norm(z)))
    return CheckResult("ptychographic adjoint", worst, tol)


def _fd_wirtinger(f, v, j, h):
    e = np.zeros(v.shape, dtype=np.complex128)
    e[j] = 1.0
    dr = (f(v + h * e) - f(v - h * e)) / (2 * h)
    di = (f(v + 1j * h * e) - f(v - 1j * h * e)) / (2 * h)
    return 0.5 * (dr + 1j * di)


def check_gradient(dims=(8, 8, 8), n_angles: int = 3, n_coords: int = 20, eps: float = 1e-4,
                   amplitude: float = 1.0, seed: int = 0, tol: float = 1e-4,
                   gradient_scale: float = 1.0, generalized: bool = False) -> CheckResult:
    """Central differences of the smoothed loss against the analytic gradient.

    ``generalized=True`` compares against the unsmoothed optimizer gradient,
    which only agrees when the far field is bright relative to ``sqrt(eps)``.
    ``gradient_scale`` multiplies the analytic gradient, for sensitivity tests.
    """
    rng = np.random.default_rng(seed)
    x = make_phantom(dims, seed)
    geom = make_geometry(dims, n_angles, 0.2)
    ms = simulate_measurements(x, geom, make_probes(geom.detector_dims, amplitude=amplitude))
    v = x.data + 1e-3 * _crandn(rng, dims)
    grad = gradient(v, ms) if generalized else smoothed_gradient(v, ms, eps)
    grad = gradient_scale * grad
    h = 1e-6
    worst = 0.0
    for _ in range(n_coords):
        j = tuple(int(rng.integers(0, n)) for n in dims)
        fd = _fd_wirtinger(lambda w: smoothed_loss(w, ms, eps), v, j, h)
        worst = max(worst, abs(fd - grad[j]) / max(abs(fd), 1e-300))
    name = "gradient (generalized)" if generalized else "gradient (smoothed)"
    return CheckResult(name, worst, tol)


def tv1d_certificate(u: np.ndarray, z: np.ndarray, alpha: float) -> float:
    """Optimality violation of ``u`` for ``min 0.5||u-z||^2 + alpha sum |u[i+1]-u[i]|``.

    Stationarity fixes the subgradients ``s_i = s_{i-1} + (u_i - z_i) / alpha``
    (``s_{-1} = 0``); ``u`` is optimal iff the final ``s`` vanishes and each
    ``s_i`` lies in the subdifferential of ``|d_i|``, i.e. ``|s_i| <= 1`` and
    ``Re(conj(s_i) d_i) = |d_i|``.  Returns the largest violation in the units of ``u``.
    """
    u = np.asarray(u, dtype=np.complex128).ravel()
    z = np.asarray(z, dtype=np.complex128).ravel()
    s = np.cumsum((u - z) / alpha)
    d = np.diff(u)
    sd = s[:-1]
    viol = alpha * np.maximum(np.abs(sd) - 1.0, 0.0) + np.abs(np.abs(d) - (np.conj(sd) * d).real)
    return float(max(abs(s[-1]) * alpha, viol.max(initial=0.0)))


def check_prox(n: int = 5, trials: int = 10, seed: int = 0, tol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        z = _crandn(rng, (n, 1, 1))
        alpha = float(rng.uniform(0.05, 1.0))
        u, _, _ = prox_tv_solve(z, (1.0, 0.0, 0.0), alpha, "complex", max_iter=20000, tol=1e-15)
        worst = max(worst, tv1d_certificate(u, z, alpha))
    return CheckResult("TV prox certificate", worst, tol)


def run_all(seed: int = 0, gradient_scale: float = 1.0) -> list[CheckResult]:
    return [
        check_projector_adjoint(seed=seed),
        check_A_adjoint(seed=seed),
        check_gradient(seed=seed, gradient_scale=gradient_scale),
        check_prox(seed=seed),
    ]
