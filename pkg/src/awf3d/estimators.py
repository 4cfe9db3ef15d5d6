"""scikit-learn style wrappers around the functional API.

Tomographic reconstruction is transductive: ``fit`` consumes one measurement
set and ``predict`` returns the volume fitted to it.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_measurements, check_volume
from .awf import KnownRegionMask, ReconConfig, correct, correction_offset, reconstruct
from .baseline import BaselineConfig, two_step_reconstruct
from .projector import Geometry
from .volume import ComplexVolume, RoiMask, relative_error

__all__ = ["AWFReconstructor", "TwoStepReconstructor", "WrapCorrector"]


class _VolumeScoreMixin:
    def predict(self, X=None) -> ComplexVolume:
        """The fitted (corrected when masks were given) volume."""
        check_is_fitted(self, "volume_")
        return self.volume_

    def score(self, x_true, roi: RoiMask | None = None) -> float:
        """Negative ROI relative error of :meth:`predict` (higher is better)."""
        check_is_fitted(self, "volume_")
        return -relative_error(self.volume_, check_volume(x_true, self.volume_.dims, "x_true"), roi)


class AWFReconstructor(_VolumeScoreMixin, BaseEstimator):
    """Proximal accelerated Wirtinger flow; parameters mirror :class:`ReconConfig`."""

    def __init__(self, n_iter=550, step_mode="adaptive", fixed_step=None, momentum="nesterov",
                 lambda_tv=None, lambda_tv_anchor=0.1, anchor_angles=100, tv_weights=(1.0, 1.0, 0.1),
                 tv_mode="complex", prox_max_iter=50, prox_tol=1e-6):
        self.n_iter = n_iter
        self.step_mode = step_mode
        self.fixed_step = fixed_step
        self.momentum = momentum
        self.lambda_tv = lambda_tv
        self.lambda_tv_anchor = lambda_tv_anchor
        self.anchor_angles = anchor_angles
        self.tv_weights = tv_weights
        self.tv_mode = tv_mode
        self.prox_max_iter = prox_max_iter
        self.prox_tol = prox_tol

    def config(self) -> ReconConfig:
        return ReconConfig(**self.get_params())

    def fit(self, X, y=None, known: KnownRegionMask | None = None, roi: RoiMask | None = None):
        """``X`` is a :class:`MeasurementSet`; ``y`` an optional ground truth for the trace."""
        ms = check_measurements(X)
        if y is not None:
            y = check_volume(y, ms.geometry.volume_dims, "x_true")
        raw, trace = reconstruct(ms, self.config(), x_true=y, known=known, roi=roi)
        self.volume_raw_ = raw
        self.trace_ = trace
        if known is not None:
            self.offset_ = correction_offset(raw, known, ms.geometry)
            self.volume_ = correct(raw, known, ms.geometry)
        else:
            self.offset_ = 0.0
            self.volume_ = raw
        return self


class TwoStepReconstructor(_VolumeScoreMixin, BaseEstimator):
    """2-Step baseline; ``fit`` takes the ground truth, whose exit waves it assumes known."""

    def __init__(self, n_iter=550, lambda_tv=None, lambda_tv_anchor=1e2, anchor_angles=100,
                 tv_weights=(1.0, 1.0, 0.1), huber_eps=None, restart_every=50, select="best"):
        self.n_iter = n_iter
        self.lambda_tv = lambda_tv
        self.lambda_tv_anchor = lambda_tv_anchor
        self.anchor_angles = anchor_angles
        self.tv_weights = tv_weights
        self.huber_eps = huber_eps
        self.restart_every = restart_every
        self.select = select

    def config(self) -> BaselineConfig:
        return BaselineConfig(**self.get_params())

    def fit(self, X, geometry: Geometry, known: KnownRegionMask | None = None, roi: RoiMask | None = None):
        xs = check_volume(X, geometry.volume_dims, "x_star")
        best, trace = two_step_reconstruct(xs, geometry, self.config(), known=known, roi=roi)
        self.volume_raw_ = best
        self.trace_ = trace
        self.volume_ = correct(best, known, geometry) if known is not None else best
        return self


class WrapCorrector(TransformerMixin, BaseEstimator):
    """Removes the constant real offset fitted on the known pixels.

    ``fit`` learns ``offset_`` from one volume; ``transform`` subtracts it, so
    ``fit_transform(x)`` equals :func:`correct`.
    """

    def __init__(self, known: KnownRegionMask | None = None, geometry: Geometry | None = None):
        self.known = known
        self.geometry = geometry

    def fit(self, X, y=None):
        if self.known is None or self.geometry is None:
            raise ValueError("WrapCorrector needs known masks and a geometry")
        x = check_volume(X, self.geometry.volume_dims)
        self.offset_ = correction_offset(x, self.known, self.geometry)
        return self

    def transform(self, X):
        check_is_fitted(self, "offset_")
        if isinstance(X, ComplexVolume):
            return X.with_data(X.data - self.offset_)
        return check_volume(X, self.geometry.volume_dims) - self.offset_
