"""Phaseless ptychographic tomography of complex refractive-index volumes by
proximal accelerated Wirtinger flow, with a linearized 2-Step baseline."""

__version__ = "0.1.0"

from .awf import KnownRegionMask, ReconConfig, ReconTrace, correct, make_known_masks, reconstruct
from .baseline import BaselineConfig, ramp_apply, two_step_reconstruct
from .estimators import AWFReconstructor, TwoStepReconstructor, WrapCorrector
from .exceptions import FormatError, NumericalError, ProxNotConvergedWarning, ValidationError
from .forward import (MeasurementSet, NoiseModel, ProbeSet, apply_A, apply_A_adjoint, exit_wave_nmse,
                      exit_waves, linearized_exit_wave, make_probes, read_measurements,
                      simulate_measurements, write_measurements)
from .objective import gradient, loss, loss_and_gradient, smoothed_gradient, smoothed_loss
from .objective import step_size_adaptive, step_size_theorem
from .projector import Geometry, backproject, backproject_all, make_geometry, project, project_all
from .tvprox import TvWeights, tv_prox, tv_value
from .volume import (ComplexVolume, LayerSpec, RoiMask, make_phantom, read_volume, relative_error,
                     write_volume)

__all__ = [name for name in dir() if not name.startswith("_")]
