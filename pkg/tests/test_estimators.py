import warnings

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from awf3d import (AWFReconstructor, ProxNotConvergedWarning, TwoStepReconstructor, ValidationError, WrapCorrector,
                   correct, make_geometry, make_known_masks, make_phantom, make_probes, reconstruct,
                   relative_error, simulate_measurements)
from awf3d.awf import correction_offset


@pytest.fixture(scope="module")
def small():
    x = make_phantom((8, 8, 8), 4)
    geom = make_geometry(x.dims, 4, 0.2)
    ms = simulate_measurements(x, geom, make_probes(geom.detector_dims))
    return x, geom, ms, make_known_masks(x, geom)


def test_params_round_trip():
    est = AWFReconstructor(n_iter=7, momentum="off")
    params = est.get_params()
    assert params["n_iter"] == 7 and params["momentum"] == "off"
    assert clone(est).get_params() == params
    assert est.set_params(n_iter=9).n_iter == 9
    assert TwoStepReconstructor().get_params()["lambda_tv_anchor"] == 1e2


def test_awf_matches_functional_api(small):
    x, geom, ms, known = small
    est = AWFReconstructor(n_iter=10)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ProxNotConvergedWarning)
        est.fit(ms, x, known=known)
        raw, trace = reconstruct(ms, est.config(), x_true=x, known=known)
    assert np.array_equal(est.volume_raw_.data, raw.data)
    assert np.array_equal(est.trace_.loss_total, trace.loss_total)
    assert est.offset_ == correction_offset(raw, known, geom)
    assert np.array_equal(est.predict().data, correct(raw, known, geom).data)
    assert est.score(x) == pytest.approx(-relative_error(est.predict(), x))


def test_unfitted_and_bad_input(small):
    x, _, ms, _ = small
    with pytest.raises(NotFittedError):
        AWFReconstructor().predict()
    with pytest.raises(ValidationError):
        AWFReconstructor(n_iter=1).fit(x)
    with pytest.raises(ValidationError):
        AWFReconstructor(n_iter=1).fit(ms, np.zeros((4, 4, 4)))
    with pytest.raises(ValidationError):
        AWFReconstructor(step_mode="bogus").fit(ms)


def test_two_step_estimator(small):
    x, geom, _, known = small
    est = TwoStepReconstructor(n_iter=10).fit(x, geom, known=known)
    assert est.trace_.best_iter >= 1
    assert np.array_equal(est.predict().data, correct(est.volume_raw_, known, geom).data)
    with pytest.raises(ValidationError):
        TwoStepReconstructor(n_iter=2).fit(np.ones((8, 8, 8, 1)), geom)


def test_wrap_corrector(small):
    x, geom, _, known = small
    shifted = x.with_data(x.data + 0.3)
    wc = WrapCorrector(known, geom)
    out = wc.fit_transform(shifted)
    assert wc.offset_ == pytest.approx(0.3)
    assert np.array_equal(out.data, correct(shifted, known, geom).data)
    arr = wc.transform(shifted.data)
    assert isinstance(arr, np.ndarray) and np.allclose(arr, x.data)
    with pytest.raises(ValueError):
        WrapCorrector().fit(shifted)
    with pytest.raises(NotFittedError):
        WrapCorrector(known, geom).transform(shifted)
