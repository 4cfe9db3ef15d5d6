import numpy as np
import pytest

from awf3d import (BaselineConfig, ValidationError, correct, linearized_exit_wave, make_geometry, make_known_masks,
                   make_phantom, ramp_apply, relative_error, two_step_reconstruct)
from awf3d.baseline import RampFilter, huber_tv, two_step_gradient, two_step_loss
from awf3d.tvprox import tv_value
from awf3d.volume import RoiMask


def crandn(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def real_fd(f, v, j, h=1e-6):
    e = np.zeros(v.shape, dtype=np.complex128)
    e[j] = 1.0
    dr = (f(v + h * e) - f(v - h * e)) / (2 * h)
    di = (f(v + 1j * h * e) - f(v - 1j * h * e)) / (2 * h)
    return dr + 1j * di


@pytest.fixture(scope="module")
def small():
    x = make_phantom((8, 8, 8), 3)
    return x, make_geometry(x.dims, 4, 0.2)


def test_ramp_kills_constants():
    img = np.full((11, 4), 2.5)
    assert np.allclose(ramp_apply(img), 0, atol=1e-15)
    assert RampFilter(8).response[0] == 0 and RampFilter(8).response[4] == 0.5
    with pytest.raises(ValidationError):
        RampFilter(0)


def test_ramp_self_adjoint(rng):
    u, w = crandn(rng, (2, 13, 5))
    lhs = np.vdot(ramp_apply(u), w)
    rhs = np.vdot(u, ramp_apply(w))
    assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(w)


def test_ramp_real_in_real_out(rng):
    out = ramp_apply(rng.standard_normal((9, 3)))
    assert np.isrealobj(out)


def test_huber_tv_limits_and_gradient(rng):
    x = crandn(rng, (4, 3, 3))
    w = (1.0, 0.5, 0.1)
    val, grad = huber_tv(x, w, 1e-9)
    assert val == pytest.approx(tv_value(x, w), rel=1e-8)
    eps = 0.5
    for _ in range(6):
        j = tuple(int(rng.integers(0, n)) for n in x.shape)
        fd = real_fd(lambda v: huber_tv(v, w, eps)[0], x, j)
        assert abs(fd - huber_tv(x, w, eps)[1][j]) <= 1e-6 * max(1.0, abs(fd))


def test_data_gradient_matches_fd(small, rng):
    x, geom = small
    hf = ramp_apply(linearized_exit_wave(x, geom) + 0.01 * crandn(rng, (4, *geom.detector_dims)))
    v = 0.5 * x.data + 1e-3 * crandn(rng, x.dims)
    val, g = two_step_gradient(v, hf, geom)
    assert val == two_step_loss(v, hf, geom)
    for _ in range(10):
        j = tuple(int(rng.integers(0, 8)) for _ in range(3))
        fd = real_fd(lambda u: two_step_loss(u, hf, geom), v, j)
        assert abs(fd - g[j]) <= 1e-6 * abs(fd)


def test_data_gradient_vanishes_on_linear_data(small):
    x, geom = small
    hf = ramp_apply(linearized_exit_wave(x, geom))
    val, g = two_step_gradient(x.data, hf, geom)
    assert val <= 1e-24 * np.sum(np.abs(hf) ** 2)
    assert np.linalg.norm(g) <= 1e-10 * np.linalg.norm(hf)


@pytest.mark.parametrize("bad", [dict(n_iter=0), dict(lambda_tv=-1.0), dict(huber_eps=0.0),
                                 dict(restart_every=0), dict(select="median")])
def test_config_validation(bad):
    with pytest.raises(ValidationError):
        BaselineConfig(**bad)


def test_lambda_anchor():
    assert BaselineConfig().resolved_lambda(8) == pytest.approx(1e2 * 8 / 100)
    assert BaselineConfig(lambda_tv=3.0).resolved_lambda(8) == 3.0


def test_linear_data_monotone_loss(small):
    x, geom = small
    _, trace = two_step_reconstruct(x, geom, BaselineConfig(n_iter=60, lambda_tv=0.0),
                                    fhat=linearized_exit_wave(x, geom))
    f = np.concatenate([[trace.initial_loss_total], trace.loss_total])
    assert np.all(np.diff(f) <= 0)
    assert np.all(trace.step >= 0)


def test_linear_data_converges(phantom16):
    geom = make_geometry(phantom16.dims, 8, 0.2)
    _, trace = two_step_reconstruct(phantom16, geom, BaselineConfig(n_iter=300, lambda_tv=0.0),
                                    fhat=linearized_exit_wave(phantom16, geom))
    assert trace.loss_data[-1] <= 1e-6 * trace.initial_loss_total


def test_best_iterate_selection(small):
    x, geom = small
    known = make_known_masks(x, geom)
    roi = RoiMask.centered(x.dims, 0.5)
    cfg = BaselineConfig(n_iter=40)
    best, trace = two_step_reconstruct(x, geom, cfg, known=known, roi=roi)
    i = trace.best_iter - 1
    assert trace.rel_err_corrected[i] == np.nanmin(trace.rel_err_corrected)
    assert trace.rel_err_corrected[i] <= trace.rel_err_corrected[-1]
    assert relative_error(correct(best, known, geom), x, roi) == pytest.approx(trace.rel_err_corrected[i])
    last, tl = two_step_reconstruct(x, geom, BaselineConfig(n_iter=40, select="last"), known=known, roi=roi)
    assert tl.best_iter == 40
    assert relative_error(last, x, roi) == pytest.approx(tl.rel_err_raw[-1])


def test_baseline_deterministic(small):
    x, geom = small
    a, _ = two_step_reconstruct(x, geom, BaselineConfig(n_iter=15))
    b, _ = two_step_reconstruct(x, geom, BaselineConfig(n_iter=15))
    assert a.data.tobytes() == b.data.tobytes()


def test_rejects_mismatched_truth(small):
    _, geom = small
    with pytest.raises(ValidationError):
        two_step_reconstruct(np.zeros((4, 4, 4)), geom)
