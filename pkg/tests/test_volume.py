import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awf3d import ComplexVolume, FormatError, LayerSpec, RoiMask, ValidationError
from awf3d import make_phantom, read_volume, relative_error, write_volume
from awf3d.volume import DEFAULT_PALETTE


def test_volume_is_read_only_copy():
    a = np.zeros((2, 3, 4), dtype=complex)
    v = ComplexVolume(a)
    a[0, 0, 0] = 1
    assert v.data[0, 0, 0] == 0
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 1
    assert v.dims == (2, 3, 4)


def test_volume_promotes_real_and_validates():
    v = ComplexVolume(np.ones((2, 2, 2)))
    assert v.data.dtype == np.complex128
    with pytest.raises(ValidationError):
        ComplexVolume(np.ones((2, 2)))
    with pytest.raises(ValidationError):
        ComplexVolume(np.ones((2, 2, 2)), pitch=0.0)


def test_admissibility():
    assert ComplexVolume(np.full((2, 2, 2), 1 + 1j)).is_admissible()
    assert not ComplexVolume(np.full((2, 2, 2), 1 - 1j)).is_admissible()


def test_uniform_palette_gives_constant_volume():
    v = make_phantom((6, 5, 4), 3, LayerSpec.uniform(0.01 + 0.002j))
    assert np.all(v.data == 0.01 + 0.002j)


def test_phantom_deterministic_and_seeded():
    a = make_phantom((16, 16, 16), 5)
    b = make_phantom((16, 16, 16), 5)
    c = make_phantom((16, 16, 16), 6)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), dims=st.tuples(*[st.integers(5, 12)] * 3))
def test_phantom_attenuation_non_negative(seed, dims):
    v = make_phantom(dims, seed)
    assert np.all(v.imag >= 0)
    assert set(np.unique(v.data)) <= set(complex(c) for c in DEFAULT_PALETTE.values())


def test_phantom_has_vacuum_shell_and_metal():
    v = make_phantom((16, 16, 16), 0)
    assert np.all(v.data[:2] == 0) and np.all(v.data[:, :, -2:] == 0)
    assert np.any(v.data == DEFAULT_PALETTE["metal"])


def test_phantom_rejects_bad_specs():
    with pytest.raises(ValidationError):
        make_phantom((3, 8, 8))
    with pytest.raises(ValidationError):
        make_phantom((8, 8, 8), layer_spec=LayerSpec(background="gold"))
    with pytest.raises(ValidationError):
        make_phantom((8, 8, 8), layer_spec=LayerSpec.uniform(1 - 1j))


def test_relative_error_identity_and_homogeneity(phantom16):
    assert relative_error(phantom16, phantom16) == 0.0
    assert relative_error(phantom16.data * 2, phantom16) == pytest.approx(1.0, rel=1e-15)


def test_relative_error_reports_roi_norm_ratio(phantom16, rng):
    roi = RoiMask.centered(phantom16.dims, 0.5)
    e = rng.standard_normal(phantom16.dims) + 1j * rng.standard_normal(phantom16.dims)
    m = np.zeros(phantom16.dims)
    m[roi.slices] = 1
    expect = np.linalg.norm(m * e) / np.linalg.norm(m * phantom16.data)
    assert relative_error(phantom16.data + e, phantom16, roi) == pytest.approx(expect, rel=1e-12)


def test_relative_error_errors():
    z = np.zeros((4, 4, 4))
    with pytest.raises(ValidationError):
        relative_error(z, z)
    with pytest.raises(ValidationError):
        relative_error(np.zeros((4, 4, 3)), z)


def test_roi_masks():
    full = RoiMask.full((4, 6, 8))
    assert full.size == 4 * 6 * 8
    c = RoiMask.centered((16, 16, 16), 0.5)
    assert c.lo == (4, 4, 4) and c.hi == (12, 12, 12)
    with pytest.raises(ValidationError):
        RoiMask.centered((16, 16, 16), 0.0)
    with pytest.raises(ValidationError):
        c.check((8, 8, 8))


@settings(max_examples=15, deadline=None)
@given(dims=st.tuples(*[st.integers(1, 6)] * 3), seed=st.integers(0, 1000), single=st.booleans())
def test_round_trip_bit_exact(tmp_path_factory, dims, seed, single):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal(dims) + 1j * rng.standard_normal(dims)
    if single:
        data = data.astype(np.complex64)
    v = ComplexVolume(data, pitch=0.5)
    d = tmp_path_factory.mktemp("vol")
    write_volume(d / "v", v)
    w = read_volume(d / "v.json")
    assert w.data.dtype == v.data.dtype and w.pitch == 0.5
    assert w.data.tobytes() == v.data.tobytes()


def test_payload_is_x_fastest(tmp_path):
    data = np.arange(24, dtype=float).reshape(2, 3, 4) + 0j
    write_volume(tmp_path / "v", ComplexVolume(data))
    flat = np.frombuffer((tmp_path / "v.bin").read_bytes(), dtype="<c16")
    assert flat[1] == data[1, 0, 0] and flat[2] == data[0, 1, 0]


def test_header_payload_mismatch(tmp_path):
    write_volume(tmp_path / "v", ComplexVolume(np.zeros((2, 2, 2))))
    (tmp_path / "v.bin").write_bytes(np.zeros(7, dtype="<c16").tobytes())
    with pytest.raises(FormatError):
        read_volume(tmp_path / "v")
    (tmp_path / "v.bin").write_bytes(b"\0" * 17)
    with pytest.raises(FormatError):
        read_volume(tmp_path / "v")


@pytest.mark.parametrize("patch", [{"dims": [2, 2]}, {"dtype": "float32"}, {"order": "z-fastest"},
                                   {"pitch": -1}, {"extra": 1}])
def test_bad_headers(tmp_path, patch):
    write_volume(tmp_path / "v", ComplexVolume(np.zeros((2, 2, 2))))
    h = json.loads((tmp_path / "v.json").read_text())
    h.update(patch)
    (tmp_path / "v.json").write_text(json.dumps(h))
    with pytest.raises(FormatError):
        read_volume(tmp_path / "v")
