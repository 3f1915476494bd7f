import gzip

import numpy as np
import pytest

from qstrat.errors import (
    EmptyROIError,
    FormatError,
    GeometryError,
    InputError,
    UnknownLabelError,
    UnsupportedError,
)
from qstrat.volume_io import LabelMap, Volume, dice, extract_roi_values, read_nifti, write_nifti


@pytest.fixture
def grid():
    rng = np.random.default_rng(0)
    return rng.normal(size=(4, 5, 3))


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("big_endian", [False, True])
def test_nifti_roundtrip(tmp_path, grid, dtype, big_endian):
    path = tmp_path / "v.nii"
    write_nifti(path, Volume(grid, (0.5, 0.75, 1.0), intent="QSM"), dtype=dtype, big_endian=big_endian)
    vol = read_nifti(path, intent="QSM")
    assert vol.dims == grid.shape
    assert vol.voxel_size == (0.5, 0.75, 1.0)
    assert np.array_equal(vol.data, grid.astype(dtype).astype(np.float64))
    assert vol.affine is not None and np.allclose(np.diag(vol.affine)[:3], (0.5, 0.75, 1.0))


def test_gzip_accepted_unless_disabled(tmp_path, grid):
    plain = tmp_path / "v.nii"
    write_nifti(plain, grid, dtype=np.float64)
    gz = tmp_path / "v.nii.gz"
    gz.write_bytes(gzip.compress(plain.read_bytes()))
    assert np.array_equal(read_nifti(gz).data, grid)
    with pytest.raises(UnsupportedError):
        read_nifti(gz, allow_gzip=False)


def test_scaling_applied(tmp_path):
    raw = np.arange(24, dtype=np.int16).reshape(2, 3, 4)
    path = tmp_path / "s.nii"
    write_nifti(path, raw, dtype=np.int16, scl_slope=0.5, scl_inter=-1.0)
    assert np.allclose(read_nifti(path).data, raw * 0.5 - 1.0)


def test_voxel_order_is_x_fastest(tmp_path):
    data = np.arange(24, dtype=np.float64).reshape(2, 3, 4)
    path = tmp_path / "o.nii"
    write_nifti(path, data, dtype=np.float64)
    body = np.frombuffer(path.read_bytes()[352:], dtype="<f8")
    assert np.array_equal(body, data.ravel(order="F"))


def test_bad_files(tmp_path, grid):
    short = tmp_path / "short.nii"
    short.write_bytes(b"\x00" * 100)
    with pytest.raises(FormatError):
        read_nifti(short)
    good = tmp_path / "g.nii"
    write_nifti(good, grid)
    raw = bytearray(good.read_bytes())
    bad_magic = tmp_path / "m.nii"
    bad_magic.write_bytes(bytes(raw[:344]) + b"ni1\x00" + bytes(raw[348:]))
    with pytest.raises(FormatError):
        read_nifti(bad_magic)
    trunc = tmp_path / "t.nii"
    trunc.write_bytes(bytes(raw[:400]))
    with pytest.raises(FormatError):
        read_nifti(trunc)
    dt = raw.copy()
    dt[70:72] = (512).to_bytes(2, "little")
    odd = tmp_path / "dt.nii"
    odd.write_bytes(bytes(dt))
    with pytest.raises(UnsupportedError):
        read_nifti(odd)


def test_labels_roundtrip_and_names(tmp_path):
    data = np.zeros((3, 3, 2), dtype=np.int16)
    data[0, :, 0] = 1
    data[2, :, 1] = 7
    path = tmp_path / "l.nii"
    write_nifti(path, LabelMap(data, (1, 1, 1), {1: "SN", 7: "SN"}), dtype=np.int16)
    lm = read_nifti(path, as_labels=True)
    assert lm.label_names == {1: "1", 7: "7"}
    named = read_nifti(path, as_labels=True, label_names={1: "SN", 7: "SN"})
    assert named.codes_for("SN") == [1, 7]
    assert named.mask("SN").sum() == 6
    with pytest.raises(UnknownLabelError):
        read_nifti(path, as_labels=True, label_names={1: "SN"})


def test_label_map_rejects_fractional_and_negative():
    with pytest.raises(UnsupportedError):
        LabelMap(np.full((2, 2, 2), 0.5), (1, 1, 1), {})
    with pytest.raises(FormatError):
        LabelMap(-np.ones((2, 2, 2), dtype=int), (1, 1, 1), {})


def test_extract_roi_values_and_geometry(grid):
    labels = np.zeros(grid.shape, dtype=int)
    labels[1, 2, 0] = labels[0, 0, 2] = labels[3, 1, 1] = 2
    lm = LabelMap(labels, (1, 1, 1), {2: "RN"})
    vol = Volume(grid, (1, 1, 1))
    got = extract_roi_values(vol, lm, "RN")
    expected = grid.ravel(order="F")[labels.ravel(order="F") == 2]
    assert np.array_equal(got, expected)
    assert np.array_equal(extract_roi_values(vol, lm, 2), expected)
    with pytest.raises(GeometryError):
        extract_roi_values(Volume(grid, (1, 1, 2)), lm, "RN")
    with pytest.raises(GeometryError):
        extract_roi_values(Volume(grid[:3], (1, 1, 1)), lm, "RN")
    empty = LabelMap(np.zeros(grid.shape, dtype=int), (1, 1, 1), {2: "RN"})
    with pytest.raises(EmptyROIError):
        extract_roi_values(vol, empty, "RN")


def test_dice_symmetric_and_bounded():
    rng = np.random.default_rng(3)
    names = {1: "a", 2: "b"}
    for _ in range(20):
        a = LabelMap(rng.integers(0, 3, (4, 4, 4)), (1, 1, 1), names)
        b = LabelMap(rng.integers(0, 3, (4, 4, 4)), (1, 1, 1), names)
        d = dice(a, b, 1)
        assert d == dice(b, a, 1)
        assert 0.0 <= d <= 1.0
    zero = LabelMap(np.zeros((4, 4, 4), dtype=int), (1, 1, 1), names)
    assert dice(zero, zero, 1) == 1.0
    with pytest.raises(GeometryError):
        dice(zero, LabelMap(np.zeros((4, 4, 3), dtype=int), (1, 1, 1), names), 1)


def test_missing_file_is_input_error(tmp_path):
    with pytest.raises(InputError):
        read_nifti(tmp_path / "absent.nii")
