"""NIfTI-1 volumes and label maps, ROI gathering, and the Dice coefficient.

Only the single-file ``.nii`` layout is handled (348-byte header, ``n+1``
magic); gzip-compressed files are accepted when ``allow_gzip`` is set.
Orientation is read and kept for diagnostics but never used for analysis:
volumes and label maps are assumed to be voxel-aligned already.
"""
from __future__ import annotations

import gzip
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyROIError,
    FormatError,
    GeometryError,
    InputError,
    UnknownLabelError,
    UnsupportedError,
    DataError,
)

HEADER_SIZE = 348
INTENTS = ("R1", "R2star", "QSM", "raw")

# NIfTI datatype code -> numpy dtype (byte order applied at read time)
_DTYPES = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
}
_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


@dataclass(frozen=True)
class Volume:
    """One scalar map on a 3-D grid; ``data`` is indexed ``[x, y, z]``."""

    data: np.ndarray
    voxel_size: tuple
    intent: str = "raw"
    affine: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise GeometryError(f"volume must be 3-D, got shape {data.shape}")
        vs = tuple(float(v) for v in self.voxel_size)
        if len(vs) != 3 or not all(v > 0 for v in vs):
            raise GeometryError(f"voxel sizes must be 3 positive values, got {vs}")
        if self.intent not in INTENTS:
            raise ValueError(f"unknown intent {self.intent!r}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "voxel_size", vs)

    @property
    def dims(self):
        return self.data.shape


@dataclass(frozen=True)
class LabelMap:
    """Integer ROI codes on a 3-D grid plus the code -> ROI name table.

    Several codes may share one name (e.g. left and right putamen); such
    codes are merged whenever the ROI is addressed by name.
    """

    data: np.ndarray
    voxel_size: tuple
    label_names: dict
    affine: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise GeometryError(f"label map must be 3-D, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.integer):
            if not np.all(np.isfinite(data)) or np.any(data != np.round(data)):
                raise UnsupportedError("label map values must be integers")
        data = data.astype(np.int64)
        if data.size and data.min() < 0:
            raise FormatError("label map contains negative codes")
        vs = tuple(float(v) for v in self.voxel_size)
        if len(vs) != 3 or not all(v > 0 for v in vs):
            raise GeometryError(f"voxel sizes must be 3 positive values, got {vs}")
        names = {int(k): str(v) for k, v in dict(self.label_names).items()}
        present = set(np.unique(data).tolist()) - {0}
        missing = sorted(present - set(names))
        if missing:
            raise UnknownLabelError(f"codes {missing} present in data but not named")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "voxel_size", vs)
        object.__setattr__(self, "label_names", names)

    @property
    def dims(self):
        return self.data.shape

    def codes_for(self, roi):
        """Codes that make up ``roi`` (an int code or an ROI name)."""
        if isinstance(roi, (int, np.integer)) and not isinstance(roi, bool):
            if int(roi) not in self.label_names:
                raise UnknownLabelError(f"label {roi} not in label names")
            return [int(roi)]
        codes = sorted(c for c, n in self.label_names.items() if n == roi)
        if not codes:
            raise UnknownLabelError(f"ROI {roi!r} not in label names")
        return codes

    def roi_name(self, roi):
        if isinstance(roi, str):
            return roi
        return self.label_names.get(int(roi), str(roi))

    def mask(self, roi):
        return np.isin(self.data, self.codes_for(roi))


def check_geometry(a, b):
    """Raise GeometryError unless ``a`` and ``b`` share dims and voxel size."""
    if tuple(a.dims) != tuple(b.dims):
        raise GeometryError(f"dims differ: {tuple(a.dims)} vs {tuple(b.dims)}")
    if not np.allclose(a.voxel_size, b.voxel_size, rtol=1e-5, atol=0):
        raise GeometryError(f"voxel sizes differ: {a.voxel_size} vs {b.voxel_size}")
    if a.affine is not None and b.affine is not None:
        if not np.allclose(a.affine, b.affine, rtol=1e-5, atol=1e-4):
            warnings.warn("affines differ; assuming the grids are voxel-aligned", stacklevel=3)


# --------------------------------------------------------------------------
# NIfTI-1


def _open_bytes(path, allow_gzip):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if raw[:2] == b"\x1f\x8b":
        if not allow_gzip:
            raise UnsupportedError(f"{path}: gzip-compressed NIfTI not enabled")
        raw = gzip.decompress(raw)
    return raw


def _parse_header(raw, path):
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"{path}: file shorter than a NIfTI-1 header")
    if struct.unpack("<i", raw[:4])[0] == HEADER_SIZE:
        endian = "<"
    elif struct.unpack(">i", raw[:4])[0] == HEADER_SIZE:
        endian = ">"
    else:
        raise FormatError(f"{path}: sizeof_hdr is not 348")
    if raw[344:348] != b"n+1\x00":
        raise FormatError(f"{path}: bad magic {raw[344:348]!r} (need single-file n+1)")
    dim = struct.unpack(endian + "8h", raw[40:56])
    datatype, bitpix = struct.unpack(endian + "2h", raw[70:74])
    pixdim = struct.unpack(endian + "8f", raw[76:108])
    vox_offset, scl_slope, scl_inter = struct.unpack(endian + "3f", raw[108:120])
    sform_code = struct.unpack(endian + "h", raw[254:256])[0]
    srow = np.array(struct.unpack(endian + "12f", raw[280:328]), dtype=np.float64).reshape(3, 4)
    return {
        "endian": endian,
        "dim": dim,
        "datatype": datatype,
        "bitpix": bitpix,
        "pixdim": pixdim,
        "vox_offset": vox_offset,
        "scl_slope": scl_slope,
        "scl_inter": scl_inter,
        "sform_code": sform_code,
        "srow": srow,
    }


def read_nifti(
    path,
    *,
    as_labels=False,
    label_names=None,
    intent="raw",
    allow_nonfinite=False,
    allow_gzip=True,
):
    """Load a NIfTI-1 file as a :class:`Volume` or, with ``as_labels``, a :class:`LabelMap`.

    Values are scaled by ``scl_slope``/``scl_inter`` whenever the slope is
    nonzero. Label maps require an integer datatype (or integral values after
    scaling). When ``label_names`` is omitted every code present is named by
    its decimal string.
    """
    raw = _open_bytes(path, allow_gzip)
    hdr = _parse_header(raw, path)
    dim = hdr["dim"]
    if dim[0] not in (3, 4):
        raise GeometryError(f"{path}: dim[0]={dim[0]}, expected 3 or 4")
    dims = tuple(int(d) for d in dim[1:4])
    if any(d <= 0 for d in dims) or (dim[0] == 4 and dim[4] <= 0):
        raise GeometryError(f"{path}: non-positive dimension in {dim[1:dim[0] + 1]}")
    if dim[0] == 4 and dim[4] > 1:
        warnings.warn(f"{path}: 4-D file, using the first of {dim[4]} volumes", stacklevel=2)
    code = hdr["datatype"]
    if code not in _DTYPES:
        raise UnsupportedError(f"{path}: unsupported NIfTI datatype {code}")
    dtype = np.dtype(_DTYPES[code]).newbyteorder(hdr["endian"])
    offset = int(hdr["vox_offset"])
    if offset < HEADER_SIZE:
        offset = 352
    n = dims[0] * dims[1] * dims[2]
    if len(raw) < offset + n * dtype.itemsize:
        raise FormatError(f"{path}: truncated voxel data")
    flat = np.frombuffer(raw, dtype=dtype, count=n, offset=offset)
    data = flat.reshape(dims, order="F")
    slope, inter = hdr["scl_slope"], hdr["scl_inter"]
    scaled = slope != 0 and np.isfinite(slope) and not (slope == 1 and inter == 0)
    if scaled:
        data = data.astype(np.float64) * slope + inter

    pd = hdr["pixdim"]
    voxel_size = (abs(pd[1]), abs(pd[2]), abs(pd[3]))
    affine = None
    if hdr["sform_code"] > 0:
        affine = np.vstack([hdr["srow"], [0, 0, 0, 1]])

    if as_labels:
        if label_names is None:
            codes = np.unique(np.asarray(data)).tolist()
            label_names = {int(c): str(int(c)) for c in codes if c != 0}
        return LabelMap(np.array(data), voxel_size, label_names, affine=affine)
    data = np.asarray(data, dtype=np.float64)
    if not allow_nonfinite and not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite voxel values")
    return Volume(data, voxel_size, intent=intent, affine=affine)


def write_nifti(path, obj, *, dtype=None, scl_slope=0.0, scl_inter=0.0, big_endian=False):
    """Write a Volume, LabelMap or raw ``[x, y, z]`` array as single-file NIfTI-1."""
    if isinstance(obj, (Volume, LabelMap)):
        data, voxel_size = obj.data, obj.voxel_size
    else:
        data, voxel_size = np.asarray(obj), (1.0, 1.0, 1.0)
    if dtype is None:
        dtype = np.int32 if isinstance(obj, LabelMap) else np.float32
    dtype = np.dtype(dtype)
    if dtype not in _CODES:
        raise UnsupportedError(f"cannot write dtype {dtype}")
    e = ">" if big_endian else "<"
    hdr = bytearray(HEADER_SIZE)
    struct.pack_into(e + "i", hdr, 0, HEADER_SIZE)
    struct.pack_into(e + "8h", hdr, 40, 3, *data.shape, 1, 1, 1, 1)
    struct.pack_into(e + "2h", hdr, 70, _CODES[dtype], dtype.itemsize * 8)
    struct.pack_into(e + "8f", hdr, 76, 1.0, *voxel_size, 0, 0, 0, 0)
    struct.pack_into(e + "3f", hdr, 108, 352.0, scl_slope, scl_inter)
    struct.pack_into(e + "B", hdr, 123, 2)  # xyzt_units: mm
    struct.pack_into(e + "2h", hdr, 252, 0, 1)  # qform_code, sform_code
    srow = np.zeros((3, 4))
    srow[[0, 1, 2], [0, 1, 2]] = voxel_size
    struct.pack_into(e + "12f", hdr, 280, *srow.ravel())
    hdr[344:348] = b"n+1\x00"
    body = np.asarray(data).astype(dtype.newbyteorder(e)).tobytes(order="F")
    Path(path).write_bytes(bytes(hdr) + b"\x00\x00\x00\x00" + body)


# --------------------------------------------------------------------------
# mask utilities


def dice(a, b, label):
    """Dice-Sørensen overlap of ``label`` between two label maps (1.0 if absent in both)."""
    if tuple(a.dims) != tuple(b.dims):
        raise GeometryError(f"dims differ: {tuple(a.dims)} vs {tuple(b.dims)}")
    ma = np.asarray(a.data) == label
    mb = np.asarray(b.data) == label
    total = int(ma.sum()) + int(mb.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(ma, mb).sum()) / total


def extract_roi_values(vol, labels, label):
    """Map values inside one ROI, in file voxel order (x fastest).

    ``label`` is either a code or an ROI name; a name gathers every code that
    carries it.
    """
    check_geometry(vol, labels)
    mask = labels.mask(label)
    values = np.asarray(vol.data).ravel(order="F")[mask.ravel(order="F")]
    if values.size == 0:
        raise EmptyROIError(labels.roi_name(label))
    return values
