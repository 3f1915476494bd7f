"""ROI statistics, subject vectors and cohort feature matrices.

Layout of a subject vector (225 entries): the nine TIV-normalised ROI
volumes, then for every ROI (in :data:`ROIS` order) the three maps R1, R2*,
QSM, each contributing the eight statistics of :data:`METRICS`.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AssemblyError, DataError, EmptyROIError, InputError, ParameterError, SchemaError
from .volume_io import extract_roi_values

ROIS = (
    "SN",
    "RN",
    "STN",
    "lateral_ventricles",
    "thalamus",
    "caudate",
    "putamen",
    "hippocampus",
    "amygdala",
)
MAPS = ("R1", "R2star", "QSM")
METRICS = ("mean", "std", "median", "max", "min", "p5", "skewness", "kurtosis")
LABELS = ("HC", "PIGD", "TD", "Indeterminate")


def _canonical_names():
    names = [f"{roi}_volume" for roi in ROIS]
    for roi in ROIS:
        for m in MAPS:
            names.extend(f"{roi}_{m}_{s}" for s in METRICS)
    return tuple(names)


FEATURE_NAMES = _canonical_names()
N_FEATURES = len(FEATURE_NAMES)
FEATURE_INDEX = {n: i for i, n in enumerate(FEATURE_NAMES)}


@dataclass(frozen=True)
class ROIStats:
    mean: float
    std: float
    median: float
    max: float
    min: float
    p5: float
    skewness: float
    kurtosis: float
    n_voxels: int

    def as_tuple(self):
        return tuple(getattr(self, m) for m in METRICS)


def roi_statistics(values):
    """First-order statistics of the voxel values inside one ROI.

    Population moments are used throughout: ``std`` divides by n, skewness is
    ``m3 / m2**1.5`` and kurtosis is the excess ``m4 / m2**2 - 3``. A constant
    input has skewness and kurtosis 0. The 5th percentile interpolates
    linearly between order statistics at zero-based rank ``0.05 * (n - 1)``.
    """
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyROIError("<values>")
    if not np.all(np.isfinite(x)):
        raise DataError("ROI values contain NaN or Inf")
    xs = np.sort(x)
    n = xs.size
    mean = float(x.mean())
    lo, hi = float(xs[0]), float(xs[-1])
    if lo == hi:
        # exact constant: avoid dividing rounding residue by itself
        return ROIStats(lo, 0.0, lo, hi, lo, lo, 0.0, 0.0, n)
    d = x - mean
    m2 = float(np.mean(d * d))
    # shape moments on deviations scaled to unit max, safe from under/overflow
    u = d / np.max(np.abs(d))
    u2 = float(np.mean(u * u))
    u3 = float(np.mean(u**3))
    u4 = float(np.mean(u**4))
    half = n // 2
    median = float(xs[half]) if n % 2 else 0.5 * (float(xs[half - 1]) + float(xs[half]))
    return ROIStats(
        mean=mean,
        std=float(np.sqrt(m2)),
        median=median,
        max=hi,
        min=lo,
        p5=float(np.percentile(xs, 5.0)),
        skewness=u3 / u2**1.5,
        kurtosis=u4 / (u2 * u2) - 3.0,
        n_voxels=n,
    )


def roi_volume(labels, label):
    """ROI volume in mm³: voxel count times voxel volume."""
    count = int(labels.mask(label).sum())
    if count == 0:
        raise EmptyROIError(labels.roi_name(label))
    vx, vy, vz = labels.voxel_size
    return count * vx * vy * vz


def normalize_volume_tiv(volume_mm3, tiv):
    """Volume per litre of intracranial volume (mm³/L)."""
    if not tiv > 0:
        raise ParameterError(f"TIV must be positive, got {tiv}")
    return volume_mm3 / tiv


@dataclass(frozen=True)
class SubjectVector:
    subject_id: str
    label: str
    values: np.ndarray
    feature_names: tuple = FEATURE_NAMES


def build_subject_vector(subject_id, label, volumes, stats):
    """Assemble the canonical 225-entry vector.

    ``volumes`` maps ROI name -> normalised volume; ``stats`` maps
    ``(roi, map)`` -> :class:`ROIStats` (or an 8-tuple in metric order).
    """
    missing = [r for r in ROIS if r not in volumes]
    missing += [f"{r}/{m}" for r in ROIS for m in MAPS if (r, m) not in stats]
    if missing:
        raise AssemblyError(f"subject {subject_id}: missing {', '.join(missing)}")
    vals = [float(volumes[r]) for r in ROIS]
    for r in ROIS:
        for m in MAPS:
            s = stats[(r, m)]
            vals.extend(s.as_tuple() if isinstance(s, ROIStats) else tuple(s))
    v = np.array(vals, dtype=np.float64)
    if v.size != N_FEATURES:
        raise AssemblyError(f"subject {subject_id}: expected {N_FEATURES} values, got {v.size}")
    return SubjectVector(str(subject_id), str(label), v)


def extract_subject(subject_id, label, maps, labelmaps, tiv):
    """Run the extraction pipeline for one subject.

    ``maps`` maps map name (R1/R2star/QSM) -> Volume; ``labelmaps`` is a list
    of LabelMaps whose names jointly cover all nine ROIs (the first map that
    names an ROI wins).
    """
    missing_maps = [m for m in MAPS if m not in maps]
    if missing_maps:
        raise AssemblyError(f"subject {subject_id}: missing maps {missing_maps}")
    owner = {}
    for lm in labelmaps:
        for name in lm.label_names.values():
            owner.setdefault(name, lm)
    missing = [r for r in ROIS if r not in owner]
    if missing:
        raise AssemblyError(f"subject {subject_id}: missing ROIs {missing}")
    volumes, stats = {}, {}
    for roi in ROIS:
        lm = owner[roi]
        volumes[roi] = normalize_volume_tiv(roi_volume(lm, roi), tiv)
        for m in MAPS:
            stats[(roi, m)] = roi_statistics(extract_roi_values(maps[m], lm, roi))
    return build_subject_vector(subject_id, label, volumes, stats)


# --------------------------------------------------------------------------
# cohort matrices


@dataclass(frozen=True)
class ZScoreParams:
    feature_names: tuple
    mean: np.ndarray
    std: np.ndarray  # 0 marks a zero-variance column


@dataclass(frozen=True)
class FeatureMatrix:
    subject_ids: tuple
    labels: tuple
    values: np.ndarray
    feature_names: tuple = FEATURE_NAMES
    normalization: str = "raw"
    zscore: ZScoreParams | None = field(default=None, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            v = v.reshape(len(self.subject_ids), -1)
        if v.shape != (len(self.subject_ids), len(self.feature_names)):
            raise SchemaError(f"values shape {v.shape} does not match ids/names")
        if len(self.labels) != len(self.subject_ids):
            raise SchemaError("labels and subject ids differ in length")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise SchemaError("duplicate feature names")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "subject_ids", tuple(str(s) for s in self.subject_ids))
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @classmethod
    def from_vectors(cls, rows):
        rows = sorted(rows, key=lambda r: r.subject_id)
        names = rows[0].feature_names if rows else FEATURE_NAMES
        if any(tuple(r.feature_names) != tuple(names) for r in rows):
            raise SchemaError("subject vectors disagree on feature names")
        values = np.array([r.values for r in rows]).reshape(len(rows), len(names))
        return cls([r.subject_id for r in rows], [r.label for r in rows], values, names)

    def __len__(self):
        return len(self.subject_ids)

    def rows(self, index):
        index = np.asarray(index)
        return FeatureMatrix(
            [self.subject_ids[i] for i in index],
            [self.labels[i] for i in index],
            self.values[index],
            self.feature_names,
            self.normalization,
            self.zscore,
        )

    def columns(self, names):
        idx = [self.feature_names.index(n) for n in names]
        return FeatureMatrix(self.subject_ids, self.labels, self.values[:, idx], names)

    def vector(self, i):
        return SubjectVector(self.subject_ids[i], self.labels[i], self.values[i].copy(), self.feature_names)


def zscore_fit_array(x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 2:
        raise ParameterError("z-score fit needs at least 2 rows")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[x.max(axis=0) == x.min(axis=0)] = 0.0
    return mean, std


def zscore_apply_array(x, mean, std):
    safe = np.where(std > 0, std, 1.0)
    z = (np.asarray(x, dtype=np.float64) - mean) / safe
    z[:, std == 0] = 0.0
    return z


def zscore_fit(matrix):
    mean, std = zscore_fit_array(matrix.values)
    return ZScoreParams(matrix.feature_names, mean, std)


def zscore_apply(matrix, params):
    if tuple(params.feature_names) != tuple(matrix.feature_names):
        raise SchemaError("z-score parameters were fitted on different features")
    z = zscore_apply_array(matrix.values, params.mean, params.std)
    return FeatureMatrix(matrix.subject_ids, matrix.labels, z, matrix.feature_names, "zscored", params)


def zscore_inverse(matrix, params):
    x = matrix.values * params.std + params.mean
    return FeatureMatrix(matrix.subject_ids, matrix.labels, x, matrix.feature_names, "raw")


# --------------------------------------------------------------------------
# CSV


def _fmt(v):
    return repr(float(v))


def matrix_to_csv(matrix, path=None, manifest=None):
    """Serialise as ``subject_id,label,<features...>``. A manifest, if given,
    goes on a leading ``#`` comment line."""
    buf = io.StringIO(newline="")
    if manifest is not None:
        buf.write("# " + json.dumps({"manifest": manifest}, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject_id", "label", *matrix.feature_names])
    for sid, lab, row in zip(matrix.subject_ids, matrix.labels, matrix.values):
        w.writerow([sid, lab, *(_fmt(v) for v in row)])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def matrix_from_csv(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{path}: empty CSV") from None
    if header[:2] != ["subject_id", "label"]:
        raise SchemaError(f"{path}: header must start with subject_id,label")
    names = tuple(header[2:])
    ids, labels, rows = [], [], []
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(header):
            raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
        ids.append(rec[0])
        labels.append(rec[1])
        try:
            rows.append([float(v) for v in rec[2:]])
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from None
    values = np.array(rows, dtype=np.float64).reshape(len(ids), len(names))
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: non-finite feature values")
    return FeatureMatrix(ids, labels, values, names)
