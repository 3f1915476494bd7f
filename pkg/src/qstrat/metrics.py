"""Accuracy, ROC curves and AUC (binary and one-vs-rest macro)."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabelsError, ParameterError, SchemaError


@dataclass(frozen=True)
class ROCCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def auc(self):
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1])) * 0.5)


@dataclass(frozen=True)
class ScoreSet:
    """Per-class scores, one column per entry of ``classes`` (higher = more likely)."""

    scores: np.ndarray
    classes: tuple
    labels: tuple | None = None

    def column(self, cls):
        return self.scores[:, list(self.classes).index(cls)]


def accuracy(predicted, truth):
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    if predicted.shape != truth.shape:
        raise SchemaError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise SchemaError("accuracy of an empty prediction set")
    return float(np.mean(predicted == truth))


def _binary_truth(labels, positive):
    labels = np.asarray(labels)
    if positive is None:
        y = labels.astype(bool)
    else:
        y = labels == positive
    if y.all() or not y.any():
        raise DegenerateLabelsError("ROC needs both positive and negative samples")
    return y


def roc_binary(scores, labels, positive=None):
    """ROC curve from a descending sweep over the distinct score values.

    Samples sharing a score enter together, producing a diagonal segment.
    ``labels`` are booleans/0-1 unless ``positive`` names the positive class.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = _binary_truth(labels, positive)
    if s.shape != y.shape:
        raise SchemaError("scores and labels differ in length")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    ends = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    pos, neg = tp[-1], fp[-1]
    fpr = np.r_[0.0, fp / neg]
    tpr = np.r_[0.0, tp / pos]
    thresholds = np.r_[np.inf, s[ends]]
    return ROCCurve(fpr, tpr, thresholds)


def auc_binary(scores, labels, positive=None):
    """Trapezoidal area under :func:`roc_binary`.

    Equal to P(s+ > s-) + 0.5 P(s+ = s-) over positive/negative pairs.
    """
    return roc_binary(scores, labels, positive).auc()


def ovr_auc_per_class(scores, labels, classes):
    """Binary AUC of each class's column against the rest.

    Returns ``(aucs, excluded)`` where ``aucs`` maps class -> AUC and
    ``excluded`` lists classes with no positives (or no negatives) in
    ``labels``.
    """
    s = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if s.ndim != 2 or s.shape[1] != len(classes):
        raise SchemaError(f"need one score column per class, got shape {s.shape}")
    if s.shape[0] != labels.size:
        raise SchemaError("scores and labels differ in length")
    unknown = set(labels.tolist()) - set(classes)
    if unknown:
        raise SchemaError(f"labels {sorted(unknown)} have no score column")
    aucs, excluded = {}, []
    for j, c in enumerate(classes):
        y = labels == c
        if y.all() or not y.any():
            excluded.append(c)
            continue
        aucs[c] = auc_binary(s[:, j], y)
    return aucs, excluded


def auc_ovr_macro(scores, labels, classes):
    """Unweighted mean of the one-vs-rest AUCs over classes present in ``labels``."""
    aucs, _ = ovr_auc_per_class(scores, labels, classes)
    if len(aucs) == 0 or len(set(np.asarray(labels).tolist())) < 2:
        raise DegenerateLabelsError("one-vs-rest AUC needs at least two classes present")
    return float(np.mean(list(aucs.values())))


def _envelope(curve, grid):
    """Upper envelope of a (possibly vertical-stepped) ROC curve at ``grid``."""
    fpr, tpr = curve.fpr, curve.tpr
    i = np.searchsorted(fpr, grid, side="right") - 1
    i = np.clip(i, 0, fpr.size - 1)
    out = tpr[i].astype(np.float64)
    inner = (i < fpr.size - 1) & (fpr[i] < grid)
    j = i[inner]
    span = fpr[j + 1] - fpr[j]
    frac = np.where(span > 0, (grid[inner] - fpr[j]) / np.where(span > 0, span, 1.0), 0.0)
    out[inner] = tpr[j] + frac * (tpr[j + 1] - tpr[j])
    return out


def mean_roc(curves, grid_size=101):
    """Vertical average of ROC curves on a uniform false-positive-rate grid.

    The returned curve has ``grid_size`` grid points from 0 to 1, preceded by
    the origin when the averaged curve rises at fpr = 0.
    """
    curves = list(curves)
    if not curves:
        raise ParameterError("mean_roc needs at least one curve")
    if grid_size < 2:
        raise ParameterError("grid_size must be >= 2")
    grid = np.linspace(0.0, 1.0, grid_size)
    tpr = np.mean([_envelope(c, grid) for c in curves], axis=0)
    tpr[-1] = 1.0
    tpr = np.maximum.accumulate(tpr)
    fpr = grid
    if tpr[0] > 0:
        fpr = np.r_[0.0, grid]
        tpr = np.r_[0.0, tpr]
    return ROCCurve(fpr, tpr, np.full(fpr.size, np.nan))


def roc_ovr_macro(scores, labels, classes, grid_size=101):
    """Per-sample-set multiclass ROC: vertical mean of the one-vs-rest curves."""
    s = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    curves = []
    for j, c in enumerate(classes):
        y = labels == c
        if y.all() or not y.any():
            continue
        curves.append(roc_binary(s[:, j], y))
    return mean_roc(curves, grid_size)


def roc_to_csv(curve, path=None, manifest=None):
    buf = io.StringIO(newline="")
    if manifest is not None:
        buf.write("# " + json.dumps({"manifest": manifest}, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fpr", "tpr"])
    for f, t in zip(curve.fpr, curve.tpr):
        w.writerow([repr(float(f)), repr(float(t))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
