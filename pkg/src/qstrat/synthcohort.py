"""Synthetic cohorts parameterised by published class means and SDs.

Per subject, ROI volumes and ROI-mean map values are drawn from per-class
Gaussians. Each (ROI, map) then gets a Gaussian voxel population around the
drawn mean, with the between-subject SD used as the within-ROI spread, and
the remaining statistics come from :func:`~qstrat.features.roi_statistics`
on that population. Volumes are rounded to whole voxels, so the
feature-table and phantom modes see identical numbers.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .features import (
    FEATURE_INDEX,
    FEATURE_NAMES,
    MAPS,
    ROIS,
    FeatureMatrix,
    build_subject_vector,
    roi_statistics,
)
from .rng import stream
from .volume_io import LabelMap, Volume

CLASSES = ("HC", "PIGD", "TD")

# class -> ROI -> (volume 10^3 mm^3/L, R1 s^-1, R2* s^-1, QSM ppb), each (mean, sd)
TABLE1 = {
    "HC": {
        "SN": ((0.76, 0.09), (0.71, 0.17), (77, 23), (78, 36)),
        "RN": ((0.38, 0.05), (0.68, 0.17), (73, 19), (68, 35)),
        "STN": ((0.15, 0.03), (0.71, 0.14), (68, 19), (68, 29)),
        "lateral_ventricles": ((18.8, 9.81), (0.30, 0.07), (10, 16), (7, 26)),
        "thalamus": ((9.81, 0.79), (0.64, 0.07), (40, 13), (0, 28)),
        "caudate": ((4.88, 0.36), (0.59, 0.05), (46, 18), (22, 31)),
        "putamen": ((6.70, 0.49), (0.65, 0.04), (56, 21), (14, 41)),
        "hippocampus": ((5.38, 0.43), (0.57, 0.05), (34, 16), (-1, 30)),
        "amygdala": ((2.24, 0.18), (0.57, 0.04), (33, 14), (-6, 31)),
    },
    "PIGD": {
        "SN": ((0.72, 0.08), (0.78, 0.19), (79, 24), (83, 40)),
        "RN": ((0.33, 0.03), (0.74, 0.16), (77, 20), (74, 36)),
        "STN": ((0.14, 0.02), (0.78, 0.17), (68, 19), (60, 28)),
        "lateral_ventricles": ((23.5, 11.3), (0.31, 0.07), (9.2, 15), (6, 24)),
        "thalamus": ((9.39, 0.63), (0.64, 0.09), (39, 12), (1, 27)),
        "caudate": ((4.70, 0.42), (0.59, 0.05), (45, 17), (19, 31)),
        "putamen": ((6.08, 0.62), (0.65, 0.04), (55, 20), (12, 38)),
        "hippocampus": ((5.16, 0.37), (0.58, 0.05), (35, 16), (1, 27)),
        "amygdala": ((2.20, 0.25), (0.58, 0.04), (33, 14), (-5, 30)),
    },
    "TD": {
        "SN": ((0.73, 0.08), (0.75, 0.17), (79, 24), (87, 42)),
        "RN": ((0.34, 0.02), (0.72, 0.17), (75, 19), (74, 36)),
        "STN": ((0.14, 0.03), (0.71, 0.13), (67, 18), (66, 28)),
        "lateral_ventricles": ((20.4, 10.4), (0.31, 0.07), (11, 17), (6, 26)),
        "thalamus": ((9.51, 0.83), (0.65, 0.07), (40, 13), (1, 29)),
        "caudate": ((4.83, 0.66), (0.60, 0.05), (47, 18), (22, 32)),
        "putamen": ((6.20, 0.54), (0.65, 0.04), (55, 19), (11, 40)),
        "hippocampus": ((5.27, 0.62), (0.58, 0.06), (36, 16), (-1, 29)),
        "amygdala": ((2.12, 0.30), (0.58, 0.04), (33, 13), (-6, 30)),
    },
}
PAPER_COUNTS = {"HC": 21, "PIGD": 14, "TD": 9}


def _table1_params():
    volume, maps = {}, {}
    for cls, rois in TABLE1.items():
        for roi, (vol, *values) in rois.items():
            volume[(cls, roi)] = (vol[0] * 1e3, vol[1] * 1e3)
            for m, (mu, sd) in zip(MAPS, values):
                maps[(cls, roi, m)] = (float(mu), float(sd))
    return volume, maps


@dataclass(frozen=True)
class Effect:
    feature: str
    cls: str
    shift_sd: float


@dataclass(frozen=True)
class CohortConfig:
    n_per_class: dict
    volume_params: dict  # (class, roi) -> (mean mm^3/L, sd)
    map_params: dict  # (class, roi, map) -> (mean, sd)
    injected_effects: tuple = ()
    seed: int = 0
    mode: str = "feature-table"
    voxels_per_roi: int | None = 200  # None: population size follows the ROI volume
    tiv_liters: float = 1.5
    voxel_size: tuple = (0.75, 0.75, 0.75)
    phantom_inplane: int = 64

    def validate(self):
        if self.mode not in ("feature-table", "phantom-volumes"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        for cls, n in self.n_per_class.items():
            if cls not in CLASSES:
                raise ConfigError(f"unknown class {cls!r}")
            if int(n) < 0:
                raise ConfigError(f"negative count for {cls}")
        for key, (_, sd) in {**self.volume_params, **self.map_params}.items():
            if sd < 0:
                raise ConfigError(f"negative SD for {key}")
        for e in self.injected_effects:
            if e.feature not in FEATURE_INDEX:
                raise ConfigError(f"injected feature {e.feature!r} is not a known feature")
            if e.cls not in CLASSES:
                raise ConfigError(f"injected class {e.cls!r} is not one of {CLASSES}")
        if self.voxels_per_roi is not None and self.voxels_per_roi < 1:
            raise ConfigError("voxels_per_roi must be >= 1")
        if not self.tiv_liters > 0:
            raise ConfigError("tiv_liters must be positive")
        return self

    def with_shared_parameters(self, source="HC"):
        """Every class generated from ``source``'s parameters (null cohort)."""
        vol = {(c, r): self.volume_params[(source, r)] for c in CLASSES for r in ROIS}
        mp = {(c, r, m): self.map_params[(source, r, m)] for c in CLASSES for r in ROIS for m in MAPS}
        return replace(self, volume_params=vol, map_params=mp)


def default_table1_config(seed=0):
    volume, maps = _table1_params()
    return CohortConfig(dict(PAPER_COUNTS), volume, maps, seed=seed)


def config_from_dict(doc, base=None):
    """Build a config from the JSON layout used by ``qstrat cohort --config``."""
    if not isinstance(doc, dict):
        raise ConfigError("cohort config must be a JSON object")
    cfg = base or default_table1_config()
    known = {"n_per_class", "seed", "mode", "voxels_per_roi", "tiv_liters", "voxel_size",
             "injected_effects", "shared_parameters", "phantom_inplane"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown cohort config keys {sorted(unknown)}")
    kw = {}
    if "n_per_class" in doc:
        kw["n_per_class"] = {**cfg.n_per_class, **{k: int(v) for k, v in doc["n_per_class"].items()}}
    for key in ("seed", "mode", "voxels_per_roi", "tiv_liters", "phantom_inplane"):
        if key in doc:
            kw[key] = doc[key]
    if "voxel_size" in doc:
        kw["voxel_size"] = tuple(float(v) for v in doc["voxel_size"])
    if "injected_effects" in doc:
        try:
            kw["injected_effects"] = tuple(
                Effect(e["feature"], e["class"], float(e["shift_sd"])) for e in doc["injected_effects"]
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad injected effect: {exc}") from None
    cfg = replace(cfg, **kw)
    if doc.get("shared_parameters"):
        cfg = cfg.with_shared_parameters(doc["shared_parameters"])
    return cfg.validate()


@dataclass
class Cohort:
    matrix: FeatureMatrix
    phantoms: list | None = field(default=None, repr=False)  # per subject: (maps dict, LabelMap)
    tiv: list = field(default_factory=list)


def _split_feature(name):
    for roi in ROIS:
        if name == f"{roi}_volume":
            return roi, None, "volume"
        for m in MAPS:
            prefix = f"{roi}_{m}_"
            if name.startswith(prefix):
                return roi, m, name[len(prefix):]
    raise ConfigError(f"cannot parse feature {name!r}")


def _draw_subject(cfg, cls, index, gen_shift):
    """One subject's volumes (mm^3/L, whole voxels) and voxel populations."""
    rng = stream(cfg.seed, "subject", index)
    voxvol = float(np.prod(cfg.voxel_size))
    counts, volumes = {}, {}
    for roi in ROIS:
        mu, sd = cfg.volume_params[(cls, roi)]
        mu += gen_shift.get((cls, roi, None), 0.0) * sd
        v = rng.normal(mu, sd)
        c = max(1, int(round(v * cfg.tiv_liters / voxvol)))
        counts[roi] = c
        volumes[roi] = c * voxvol / cfg.tiv_liters
    centers = {}
    for roi in ROIS:
        for m in MAPS:
            mu, sd = cfg.map_params[(cls, roi, m)]
            mu += gen_shift.get((cls, roi, m), 0.0) * sd
            centers[(roi, m)] = (rng.normal(mu, sd), sd)
    pops = {}
    for roi in ROIS:
        size = counts[roi] if cfg.voxels_per_roi is None or cfg.mode == "phantom-volumes" else cfg.voxels_per_roi
        for m in MAPS:
            c, sd = centers[(roi, m)]
            pops[(roi, m)] = rng.normal(c, sd, size=size)
    return counts, volumes, pops


def _phantom(cfg, counts, pops):
    """Label map with each ROI as a run of whole x-y slabs (last one partial)."""
    nx = ny = int(cfg.phantom_inplane)
    plane = nx * ny
    slabs = {roi: -(-counts[roi] // plane) for roi in ROIS}
    nz = sum(slabs.values())
    flat_labels = np.zeros(plane * nz, dtype=np.int64)
    flat_maps = {m: np.zeros(plane * nz) for m in MAPS}
    z0 = 0
    for code, roi in enumerate(ROIS, start=1):
        start = z0 * plane
        flat_labels[start:start + counts[roi]] = code
        for m in MAPS:
            flat_maps[m][start:start + counts[roi]] = pops[(roi, m)]
        z0 += slabs[roi]
    shape = (nx, ny, nz)
    labels = LabelMap(flat_labels.reshape(shape, order="F"), cfg.voxel_size,
                      {code: roi for code, roi in enumerate(ROIS, start=1)})
    maps = {m: Volume(flat_maps[m].reshape(shape, order="F"), cfg.voxel_size, intent=m) for m in MAPS}
    return maps, labels


def generate(cfg):
    cfg.validate()
    gen_shift, post = {}, []
    for e in cfg.injected_effects:
        roi, m, stat = _split_feature(e.feature)
        if stat in ("volume", "mean"):
            key = (e.cls, roi, m)
            gen_shift[key] = gen_shift.get(key, 0.0) + e.shift_sd
        else:
            post.append(e)

    vectors, phantoms, labels = [], [], []
    index = 0
    for cls in CLASSES:
        for _ in range(int(cfg.n_per_class.get(cls, 0))):
            counts, volumes, pops = _draw_subject(cfg, cls, index, gen_shift)
            stats = {key: roi_statistics(pop) for key, pop in pops.items()}
            sid = f"S{index + 1:04d}"
            vectors.append(build_subject_vector(sid, cls, volumes, stats))
            labels.append(cls)
            if cfg.mode == "phantom-volumes":
                phantoms.append(_phantom(cfg, counts, pops))
            index += 1

    values = np.array([v.values for v in vectors]).reshape(len(vectors), len(FEATURE_NAMES))
    if post and len(vectors) > 1:
        base = values.copy()
        lab = np.array(labels)
        for e in post:
            j = FEATURE_INDEX[e.feature]
            values[lab == e.cls, j] += e.shift_sd * base[:, j].std()
    matrix = FeatureMatrix([v.subject_id for v in vectors], labels, values)
    return Cohort(matrix, phantoms if cfg.mode == "phantom-volumes" else None,
                  [cfg.tiv_liters] * len(vectors))
