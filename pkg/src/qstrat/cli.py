"""``qstrat`` command line: extract, cohort, run.

Exit codes: 0 success, 2 input or config error, 3 degenerate labels,
1 anything else.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    DegenerateLabelsError,
    InputError,
    ParameterError,
    QStratError,
    UnknownLabelError,
)
from .features import (
    MAPS,
    ROIS,
    FeatureMatrix,
    extract_subject,
    matrix_from_csv,
    matrix_to_csv,
)
from .model_selection import DEFAULT_GRIDS, KINDS, get_task, run_approach_a
from .reporting import csv_text, json_text, write_text
from .volume_io import LabelMap, read_nifti, write_nifti

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_DEGENERATE = 0, 1, 2, 3

# default code -> ROI table for label maps written by ``qstrat cohort``
DEFAULT_LABEL_NAMES = {code: roi for code, roi in enumerate(ROIS, start=1)}
MAP_FILES = {"R1": "R1.nii", "R2star": "R2star.nii", "QSM": "QSM.nii"}


# --------------------------------------------------------------------------
# manifest


def sha256_file(path):
    h = hashlib.sha256()
    try:
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    return h.hexdigest()


def _timestamp():
    # reproducible builds convention; without it the field stays empty so
    # reruns are byte-identical
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if not epoch:
        return None
    try:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    except ValueError:
        raise ConfigError("SOURCE_DATE_EPOCH must be an integer") from None


def make_manifest(command, config, seed, inputs):
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return {
        "tool": "qstrat",
        "version": __version__,
        "command": command,
        "config_hash": hashlib.sha256(canon.encode()).hexdigest(),
        "seed": seed,
        "inputs": [{"path": os.path.basename(p), "sha256": sha256_file(p)} for p in inputs],
        "timestamp": _timestamp(),
    }


def _load_json(path, what="config"):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from None


def _out_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create {path}: {exc.strerror}") from None
    return path


# --------------------------------------------------------------------------
# extract


def _parse_label_names(value):
    if value is None:
        return dict(DEFAULT_LABEL_NAMES)
    doc = _load_json(value, "label names") if isinstance(value, str) else value
    if not isinstance(doc, dict):
        raise ConfigError("label names must map codes to ROI names")
    try:
        return {int(k): str(v) for k, v in doc.items()}
    except ValueError:
        raise ConfigError("label-name codes must be integers") from None


def _subject_entries(args):
    if args.subjects:
        doc = _load_json(args.subjects, "subject list")
        base = os.path.dirname(os.path.abspath(args.subjects))
        entries = doc.get("subjects") if isinstance(doc, dict) else doc
        if not isinstance(entries, list):
            raise ConfigError("subject list must be a JSON list or {\"subjects\": [...]}")
        out = []
        for e in entries:
            if not isinstance(e, dict) or "id" not in e:
                raise ConfigError("each subject entry needs an 'id'")
            resolve = lambda p: p if os.path.isabs(p) else os.path.join(base, p)  # noqa: E731
            labels = e.get("labels", [])
            labels = [labels] if isinstance(labels, str) else labels
            out.append({
                "id": str(e["id"]),
                "label": str(e.get("label", "")),
                "maps": {m: resolve(e[m]) for m in MAPS if m in e},
                "labels": [resolve(p) for p in labels],
                "tiv": e.get("tiv", args.tiv),
                "label_names": e.get("label_names"),
            })
        return out, doc.get("label_names") if isinstance(doc, dict) else None
    maps = {m: getattr(args, m.lower()) for m in MAPS if getattr(args, m.lower())}
    return [{"id": args.subject_id, "label": args.label, "maps": maps, "labels": args.labels or [],
             "tiv": args.tiv, "label_names": None}], None


def cmd_extract(args):
    entries, listed_names = _subject_entries(args)
    default_names = _parse_label_names(args.label_names if args.label_names else listed_names)
    vectors, inputs = [], []
    for e in entries:
        if e["tiv"] is None:
            raise ParameterError(f"subject {e['id']}: --tiv (liters) is required; TIV is not computed here")
        tiv = float(e["tiv"])
        missing = [m for m in MAPS if m not in e["maps"]]
        if missing:
            raise InputError(f"subject {e['id']}: missing maps {missing}")
        if not e["labels"]:
            raise InputError(f"subject {e['id']}: no label map given")
        names = _parse_label_names(e["label_names"]) if e["label_names"] else default_names
        maps = {m: read_nifti(p, intent=m) for m, p in e["maps"].items()}
        labelmaps = [_read_labels(p, names) for p in e["labels"]]
        vectors.append(extract_subject(e["id"], e["label"], maps, labelmaps, tiv))
        inputs += [e["maps"][m] for m in MAPS] + e["labels"]
    matrix = FeatureMatrix.from_vectors(vectors)
    config = {"subjects": [{k: e[k] for k in ("id", "label", "tiv")} for e in entries]}
    manifest = make_manifest("extract", config, None, inputs)
    out = args.out or "features.csv"
    parent = os.path.dirname(os.path.abspath(out))
    _out_dir(parent)
    write_text(out, matrix_to_csv(matrix, manifest=manifest))
    print(f"wrote {len(matrix)} subject(s) x {len(matrix.feature_names)} features to {out}")


def _read_labels(path, names):
    img = read_nifti(path, as_labels=True)
    unknown = sorted(set(img.label_names) - set(names))
    if unknown:
        raise UnknownLabelError(f"{path}: codes {unknown} have no ROI name")
    # codes absent from this file are dropped so partial label maps can share one table
    present = {c: n for c, n in names.items() if c in img.label_names}
    return LabelMap(img.data, img.voxel_size, present, affine=img.affine)


# --------------------------------------------------------------------------
# cohort


def cmd_cohort(args):
    from .synthcohort import config_from_dict, default_table1_config, generate

    if args.config and args.table1_defaults:
        raise ConfigError("use either --config or --table1-defaults")
    if not args.config and not args.table1_defaults:
        raise ConfigError("need --config or --table1-defaults")
    doc = _load_json(args.config) if args.config else {}
    cfg = config_from_dict(doc, default_table1_config())
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=int(args.seed))
    cohort = generate(cfg)
    out = _out_dir(args.out or "cohort")
    effective = {"config": doc, "seed": cfg.seed, "table1_defaults": bool(args.table1_defaults)}
    manifest = make_manifest("cohort", effective, cfg.seed, [args.config] if args.config else [])
    write_text(os.path.join(out, "features.csv"), matrix_to_csv(cohort.matrix, manifest=manifest))
    if cohort.phantoms is not None:
        subjects = []
        for sid, label, tiv, (maps, labels) in zip(cohort.matrix.subject_ids, cohort.matrix.labels,
                                                   cohort.tiv, cohort.phantoms):
            d = _out_dir(os.path.join(out, sid))
            for m, fname in MAP_FILES.items():
                write_nifti(os.path.join(d, fname), maps[m], dtype=np.float64)
            write_nifti(os.path.join(d, "labels.nii"), labels, dtype=np.int16)
            entry = {"id": sid, "label": label, "tiv": tiv, "labels": [f"{sid}/labels.nii"]}
            entry.update({m: f"{sid}/{fname}" for m, fname in MAP_FILES.items()})
            subjects.append(entry)
        write_text(os.path.join(out, "subjects.json"),
                   json_text({"manifest": manifest, "label_names": DEFAULT_LABEL_NAMES,
                              "subjects": subjects}))
    print(f"wrote {len(cohort.matrix)} subjects to {out}")


# --------------------------------------------------------------------------
# run

RUN_KEYS = {"k", "inner_k", "learners", "grids", "C", "whole_cohort_zscore", "pools"}


def _run_config(args):
    doc = _load_json(args.config) if args.config else {}
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = set(doc) - RUN_KEYS
    if unknown:
        raise ConfigError(f"unknown run config keys {sorted(unknown)}")
    cfg = {
        "k": int(doc.get("k", 5)),
        "inner_k": int(doc.get("inner_k", 3)),
        "learners": list(doc.get("learners", KINDS)),
        "grids": doc.get("grids", {}),
        "C": float(doc.get("C", 1.0)),
        "whole_cohort_zscore": bool(doc.get("whole_cohort_zscore", False)),
        "pools": doc.get("pools", {}),
    }
    bad = [k for k in cfg["learners"] if k not in KINDS]
    if bad:
        raise ConfigError(f"unknown learners {bad}")
    if not isinstance(cfg["grids"], dict) or set(cfg["grids"]) - set(DEFAULT_GRIDS):
        raise ConfigError("grids must map learner kinds to hyperparameter lists")
    return cfg


def _table5_rows(reports):
    k = len(reports[0].fold_accuracy)
    header = ["approach", "learner"] + [f"fold{f + 1}_accuracy" for f in range(k)] + ["mean_accuracy"]
    header += [f"fold{f + 1}_auc" for f in range(k)] + ["mean_auc", "pooled_auc"]
    rows = []
    for r in reports:
        rows.append([r.approach, r.learner, *r.fold_accuracy, r.mean_accuracy, *r.fold_auc,
                     r.mean_auc, "" if r.pooled_auc is None else r.pooled_auc])
    return header, rows


def _write_rocs(out, report, tag, manifest):
    for f, roc in enumerate(report.fold_roc):
        write_text(os.path.join(out, f"roc_{tag}_fold{f + 1}.csv"),
                   csv_text(["fpr", "tpr"], zip(roc.fpr, roc.tpr), manifest))
    write_text(os.path.join(out, f"roc_{tag}_mean.csv"),
               csv_text(["fpr", "tpr"], zip(report.mean_roc.fpr, report.mean_roc.tpr), manifest))


def _load_pool(path):
    from .subset_search import FeaturePool

    doc = _load_json(path, "pool")
    doc = doc.get("pool", doc)
    try:
        feats = doc["features"]
        return FeaturePool(doc.get("task", ""), tuple(e["feature"] for e in feats),
                           tuple(float(e["auc"]) for e in feats),
                           tuple(float(e.get("raw_auc", e["auc"])) for e in feats))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"pool file {path} is malformed: {exc}") from None


def cmd_run(args):
    if not args.features:
        raise InputError("--features is required")
    if args.task is None or args.approach is None:
        raise InputError("--task and --approach are required")
    task = get_task(int(args.task))
    cfg = _run_config(args)
    seed = int(args.seed or 0)
    if not 0 <= seed < 2**64:
        raise ParameterError("--seed must fit in 64 bits")
    matrix = matrix_from_csv(args.features)
    out = _out_dir(args.out or "results")
    effective = {"task": task.id, "approach": args.approach, "leakfree_ranking": bool(args.leakfree_ranking),
                 **{k: v for k, v in cfg.items() if k != "pools"}}
    inputs = [args.features] + ([args.config] if args.config else [])
    pool_files = {int(t): p for t, p in cfg["pools"].items()}
    inputs += [pool_files[t] for t in sorted(pool_files)]
    manifest = make_manifest("run", effective, seed, inputs)

    if args.approach == "A":
        reports = run_approach_a(task, matrix, kinds=cfg["learners"], grids=cfg["grids"], k=cfg["k"],
                                 seed=seed, inner_k=cfg["inner_k"],
                                 whole_cohort_zscore=cfg["whole_cohort_zscore"], threads=args.threads)
        doc = {"manifest": manifest, "task": task.name, "approach": "A",
               "models": [r.to_dict() for r in reports]}
        for r in reports:
            _write_rocs(out, r, r.learner, manifest)
            if r.feature_importance is not None:
                rows = [(i + 1, e["feature"], e["weight"]) for i, e in enumerate(r.feature_importance)]
                write_text(os.path.join(out, f"importance_{r.learner}.csv"),
                           csv_text(["rank", "feature", "weight"], rows, manifest))
    else:
        from .subset_search import run_approach_b, subset_table_csv

        pools = {t: _load_pool(p) for t, p in pool_files.items()}
        res = run_approach_b(task, matrix, k=cfg["k"], seed=seed, C=cfg["C"],
                             leakfree=bool(args.leakfree_ranking), pools=pools,
                             inner_k=cfg["inner_k"], threads=args.threads)
        reports = [res.report]
        summary = res.summary()
        doc = {"manifest": manifest, "task": task.name, "approach": "B", "models": [res.report.to_dict()],
               **{k: v for k, v in summary.items() if k not in ("task", "report")}}
        _write_rocs(out, res.report, "SVM", manifest)
        if res.search is not None:
            write_text(os.path.join(out, "subsets.csv"), subset_table_csv(res.search, manifest))
            write_text(os.path.join(out, "best_subset.json"),
                       json_text({"manifest": manifest, **summary["best_subset"]}))
            rows = [(i + 1, f) for i, f in enumerate(res.search.best.features)]
            write_text(os.path.join(out, "selected_features.csv"),
                       csv_text(["rank", "feature"], rows, manifest))
        if res.pool is not None:
            write_text(os.path.join(out, f"pool_task{task.id}.json"),
                       json_text({"manifest": manifest, "pool": res.pool.to_dict()}))
        for t, pool in res.pools.items():
            write_text(os.path.join(out, f"pool_task{t}.json"),
                       json_text({"manifest": manifest, "pool": pool.to_dict()}))

    header, rows = _table5_rows(reports)
    write_text(os.path.join(out, "table5.csv"), csv_text(header, rows, manifest))
    write_text(os.path.join(out, "report.json"), json_text(doc))
    for r in reports:
        print(f"{task.name} {r.approach} {r.learner}: ACC {r.mean_accuracy:.3f} AUC {r.mean_auc:.3f}")


# --------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="qstrat", description="Quantitative-MRI feature stratification.")
    p.add_argument("--version", action="version", version=f"qstrat {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("extract", help="build 225-feature rows from maps and label maps")
    e.add_argument("--subjects", help="JSON list of subjects (id, label, R1, R2star, QSM, labels, tiv)")
    e.add_argument("--r1")
    e.add_argument("--r2star")
    e.add_argument("--qsm")
    e.add_argument("--labels", action="append", help="label map NIfTI (repeatable)")
    e.add_argument("--label-names", help="JSON file mapping label codes to ROI names")
    e.add_argument("--subject-id", default="S0001")
    e.add_argument("--label", default="")
    e.add_argument("--tiv", type=float, help="total intracranial volume in liters")
    e.add_argument("--out")
    e.set_defaults(func=cmd_extract)

    c = sub.add_parser("cohort", help="generate a synthetic cohort")
    c.add_argument("--config")
    c.add_argument("--table1-defaults", action="store_true")
    c.add_argument("--seed", type=int)
    c.add_argument("--out")
    c.set_defaults(func=cmd_cohort)

    r = sub.add_parser("run", help="evaluate Approach A or B on a feature CSV")
    r.add_argument("--task", type=int, choices=(1, 2, 3))
    r.add_argument("--approach", choices=("A", "B"))
    r.add_argument("--features")
    r.add_argument("--config")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--threads", type=int)
    r.add_argument("--out")
    r.add_argument("--leakfree-ranking", action="store_true")
    r.set_defaults(func=cmd_run)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args)
    except DegenerateLabelsError as exc:
        print(f"qstrat: degenerate labels: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except InputError as exc:
        print(f"qstrat: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except QStratError as exc:
        print(f"qstrat: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"qstrat: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
