"""The six pipeline stages, each reading and writing artifacts under one directory.

Layout (relative to the output directory)::

    manifest.json                    config hash; guards against mixing runs
    data/original.csv, data/schema.json
    data/synthetic_<i>.csv           VAE samples
    synth/vae_<i>.json, synth/loss_<i>.json
    models/<dataset>__<kind>.json    fitted model
    models/<dataset>__<kind>__cv.json  grid-search table and selection
    probs/<dataset>__<kind>.json     raw, calibrated and scanned probabilities, AUCs
    scans/<dataset>__<kind>.json     scan result
    report/report.json               AUC and overlap tables
    report/roc_<dataset>__<kind>.csv, report/venn_<kind>.csv
    run_log.json                     timestamps (the only time-dependent file)

A stage skips any artifact that already exists, so an interrupted run
resumes where it stopped.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import biasscan, models, overlap, synth
from .config import PipelineConfig
from .errors import InputError, NumericError, ProvenanceError
from .seeding import derive_seed, rng
from .tabular import (
    AttributeSchema,
    filter_rows,
    k_fold_split,
    load_csv,
    marginal_tv,
    prune_vocabulary,
    select_attributes,
    write_csv,
)

log = logging.getLogger(__name__)

ORIGINAL = "original"


def synthetic_name(i: int) -> str:
    return f"synthetic_{i}"


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    tmp.replace(path)


def _load(path: Path):
    return json.loads(Path(path).read_text())


class Run:
    """Artifact directory bound to one configuration."""

    def __init__(self, config: PipelineConfig, out: Path | None = None):
        self.config = config
        self.out = Path(out) if out is not None else config.out_path
        self.seed = config.seed

    # -- paths ---------------------------------------------------------------
    def p(self, *parts) -> Path:
        return self.out.joinpath(*parts)

    def dataset_path(self, name):
        return self.p("data", f"{name}.csv")

    def model_path(self, name, kind):
        return self.p("models", f"{name}__{kind}.json")

    def probs_path(self, name, kind):
        return self.p("probs", f"{name}__{kind}.json")

    def scan_path(self, name, kind):
        return self.p("scans", f"{name}__{kind}.json")

    @property
    def report_path(self):
        return self.p("report", "report.json")

    def dataset_names(self):
        return [ORIGINAL] + [synthetic_name(i) for i in range(self.config.synthesis.m)]

    # -- provenance ----------------------------------------------------------
    def check_manifest(self) -> None:
        manifest = self.p("manifest.json")
        h = self.config.config_hash()
        if manifest.exists():
            found = _load(manifest).get("config_hash")
            if found != h:
                raise ProvenanceError(
                    f"{self.out} holds artifacts of config {found[:12]}..., current config is "
                    f"{h[:12]}...; use a fresh output directory")
        else:
            _dump(manifest, {"config_hash": h, "master_seed": self.seed,
                             "config": self.config.hashed_dict()})

    def log_stage(self, stage: str, **info) -> None:
        path = self.p("run_log.json")
        entries = _load(path) if path.exists() else []
        entries.append({"stage": stage, "time": time.strftime("%Y-%m-%dT%H:%M:%S%z"), **info})
        _dump(path, entries)

    # -- datasets ------------------------------------------------------------
    def schema(self) -> AttributeSchema:
        return AttributeSchema.load(self.p("data", "schema.json"))

    def load_dataset(self, name):
        path = self.dataset_path(name)
        if not path.exists():
            raise InputError(f"missing dataset artifact {path}; run the earlier stage first")
        return load_csv(path, self.schema().label_name, self.schema())

    def available_datasets(self):
        if not self.dataset_path(ORIGINAL).exists():
            raise InputError(f"no ingested dataset under {self.out}; run the ingest stage first")
        return [n for n in self.dataset_names() if self.dataset_path(n).exists()]


def ingest(run: Run) -> dict:
    """Stage 1: read, project, filter and persist the original dataset."""
    cfg = run.config.data
    path = run.config.data_path
    declared = AttributeSchema.from_dict(cfg.schema) if cfg.schema else None
    ds = load_csv(path, cfg.label_column, declared, positive_label=cfg.positive_label,
                  delimiter=cfg.delimiter)
    if cfg.attributes:
        ds = select_attributes(ds, cfg.attributes)
    if cfg.keep_fraction is not None:
        n_keep = math.floor(cfg.keep_fraction * len(ds))
        keep = rng(run.seed, "keep").choice(len(ds), n_keep, replace=False)
        ds = ds.subset(np.sort(keep))
    if cfg.drop_values:
        ds = filter_rows(ds, cfg.drop_values)
    if cfg.prune_unused_values and declared is None:
        ds = prune_vocabulary(ds)
    run.p("data").mkdir(parents=True, exist_ok=True)
    ds.schema.save(run.p("data", "schema.json"))
    write_csv(ds, run.dataset_path(ORIGINAL))
    summary = {"records": len(ds), "attributes": len(ds.schema),
               "cardinalities": ds.schema.cardinalities,
               "positive_rate": float(ds.labels.mean()) if len(ds) else 0.0}
    run.log_stage("ingest", **summary)
    return summary


def _selection_path(run, kind):
    return run.p("models", f"{ORIGINAL}__{kind}__cv.json")


def _select_params(run: Run, name: str, kind: str, ds, folds_seed: int):
    mcfg = run.config.models
    cv_path = run.p("models", f"{name}__{kind}__cv.json")
    if name != ORIGINAL and not mcfg.cv_on_synthetic:
        sel = _load(_selection_path(run, kind))
        params = models.params_from_dict(kind, sel["best_params"])
        folds = k_fold_split(len(ds), mcfg.cv_folds, folds_seed)
        oof = models.out_of_fold(ds, kind, params, folds, derive_seed(run.seed, "cv", name, kind))
        fold_aucs = [models.auc(oof[v], ds.labels[v]) for _, v in folds]
        _dump(cv_path, {"best_params": asdict(params), "mean_auc": repr(float(np.mean(fold_aucs))),
                        "fold_aucs": [repr(a) for a in fold_aucs], "reused_from": ORIGINAL})
        return params, oof, float(np.mean(fold_aucs))
    res = models.cross_validate(ds, kind, mcfg.grids[kind], mcfg.cv_folds, folds_seed)
    _dump(cv_path, {
        "best_params": asdict(res.best_params),
        "mean_auc": repr(res.mean_auc),
        "table": [{"params": asdict(p), "mean_auc": repr(a), "fold_aucs": [repr(x) for x in f]}
                  for p, a, f in res.table],
    })
    return res.best_params, res.oof, res.mean_auc


def train_one(run: Run, name: str, kind: str) -> dict:
    """Fit one model kind on one dataset: selection, final fit, calibration."""
    ds = run.load_dataset(name)
    mcfg = run.config.models
    folds_seed = derive_seed(run.seed, "folds", name)
    params, oof, cv_auc = _select_params(run, name, kind, ds, folds_seed)
    model = models.fit_model(kind, ds, params, derive_seed(run.seed, "model", name, kind))
    _dump(run.model_path(name, kind), models.model_to_dict(model))
    raw = models.predict_proba(model, ds)
    folds = k_fold_split(len(ds), mcfg.cv_folds, folds_seed)
    cal = models.calibrate_platt(oof, ds.labels, folds)
    base = raw if mcfg.scan_probabilities == "in_sample" else oof
    scan_probs = models.Calibration(base, cal.a, cal.b).apply(base) if mcfg.calibrate else base
    entry = {
        "dataset": name, "kind": kind,
        "params": asdict(params),
        "cv_auc": repr(cv_auc),
        "oof_auc": repr(models.auc(oof, ds.labels)),
        "in_sample_auc": repr(models.auc(raw, ds.labels)),
        "platt": {"a": repr(cal.a), "b": repr(cal.b), "degenerate": cal.degenerate},
        "scan_source": mcfg.scan_probabilities, "calibrated": mcfg.calibrate,
        "raw": [repr(float(v)) for v in raw],
        "oof": [repr(float(v)) for v in oof],
        "scan": [repr(float(v)) for v in scan_probs],
    }
    _dump(run.probs_path(name, kind), entry)
    return {"cv_auc": cv_auc}


def train(run: Run, names=None) -> dict:
    """Stage 2: fit every configured model kind on each available dataset."""
    out = {}
    names = names or run.available_datasets()
    for name in names:
        for kind in run.config.models.kinds:
            if run.probs_path(name, kind).exists():
                continue
            if name != ORIGINAL and not _selection_path(run, kind).exists():
                train_one(run, ORIGINAL, kind)
            out[(name, kind)] = train_one(run, name, kind)
            log.info("trained %s on %s: cv auc %.4f", kind, name, out[(name, kind)]["cv_auc"])
    run.log_stage("train", fitted=[f"{n}__{k}" for n, k in out])
    return out


def load_scan_probs(run: Run, name: str, kind: str) -> np.ndarray:
    return np.array([float(v) for v in _load(run.probs_path(name, kind))["scan"]])


def scan_one(run: Run, name: str, kind: str) -> biasscan.ScanResult:
    ds = run.load_dataset(name)
    probs = load_scan_probs(run, name, kind)
    s = run.config.scan
    res = biasscan.bias_scan(ds, probs, s.direction, s.n_restarts,
                             derive_seed(run.seed, "scan", name, kind), s.q_cap)
    run.scan_path(name, kind).parent.mkdir(parents=True, exist_ok=True)
    run.scan_path(name, kind).write_text(res.to_json(ds.schema))
    return res


def scan(run: Run, names=None) -> dict:
    """Stage 3/5: bias scan on every dataset that has probabilities."""
    out = {}
    for name in names or run.available_datasets():
        for kind in run.config.models.kinds:
            if run.scan_path(name, kind).exists():
                continue
            if not run.probs_path(name, kind).exists():
                raise InputError(f"no probabilities for {name}/{kind}; run the train stage first")
            out[(name, kind)] = scan_one(run, name, kind)
    run.log_stage("scan", scanned=[f"{n}__{k}" for n, k in out])
    return out


def synthesize(run: Run) -> list:
    """Stage 4: train VAEs and write the synthetic datasets."""
    scfg = run.config.synthesis
    todo = [i for i in range(scfg.m) if not run.dataset_path(synthetic_name(i)).exists()]
    if not todo:
        return []
    original = run.load_dataset(ORIGINAL)
    written = []
    trained_once = None
    for i in todo:
        train_seed = derive_seed(run.seed, "vae", i if scfg.mode == "retrain" else 0)
        sample_seed = derive_seed(run.seed, "sample", i)
        vcfg = replace(scfg.vae, seed=train_seed)
        if scfg.mode == "retrain" or trained_once is None:
            try:
                trained_once = synth.train_vae(original, scfg.include_label, vcfg)
            except NumericError as exc:
                raise NumericError(f"synthetic sample {i}: {exc}") from exc
        params, report = trained_once
        n = scfg.n_records or len(original)
        ds = synth.sample_synthetic(params, original.schema, scfg.include_label, n, sample_seed)
        run.p("synth").mkdir(parents=True, exist_ok=True)
        params.save(run.p("synth", f"vae_{i}.json"))
        _dump(run.p("synth", f"loss_{i}.json"), {
            "train_seed": train_seed, "sample_seed": sample_seed, **report.to_dict(),
            "marginal_tv": {k: repr(v) for k, v in marginal_tv(original, ds).items()},
        })
        write_csv(ds, run.dataset_path(synthetic_name(i)))
        written.append(synthetic_name(i))
    run.log_stage("synthesize", written=written)
    return written


def _load_scan(run, name, kind, schema):
    return biasscan.ScanResult.from_dict(_load(run.scan_path(name, kind)), schema)


def evaluate(run: Run) -> dict:
    """Stage 5/6: train and scan synthetic datasets as needed, then build the report."""
    names = run.dataset_names()
    missing = [n for n in names if not run.dataset_path(n).exists()]
    if missing:
        raise InputError(f"missing dataset artifacts {missing}; run ingest and synthesize first")
    train(run, names)
    scan(run, names)
    if run.report_path.exists():
        return _load(run.report_path)

    schema = run.schema()
    kinds = run.config.models.kinds
    datasets = {n: run.load_dataset(n) for n in names}
    report = {"auc": {}, "scans": {}, "overlap": {}, "synthesis": {}, "artifacts": {}}
    run.p("report").mkdir(parents=True, exist_ok=True)
    for name in names:
        report["auc"][name] = {}
        report["scans"][name] = {}
        for kind in kinds:
            pr = _load(run.probs_path(name, kind))
            report["auc"][name][kind] = {k: pr[k] for k in ("cv_auc", "oof_auc", "in_sample_auc")}
            oof = np.array([float(v) for v in pr["oof"]])
            roc_file = run.p("report", f"roc_{name}__{kind}.csv")
            with roc_file.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["threshold", "fpr", "tpr"])
                w.writerows((repr(t), repr(f), repr(tp))
                            for t, f, tp in models.roc_points(oof, datasets[name].labels))
            res = _load_scan(run, name, kind, schema)
            report["scans"][name][kind] = {
                "score": repr(float(res.score)), "q": repr(float(res.q)),
                "boundary": res.boundary, "n_members": int(len(res.member_indices)),
                "subgroup": res.describe(schema),
            }
            report["artifacts"][f"{name}/{kind}"] = {
                "probs": str(run.probs_path(name, kind).relative_to(run.out)),
                "scan": str(run.scan_path(name, kind).relative_to(run.out)),
                "roc": str(roc_file.relative_to(run.out)),
            }
    include_label = run.config.overlap.include_label_in_record_key
    for kind in kinds:
        orig_res = _load_scan(run, ORIGINAL, kind, schema)
        venn_rows = []
        for name in names[1:]:
            res = _load_scan(run, name, kind, schema)
            rec = overlap.record_overlap(datasets[ORIGINAL], orig_res, datasets[name], res,
                                         include_label)
            att = overlap.attr_value_overlap(orig_res, res, schema)
            report["overlap"].setdefault(name, {})[kind] = {
                "records": rec.to_dict(), "attribute_values": att.to_dict(),
            }
            report["overlap"][name][kind]["attribute_values"]["original_pairs"] = sorted(
                map(list, overlap.attr_value_pairs(orig_res, schema)))
            report["overlap"][name][kind]["attribute_values"]["synthetic_pairs"] = sorted(
                map(list, overlap.attr_value_pairs(res, schema)))
            for level, o in (("records", rec), ("attribute_values", att)):
                venn_rows.append((name, level, o.size_a, o.size_b, o.intersection,
                                  repr(float(o.distance))))
        venn_file = run.p("report", f"venn_{kind}.csv")
        with venn_file.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["synthetic", "level", "original_only_plus_shared", "synthetic_only_plus_shared",
                        "shared", "jaccard_distance"])
            w.writerows(venn_rows)
    for i in range(run.config.synthesis.m):
        loss = _load(run.p("synth", f"loss_{i}.json"))
        report["synthesis"][synthetic_name(i)] = {
            "final_total_loss": loss["total"][-1] if loss["total"] else None,
            "marginal_tv": loss["marginal_tv"],
        }
    report["tables"] = _tables(report, names, kinds)
    report["provenance"] = {
        "config_hash": run.config.config_hash(),
        "master_seed": run.seed,
        "seeds": {
            "folds": {n: derive_seed(run.seed, "folds", n) for n in names},
            "scan": {f"{n}/{k}": derive_seed(run.seed, "scan", n, k) for n in names for k in kinds},
            "vae": {synthetic_name(i): derive_seed(run.seed, "vae", i)
                    for i in range(run.config.synthesis.m)},
        },
    }
    _dump(run.report_path, report)
    run.log_stage("evaluate")
    return report


def _tables(report, names, kinds):
    """Compact AUC table (rows = datasets) and overlap table (rows = synthetic samples)."""
    auc_rows = [[n] + [report["auc"][n][k]["cv_auc"] for k in kinds] for n in names]
    ov_rows = [[n] + [report["overlap"][n][k]["records"]["distance"] for k in kinds]
               + [report["overlap"][n][k]["attribute_values"]["distance"] for k in kinds]
               for n in names[1:]]
    return {
        "auc": {"columns": ["dataset"] + kinds, "rows": auc_rows},
        "overlap": {"columns": ["synthetic"] + [f"records/{k}" for k in kinds]
                    + [f"attribute_values/{k}" for k in kinds], "rows": ov_rows},
    }


def run_all(run: Run) -> dict:
    run.check_manifest()
    if not run.dataset_path(ORIGINAL).exists():
        ingest(run)
    train(run, [ORIGINAL])
    scan(run, [ORIGINAL])
    synthesize(run)
    return evaluate(run)
