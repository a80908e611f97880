"""Resolution sweep: split, decimate, augment, train, evaluate, upsample, report.

Run directory layout::

    out_dir/<train_res>/model.mrck
    out_dir/<train_res>/pred_native.json
    out_dir/<train_res>/pred_to_<eval_res>.json
    out_dir/<train_res>/report.csv
    out_dir/report.{csv,md,jsonl}

A training unit whose ``model.mrck`` already exists is not retrained.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io as mio
from .augment import AugmentConfig, augment_surface, stream
from .decimate import DecimationConfig, decimate
from .errors import DatasetTooSmallError, MeshresError, ThirdMolarError
from .features import featurize
from .mesh import LabeledMesh, barycenters, crop_base
from .metrics import (AGGREGATE_COLUMNS, PER_CLASS_COLUMNS, MetricsReport, compute_metrics,
                      confusion, format_table, report_rows)
from .model import (ModelConfig, TrainConfig, load_checkpoint, measure_inference, predict,
                    save_checkpoint, train)
from .upsample import TransferConfig, knn_transfer

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    resolutions: list[int] = field(default_factory=lambda: [2000, 4000, 6000, 8000, 10000, 16000])
    eval_resolutions: list[int] = field(default_factory=lambda: [10000, 16000])
    test_fraction: float = 0.2
    val_fraction_of_train: float = 0.2
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    knn_k: int = 3
    normalize: bool = True
    crop_keep_fraction: float | None = None
    preserve_boundary: bool = True

    def __post_init__(self):
        if isinstance(self.augment, dict):
            self.augment = AugmentConfig(**self.augment)
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        self.resolutions = [int(r) for r in self.resolutions]
        self.eval_resolutions = [int(r) for r in self.eval_resolutions]
        for frac in (self.test_fraction, self.val_fraction_of_train):
            if not 0.0 < frac < 1.0:
                raise ValueError("split fractions must lie in (0, 1)")
        if self.resolutions != sorted(self.resolutions):
            raise ValueError("resolutions must be sorted ascending")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls(**json.loads(Path(path).read_text()))

    def upsample_targets(self, train_res: int) -> list[int]:
        if train_res in self.eval_resolutions:
            return []
        return [e for e in sorted(self.eval_resolutions) if e > train_res]


@dataclass
class RunRecord:
    train_res: int
    eval_res: int
    report: MetricsReport | None
    checkpoint: str | None = None
    timings: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def upsampled(self) -> bool:
        return self.eval_res != self.train_res


# -- ingestion ---------------------------------------------------------

@dataclass
class IngestResult:
    meshes: list[LabeledMesh]
    names: list[str]
    skipped: list[tuple[str, str]]
    errors: list[tuple[str, str]]


def ingest_dataset(root_dir) -> IngestResult:
    """Load every ``<stem>.{obj,ply,stl}`` with a ``<stem>.json`` label sidecar."""
    root = Path(root_dir)
    meshes, names, skipped, errors = [], [], [], []
    for path in sorted(p for p in root.iterdir() if p.suffix.lower() in mio.MESH_SUFFIXES):
        sidecar = path.with_suffix(".json")
        if not sidecar.exists():
            errors.append((path.name, "missing label sidecar"))
            continue
        try:
            meshes.append(mio.load_labeled(path, sidecar))
            names.append(path.stem)
        except ThirdMolarError:
            log.info("skipping %s: third molar", path.name)
            skipped.append((path.name, "third molar"))
        except MeshresError as exc:
            log.warning("failed to ingest %s: %s", path.name, exc)
            errors.append((path.name, str(exc)))
    log.info("ingested %d scans, skipped %d, failed %d", len(meshes), len(skipped), len(errors))
    if not meshes:
        raise DatasetTooSmallError(f"no usable scans under {root}")
    return IngestResult(meshes, names, skipped, errors)


# -- splitting -------------------------------------------------------

@dataclass
class Split:
    train: list[int]
    val: list[int]
    test: list[int]


def split_indices(n: int, config: ExperimentConfig) -> Split:
    if n < 5:
        raise DatasetTooSmallError(f"need at least 5 surfaces, got {n}")
    order = np.random.default_rng([config.seed, 1]).permutation(n).tolist()
    n_test = max(1, int(math.floor(config.test_fraction * n)))
    pool = n - n_test
    n_val = max(1, int(math.floor(config.val_fraction_of_train * pool)))
    return Split(train=order[n_test + n_val:], val=order[n_test:n_test + n_val],
                 test=order[:n_test])


def split(dataset: list[LabeledMesh], config: ExperimentConfig) -> dict:
    """Partition surfaces, then augment train and val only.

    Every returned item is ``(mesh, (source index, copy index))`` with copy
    index -1 for the original, so provenance can be audited for leakage.
    """
    idx = split_indices(len(dataset), config)
    return {"train": _augmented(dataset, idx.train, config),
            "val": _augmented(dataset, idx.val, config),
            "test": [(dataset[i], (i, -1)) for i in idx.test]}


def _augmented(dataset, indices, config):
    out = [(dataset[i], (i, -1)) for i in indices]
    for i in indices:
        for c in range(config.augment.copies):
            mesh, _ = augment_surface(dataset[i], config.augment,
                                      stream(config.augment.seed, i, c))
            out.append((mesh, (i, c)))
    return out


# -- sweep ---------------------------------------------------------

class _DecimationCache:
    def __init__(self, dataset, config):
        self.dataset = dataset
        self.config = config
        self.cache: dict[tuple[int, int], LabeledMesh] = {}

    def get(self, i: int, res: int) -> LabeledMesh:
        key = (i, res)
        if key not in self.cache:
            src = self.dataset[i]
            if res > src.mesh.n_faces:
                raise DatasetTooSmallError(
                    f"surface {i} has {src.mesh.n_faces} faces, below resolution {res}")
            self.cache[key] = decimate(
                src, DecimationConfig(res, preserve_boundary=self.config.preserve_boundary))
        return self.cache[key]


def _pooled(gts, preds) -> MetricsReport:
    return compute_metrics(sum(confusion(g, p) for g, p in zip(gts, preds)))


def _write_preds(path, preds, sources):
    doc = {"mode": "face", "surfaces": [int(s) for s in sources],
           "labels": [[int(x) for x in p] for p in preds]}
    Path(path).write_text(json.dumps(doc))


def run_unit(train_res: int, dataset, config: ExperimentConfig, splits: Split,
             cache: _DecimationCache, out_dir: Path | None) -> list[RunRecord]:
    unit = out_dir / str(train_res) if out_dir is not None else None
    ckpt = unit / "model.mrck" if unit is not None else None
    timings: dict = {}
    aug = config.augment

    def feats_for(indices, augment):
        out = []
        for i in indices:
            base = cache.get(i, train_res)
            out.append(featurize(base, config.normalize))
            if augment:
                for c in range(aug.copies):
                    mesh, _ = augment_surface(base, aug, stream(aug.seed, i, c))
                    out.append(featurize(mesh, config.normalize))
        return out

    if ckpt is not None and ckpt.exists():
        log.info("resuming %d from %s", train_res, ckpt)
        params, model_cfg = load_checkpoint(ckpt)
    else:
        t0 = time.perf_counter()
        train_set = feats_for(splits.train, True)
        val_set = feats_for(splits.val, True)
        model_cfg = config.model
        params, history = train(train_set, model_cfg, config.train, val=val_set)
        timings["train_s"] = time.perf_counter() - t0
        if unit is not None:
            unit.mkdir(parents=True, exist_ok=True)
            save_checkpoint(ckpt, params, model_cfg)

    test_feats = [featurize(cache.get(i, train_res), config.normalize) for i in splits.test]
    preds = [predict(params, f, model_cfg)[0] for f in test_feats]
    gts = [f.labels for f in test_feats]
    timing = measure_inference(params, test_feats[0], model_cfg, repeats=3)
    native = _pooled(gts, preds)
    native.inference_ms = timing["mean"]
    records = [RunRecord(train_res, train_res, native, str(ckpt) if ckpt else None,
                         {**timings, "inference": timing})]
    if unit is not None:
        unit.mkdir(parents=True, exist_ok=True)
        _write_preds(unit / "pred_native.json", preds, splits.test)

    tcfg = TransferConfig(k=config.knn_k)
    for eval_res in config.upsample_targets(train_res):
        up_preds, up_gts = [], []
        t0 = time.perf_counter()
        for i, p in zip(splits.test, preds):
            low = cache.get(i, train_res)
            high = cache.get(i, eval_res)
            up_preds.append(knn_transfer(barycenters(low.mesh), p, barycenters(high.mesh), tcfg))
            up_gts.append(high.labels)
        transfer_ms = (time.perf_counter() - t0) * 1e3 / len(splits.test)
        rep = _pooled(up_gts, up_preds)
        rep.inference_ms = timing["mean"] + transfer_ms
        records.append(RunRecord(train_res, eval_res, rep, str(ckpt) if ckpt else None,
                                 {"inference": timing, "transfer_ms": transfer_ms}))
        if unit is not None:
            _write_preds(unit / f"pred_to_{eval_res}.json", up_preds, splits.test)
    if unit is not None:
        (unit / "report.csv").write_text(emit_report(records, "csv"))
    return records


def run_sweep(dataset: list[LabeledMesh], config: ExperimentConfig,
              out_dir=None) -> list[RunRecord]:
    """Train one model per resolution; evaluate natively and upsampled."""
    if config.crop_keep_fraction is not None:
        dataset = [crop_base(m, config.crop_keep_fraction) for m in dataset]
    splits = split_indices(len(dataset), config)
    cache = _DecimationCache(dataset, config)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    records: list[RunRecord] = []
    for train_res in config.resolutions:
        try:
            records += run_unit(train_res, dataset, config, splits, cache, out)
        except MeshresError as exc:
            log.error("training unit %d failed: %s", train_res, exc)
            records.append(RunRecord(train_res, train_res, None, error=str(exc)))
    if out is not None:
        for fmt, suffix in (("csv", "csv"), ("md", "md"), ("json-lines", "jsonl")):
            (out / f"report.{suffix}").write_text(emit_report(records, fmt))
    return records


def emit_report(records: list[RunRecord], fmt: str = "csv", include_timing: bool = True) -> str:
    """Aggregate table followed by the per-class DSC table."""
    reports = {(r.train_res, r.eval_res): r.report for r in records if r.report is not None}
    agg, per_class = report_rows(reports)
    agg_cols = AGGREGATE_COLUMNS if include_timing else AGGREGATE_COLUMNS[:-1]
    if fmt == "json-lines":
        agg_text = format_table(agg, agg_cols, fmt)
        pc_text = format_table(per_class, PER_CLASS_COLUMNS, fmt)
        return _tag_lines(agg_text, "aggregate") + _tag_lines(pc_text, "per_class_dsc")
    return format_table(agg, agg_cols, fmt) + "\n" + format_table(per_class, PER_CLASS_COLUMNS, fmt)


def _tag_lines(text: str, table: str) -> str:
    return "".join(json.dumps({"table": table, **json.loads(line)}) + "\n"
                   for line in text.splitlines())
