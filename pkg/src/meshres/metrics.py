"""Segmentation metrics: confusion matrix, per-class DSC/SEN/PPV, OA.

Undefined ratios are reported as NaN and left out of the macro averages:
a class absent from both truth and prediction is excluded entirely, and
SEN (PPV) is excluded alone when the class never occurs in truth
(prediction).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatchError, RangeError
from .mesh import CLASS_NAMES, NUM_CLASSES


def confusion(gt, pred, num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Counts (num_classes, num_classes); entry (g, p) = truth g predicted p."""
    gt = np.asarray(gt, dtype=np.int64).reshape(-1)
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    if len(gt) != len(pred):
        raise LengthMismatchError(f"{len(gt)} truth vs {len(pred)} predicted labels")
    for arr in (gt, pred):
        if len(arr) and (arr.min() < 0 or arr.max() >= num_classes):
            raise RangeError(f"labels must lie in [0, {num_classes - 1}]")
    return np.bincount(gt * num_classes + pred,
                       minlength=num_classes * num_classes).reshape(num_classes, num_classes)


def _ratio(num, den):
    return num / den if den > 0 else math.nan


def _nanmean(values):
    vals = [v for v in values if not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan


@dataclass
class MetricsReport:
    dsc: list[float]
    sen: list[float]
    ppv: list[float]
    oa: float
    macro: dict[str, float]
    micro: dict[str, float]
    included: list[bool]
    support: list[int]
    inference_ms: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"dsc": self.dsc, "sen": self.sen, "ppv": self.ppv, "oa": self.oa,
                "macro": self.macro, "micro": self.micro, "included": self.included,
                "support": self.support, "inference_ms": self.inference_ms}


def compute_metrics(cm: np.ndarray) -> MetricsReport:
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    tp = np.diag(cm)
    fn = cm.sum(axis=1) - tp
    fp = cm.sum(axis=0) - tp
    dsc, sen, ppv, included = [], [], [], []
    for c in range(len(cm)):
        t, n, p = int(tp[c]), int(fn[c]), int(fp[c])
        dsc.append(_ratio(2 * t, 2 * t + p + n))
        sen.append(_ratio(t, t + n))
        ppv.append(_ratio(t, t + p))
        included.append(t + p + n > 0)
    oa = _ratio(int(tp.sum()), total)
    macro = {"dsc": _nanmean(dsc), "sen": _nanmean(sen), "ppv": _nanmean(ppv)}
    # single-label multiclass: micro SEN = micro PPV = micro DSC = OA
    micro = {"dsc": oa, "sen": oa, "ppv": oa}
    return MetricsReport(dsc, sen, ppv, oa, macro, micro, included,
                         [int(x) for x in cm.sum(axis=1)])


def evaluate(gt, pred) -> MetricsReport:
    return compute_metrics(confusion(gt, pred))


AGGREGATE_COLUMNS = ["input_size", "OA", "DSC", "SEN", "PPV", "inference_ms"]
PER_CLASS_COLUMNS = ["resolution", *CLASS_NAMES]


def resolution_label(n_cells: int) -> str:
    return f"{n_cells / 1000:g}K" if n_cells % 100 == 0 and n_cells >= 1000 else str(n_cells)


def row_label(train_res: int, eval_res: int | None) -> str:
    if eval_res is None or eval_res == train_res:
        return resolution_label(train_res)
    return f"{resolution_label(train_res)} (to {resolution_label(eval_res)})"


def report_rows(reports: dict) -> tuple[list[dict], list[dict]]:
    """Aggregate rows and per-class DSC rows from ``{(train, eval): report}``.

    Rows run in ascending training resolution, native before upsampled.
    """
    def order(key):
        tr, ev = key
        return (tr, ev != tr, ev)

    agg, per_class = [], []
    for key in sorted(reports, key=order):
        rep = reports[key]
        label = row_label(*key)
        agg.append({"input_size": label, "OA": rep.oa, "DSC": rep.macro["dsc"],
                    "SEN": rep.macro["sen"], "PPV": rep.macro["ppv"],
                    "inference_ms": rep.inference_ms})
        per_class.append({"resolution": label, **dict(zip(CLASS_NAMES, rep.dsc))})
    return agg, per_class


def _fmt(v, digits=None):
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return repr(v) if digits is None else f"{v:.{digits}f}"
    return str(v)


def format_table(rows: list[dict], columns: list[str], fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
        return buf.getvalue()
    if fmt == "md":
        lines = ["| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
        lines += ["| " + " | ".join(_fmt(r.get(c), 4) for c in columns) + " |"
                  for r in rows]
        return "\n".join(lines) + "\n"
    if fmt == "json-lines":
        def clean(v):
            return None if isinstance(v, float) and math.isnan(v) else v
        return "".join(json.dumps({c: clean(r.get(c)) for c in columns}) + "\n" for r in rows)
    raise ValueError(f"unknown table format {fmt!r}")
