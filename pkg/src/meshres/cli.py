"""``meshres`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error (bad or missing
input), 3 runtime error. Machine-readable results go to ``--out`` files
or stdout; logs go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as mio
from .augment import AugmentConfig, expand_dataset
from .decimate import DecimationConfig, decimate
from .errors import DataError, ParseError
from .experiment import ExperimentConfig, emit_report, ingest_dataset, run_sweep
from .features import featurize, load_features, save_features
from .mesh import barycenters
from .metrics import CLASS_NAMES, evaluate, format_table
from .model import ModelConfig, TrainConfig, load_checkpoint, predict, save_checkpoint, train
from .synth import SynthJawSpec, synth_generate
from .upsample import TransferConfig, knn_transfer

log = logging.getLogger("meshres")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


@dataclass
class CommandResult:
    exit_code: int
    output: str | None = None


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _write_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def _seed(args) -> int:
    return 0 if args.seed is None else args.seed


def _pred_labels(path) -> np.ndarray:
    return np.asarray(mio.load_labels(path)["labels"], dtype=np.int64)


# -- subcommands ----------------------------------------------------------

def cmd_decimate(args) -> str:
    lm = mio.load_labeled(args.input, args.labels)
    cfg = DecimationConfig(args.target, preserve_boundary=not args.no_preserve_boundary)
    out = decimate(lm, cfg)
    mio.save_mesh(out.mesh, args.out)
    mio.save_labels(args.out_labels, out.labels)
    log.info("decimated %d -> %d faces", lm.mesh.n_faces, out.mesh.n_faces)
    return args.out


def cmd_featurize(args) -> str:
    lf = featurize(mio.load_labeled(args.input, args.labels), normalize=not args.no_normalize)
    save_features(args.out, lf)
    return args.out


def cmd_augment(args) -> str:
    ingested = ingest_dataset(args.in_dir)
    cfg = AugmentConfig(copies=args.copies, seed=_seed(args))
    meshes, ids = expand_dataset(ingested.meshes, cfg, return_ids=True)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for mesh, (s, c) in zip(meshes, ids):
        stem = ingested.names[s] if c < 0 else f"{ingested.names[s]}_aug{c}"
        mio.save_mesh(mesh.mesh, out / f"{stem}.obj")
        mio.save_labels(out / f"{stem}.json", mesh.labels)
    log.info("wrote %d surfaces to %s", len(meshes), out)
    return str(out)


def _feature_dir(path):
    files = sorted(Path(path).glob("*.mrft"))
    if not files:
        raise DataError(f"no .mrft files under {path}")
    return [load_features(f) for f in files]


def cmd_train(args) -> str:
    doc = _read_json(args.config) if args.config else {}
    model_cfg = ModelConfig(**doc.get("model", {}))
    train_doc = dict(doc.get("train", {}))
    for key in ("epochs", "seed", "batch_size", "lr0"):
        if getattr(args, key) is not None:
            train_doc[key] = getattr(args, key)
    train_cfg = TrainConfig(**train_doc)
    data = _feature_dir(args.data)
    val = _feature_dir(args.val) if args.val else None
    params, history = train(data, model_cfg, train_cfg, val=val)
    save_checkpoint(args.out, params, model_cfg)
    if args.history:
        _write_json(args.history, history)
    return args.out


def cmd_predict(args) -> str:
    params, cfg = load_checkpoint(args.model)
    labels, probs = predict(params, load_features(args.input), cfg)
    extra = {"probabilities": np.round(probs, 9).tolist()} if args.probs else {}
    mio.save_labels(args.out, labels, **extra)
    return args.out


def cmd_upsample(args) -> str:
    low = mio.load_mesh(args.low)
    high = mio.load_mesh(args.high)
    pred = _pred_labels(args.pred)
    if len(pred) != low.n_faces:
        raise DataError(f"{args.pred}: {len(pred)} labels for {low.n_faces} faces")
    out = knn_transfer(barycenters(low), pred, barycenters(high),
                       TransferConfig(k=args.k, tie_break=args.tie_break))
    mio.save_labels(args.out, out)
    return args.out


def metrics_table(report) -> list[dict]:
    rows = [{"scope": name, "DSC": report.dsc[c], "SEN": report.sen[c], "PPV": report.ppv[c],
             "OA": None, "support": report.support[c]} for c, name in enumerate(CLASS_NAMES)]
    total = sum(report.support)
    for scope, vals in (("macro", report.macro), ("micro", report.micro)):
        rows.append({"scope": scope, "DSC": vals["dsc"], "SEN": vals["sen"],
                     "PPV": vals["ppv"], "OA": report.oa, "support": total})
    return rows


def cmd_evaluate(args) -> str | None:
    report = evaluate(_pred_labels(args.gt), _pred_labels(args.pred))
    text = format_table(metrics_table(report), ["scope", "DSC", "SEN", "PPV", "OA", "support"],
                        args.format)
    if args.out:
        Path(args.out).write_text(text)
        return args.out
    sys.stdout.write(text)
    return None


def cmd_sweep(args) -> str:
    doc = _read_json(args.config) if args.config else {}
    if args.seed is not None:
        doc["seed"] = args.seed
    config = ExperimentConfig(**doc)
    dataset = ingest_dataset(args.data_dir).meshes
    records = run_sweep(dataset, config, args.out_dir)
    sys.stdout.write(emit_report(records, "csv"))
    return args.out_dir


def cmd_synth(args) -> str:
    spec = SynthJawSpec(cells=args.cells, seed=_seed(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, jaw in enumerate(synth_generate(spec, args.count)):
        mio.save_mesh(jaw.mesh, out / f"jaw_{i:03d}.{args.format}")
        mio.save_labels(out / f"jaw_{i:03d}.json", jaw.labels)
    return str(out)


# -- parser -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    verbosity = common.add_mutually_exclusive_group()
    # SUPPRESS keeps a flag given before the subcommand from being reset after it
    verbosity.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                           help="only log errors")
    verbosity.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS,
                           help="log debug detail")
    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, default=None)

    parser = _Parser(prog="meshres", parents=[common],
                     description="Tooth segmentation resolution toolkit.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("decimate", parents=[common], help="quadric decimation with label carry")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-labels", required=True)
    p.add_argument("--no-preserve-boundary", action="store_true")
    p.set_defaults(func=cmd_decimate)

    p = sub.add_parser("featurize", parents=[common], help="write 24-d cell features")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("augment", parents=[common, seeded], help="expand a mesh directory")
    p.add_argument("--in-dir", required=True)
    p.add_argument("--copies", type=int, default=4)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", parents=[common, seeded], help="train on a .mrft directory")
    p.add_argument("--data", required=True)
    p.add_argument("--val", default=None)
    p.add_argument("--config", default=None, help='JSON {"model": {...}, "train": {...}}')
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr0", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None, help="optional JSON path for loss history")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="per-cell labels from a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--probs", action="store_true", help="also store class probabilities")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("upsample", parents=[common], help="KNN label transfer to a finer mesh")
    p.add_argument("--pred", required=True)
    p.add_argument("--low", required=True)
    p.add_argument("--high", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--tie-break", choices=["nearest", "smallest-class"], default="nearest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_upsample)

    p = sub.add_parser("evaluate", parents=[common], help="DSC/SEN/PPV/OA of two label files")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=["csv", "md", "json-lines"], default="csv")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common, seeded], help="full resolution sweep")
    p.add_argument("--config", default=None, help="ExperimentConfig JSON")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", parents=[common, seeded], help="generate synthetic jaws")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--cells", type=int, default=5000)
    p.add_argument("--format", choices=["obj", "ply", "stl"], default="obj")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def _setup_logging(args) -> None:
    quiet, verbose = getattr(args, "quiet", False), getattr(args, "verbose", False)
    level = logging.ERROR if quiet else logging.DEBUG if verbose else logging.INFO
    root = logging.getLogger("meshres")
    root.handlers[:] = []
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False


def dispatch(argv=None) -> CommandResult:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return CommandResult(EXIT_USAGE)
    except SystemExit as exc:  # --help
        return CommandResult(EXIT_OK if not exc.code else EXIT_USAGE)
    _setup_logging(args)
    try:
        return CommandResult(EXIT_OK, args.func(args))
    except (DataError, FileNotFoundError, IsADirectoryError, NotADirectoryError) as exc:
        log.error("%s", exc)
        return CommandResult(EXIT_DATA)
    except ValueError as exc:
        log.error("invalid argument: %s", exc)
        return CommandResult(EXIT_USAGE)
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        log.error("%s: %s", type(exc).__name__, exc)
        return CommandResult(EXIT_RUNTIME)


def main(argv=None) -> int:
    return dispatch(argv).exit_code


if __name__ == "__main__":
    sys.exit(main())
