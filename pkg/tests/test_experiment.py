import csv
import io
import json

import numpy as np
import pytest

from meshres import io as mio
from meshres.augment import AugmentConfig
from meshres.decimate import decimate
from meshres.errors import DatasetTooSmallError
from meshres.experiment import (ExperimentConfig, RunRecord, emit_report, ingest_dataset,
                                run_sweep, split, split_indices)
from meshres.mesh import LabeledMesh, TriangleMesh, icosphere
from meshres.metrics import evaluate
from meshres.synth import SynthJawSpec, synth_generate


def test_split_sizes_and_determinism():
    cfg = ExperimentConfig()
    s = split_indices(100, cfg)
    assert (len(s.train), len(s.val), len(s.test)) == (64, 16, 20)
    assert sorted(s.train + s.val + s.test) == list(range(100))
    assert split_indices(100, cfg) == s
    assert split_indices(100, ExperimentConfig(seed=1)) != s
    small = split_indices(5, cfg)
    assert (len(small.train), len(small.val), len(small.test)) == (3, 1, 1)
    with pytest.raises(DatasetTooSmallError):
        split_indices(4, cfg)


def test_split_has_no_leakage():
    m = icosphere(1)
    data = [LabeledMesh(TriangleMesh(m.vertices + i, m.faces), np.zeros(m.n_faces, int))
            for i in range(10)]
    parts = split(data, ExperimentConfig(augment=AugmentConfig(copies=2)))
    sources = {k: {sid for _, (sid, _) in v} for k, v in parts.items()}
    assert not sources["train"] & sources["val"]
    assert not sources["train"] & sources["test"]
    assert not sources["val"] & sources["test"]
    assert all(c == -1 for _, (_, c) in parts["test"])
    assert len(parts["train"]) == 3 * len(sources["train"])


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(resolutions=[1000, 2000], eval_resolutions=[2000],
                           model={"channels": [16, 32]}, train={"epochs": 3})
    (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
    back = ExperimentConfig.from_json(tmp_path / "c.json")
    assert back == cfg
    with pytest.raises(ValueError):
        ExperimentConfig(test_fraction=1.0)


def test_paper_grid_has_fourteen_rows():
    cfg = ExperimentConfig()
    rows = sum(1 + len(cfg.upsample_targets(r)) for r in cfg.resolutions)
    assert rows == 14
    assert cfg.upsample_targets(8000) == [10000, 16000]
    assert cfg.upsample_targets(10000) == []


def test_ingest(tmp_path):
    m = icosphere(1)
    mio.save_mesh(m, tmp_path / "a.obj")
    mio.save_labels(tmp_path / "a.json", np.zeros(m.n_faces, int))
    mio.save_mesh(m, tmp_path / "b.ply")
    mio.save_labels(tmp_path / "b.json", [48] + [0] * (m.n_vertices - 1), mode="vertex_fdi")
    mio.save_mesh(m, tmp_path / "c.stl")
    mio.save_labels(tmp_path / "c.json", [0, 1])
    res = ingest_dataset(tmp_path)
    assert res.names == ["a"]
    assert res.skipped == [("b.ply", "third molar")]
    assert [name for name, _ in res.errors] == ["c.stl"]
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(DatasetTooSmallError):
        ingest_dataset(empty)


def test_emit_report_empty_and_tagged():
    text = emit_report([], "csv")
    assert text.splitlines() == ["input_size,OA,DSC,SEN,PPV,inference_ms", "",
                                 "resolution,BG,T1,T2,T3,T4,T5,T6,T7"]
    rep = evaluate([0, 1, 1], [0, 1, 0])
    rep.inference_ms = 3.0
    recs = [RunRecord(2000, 2000, rep), RunRecord(2000, 4000, rep)]
    lines = [json.loads(x) for x in emit_report(recs, "json-lines").splitlines()]
    assert [x["table"] for x in lines] == ["aggregate"] * 2 + ["per_class_dsc"] * 2
    assert lines[1]["input_size"] == "2K (to 4K)"
    assert lines[2]["T2"] is None


# -- a small real sweep ------------------------------------------------------

def small_config(**kw):
    base = dict(resolutions=[1000], eval_resolutions=[1500], seed=3,
                augment=AugmentConfig(copies=1, seed=5),
                model={"channels": [16, 32], "embed_dim": 16, "k_neighbors": 8,
                       "pre_blocks": 1, "pos_blocks": 1},
                train={"epochs": 2, "batch_size": 4, "seed": 2})
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def jaws():
    return synth_generate(SynthJawSpec(cells=1600, seed=11), 5)


@pytest.fixture(scope="module")
def sweep(jaws, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    return run_sweep(jaws, small_config(), out), out


def test_sweep_record_grid(sweep):
    records, out = sweep
    assert [(r.train_res, r.eval_res) for r in records] == [(1000, 1000), (1000, 1500)]
    assert all(r.error is None for r in records)
    for name in ("model.mrck", "pred_native.json", "pred_to_1500.json", "report.csv"):
        assert (out / "1000" / name).exists()
    for name in ("report.csv", "report.md", "report.jsonl"):
        assert (out / name).exists()


def test_sweep_audit_trail(sweep, jaws):
    records, out = sweep
    for rec, name, res in ((records[0], "pred_native.json", 1000),
                           (records[1], "pred_to_1500.json", 1500)):
        doc = json.loads((out / "1000" / name).read_text())
        gts = [decimate(jaws[s], res).labels for s in doc["surfaces"]]
        rep = evaluate(np.concatenate(gts), np.concatenate(doc["labels"]))
        assert json.dumps(rep.dsc) == json.dumps(rec.report.dsc)
        assert rep.oa == rec.report.oa


def test_report_formats_agree(sweep):
    _, out = sweep
    rows = list(csv.reader(io.StringIO((out / "report.csv").read_text().split("\n\n")[0])))
    js = [json.loads(x) for x in (out / "report.jsonl").read_text().splitlines()]
    agg = [x for x in js if x["table"] == "aggregate"]
    header = rows[0]
    for row, obj in zip(rows[1:], agg):
        for col, val in zip(header[1:], row[1:]):
            assert float(val) == obj[col]


def test_sweep_resumes_and_is_deterministic(sweep, jaws, tmp_path):
    records, out = sweep
    again = run_sweep(jaws, small_config(), out)
    assert "train_s" not in again[0].timings
    fresh = run_sweep(jaws, small_config(), tmp_path)
    assert emit_report(fresh, "csv", include_timing=False) == \
        emit_report(records, "csv", include_timing=False)
    assert (tmp_path / "1000" / "model.mrck").read_bytes() == \
        (out / "1000" / "model.mrck").read_bytes()


def test_sweep_records_failures(jaws):
    recs = run_sweep(jaws, small_config(resolutions=[1000, 99999], eval_resolutions=[]))
    assert recs[0].error is None and recs[1].error is not None and recs[1].report is None
