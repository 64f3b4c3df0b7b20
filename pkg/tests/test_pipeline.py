import json

import numpy as np
import pytest

from calicert.errors import InputError
from calicert.metrics import BinningScheme, PredictionRecord, compute_ece, compute_tlbs
from calicert.mip import build_instance
from calicert.pipeline import (
    FORMAT_VERSION,
    ROW_KEYS,
    CertifiedReport,
    EvidenceRecord,
    RunConfig,
    emit_report,
    ingest,
    load_report,
    plot_rows,
    report_json,
    run_pipeline,
)
from calicert.synthetic import smoothed_dataset, synthetic_evidence

from conftest import FIXTURES

QUICK = {"max_steps": 800}


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_ingest_e2_jsonl_and_csv():
    for name in ("e2.jsonl", "e2.csv"):
        recs = ingest(FIXTURES / name)
        assert [r.id for r in recs] == ["a", "b"]
        assert [r.correct for r in recs] == [True, False]
        inst = build_instance(recs, BinningScheme.equal_width(3))
        assert inst.N == 2


def test_ingest_errors_carry_line_numbers(tmp_path):
    with pytest.raises(InputError, match="no records"):
        ingest(write(tmp_path, "empty.jsonl", ""))
    with pytest.raises(InputError, match="line 2"):
        ingest(write(tmp_path, "bad.jsonl", '{"confidence": 0.5, "correct": true}\n{oops\n'))
    with pytest.raises(InputError, match="line 1"):
        ingest(write(tmp_path, "miss.jsonl", '{"confidence": 0.5}\n'))
    with pytest.raises(InputError, match="line 3"):
        ingest(write(tmp_path, "bad.csv", "id,confidence,correct\na,0.5,true\nb,zero,true\n"))
    with pytest.raises(InputError, match="duplicate"):
        ingest(write(tmp_path, "dup.jsonl", '{"id": 1, "confidence": 0.5, "correct": true}\n' * 2))
    with pytest.raises(InputError, match="cannot read"):
        ingest(tmp_path / "absent.jsonl")


def test_ingest_clamps_tiny_overshoot(tmp_path):
    p = write(tmp_path, "c.jsonl", '{"id": "x", "confidence": 1.0000000001, "correct": true}\n')
    with pytest.warns(UserWarning, match="clamped"):
        (rec,) = ingest(p)
    assert rec.confidence == 1.0
    with pytest.raises(InputError):
        ingest(write(tmp_path, "d.jsonl", '{"id": "x", "confidence": 1.1, "correct": true}\n'))


def test_unknown_fields_preserved(tmp_path):
    p = write(tmp_path, "x.jsonl", '{"id": "x", "confidence": 0.4, "correct": false, "class_counts": [3, 1]}\n')
    (rec,) = ingest(p)
    assert rec.extra == {"class_counts": [3, 1]}


def test_evidence_mode(tmp_path):
    line = {"id": "e", "correct": True, "n_samples": 1000, "sigma": 0.5, "alpha": 0.001, "top_count": 990,
            "mean_top_confidence": 0.9}
    p = write(tmp_path, "ev.jsonl", json.dumps(line) + "\n")
    (rec,) = ingest(p, mode="evidence")
    assert isinstance(rec, EvidenceRecord) and rec.confidence == 0.9
    report = run_pipeline(RunConfig(input=str(p), mode="evidence", radii=(0, 0.25, 10.0), admm=QUICK))
    rows = report.rows
    assert rows[0]["n_certified"] == 1 and rows[1]["n_certified"] == 1
    assert rows[2]["n_certified"] == 0 and rows[2]["acce_admm"] is None
    assert rows[1]["mean_width"] > rows[0]["mean_width"]
    csv = "id,correct,n_samples,sigma,alpha,top_count,confidence_samples\ne,1,4,0.5,0.1,4,0.9;0.8;0.95;0.85\n"
    (rec,) = ingest(write(tmp_path, "ev.csv", csv), mode="evidence")
    assert rec.evidence.confidence_samples == (0.9, 0.8, 0.95, 0.85)


def test_zero_radius_degenerate_boxes(tmp_path, rng):
    z = rng.random(40)
    c = rng.random(40) < z
    recs = [PredictionRecord(i, z[i], bool(c[i])) for i in range(40)]
    row = run_pipeline(RunConfig(radii=(0,), bins=5, admm=QUICK), recs).rows[0]
    scheme = BinningScheme.equal_width(5)
    assert row["cbs"] == compute_tlbs(recs)
    assert row["acce_admm"] == compute_ece(recs, scheme).ece
    assert row["acce_admm"] == row["ece"]


def test_e2_pipeline_with_oracle():
    row = run_pipeline(RunConfig(input=str(FIXTURES / "e2.jsonl"), bins=3, oracle=True, dece=True)).rows[0]
    assert row["cbs"] == pytest.approx(0.81, abs=1e-12)
    assert row["acce_admm"] == pytest.approx(0.9, abs=1e-3)
    assert row["cce_oracle"] == pytest.approx(0.9, abs=1e-12)
    assert row["acce_admm"] <= row["cce_oracle"] + 1e-9


def sweep(sigma=0.25, N=120, radii=(0, 0.1, 0.2, 0.3, 0.4)):
    return run_pipeline(RunConfig(radii=radii, bins=10, admm=QUICK), smoothed_dataset(sigma, N, seed=3))


def test_sweep_invariants():
    report = sweep()
    rows = report.rows
    counts = [r["n_certified"] for r in rows]
    assert counts == sorted(counts, reverse=True)
    for r in rows:
        if r["n_certified"]:
            assert r["cbs"] >= r["tlbs"]
            assert r["acce_admm"] >= r["ece"] - 1e-12


def test_mean_width_nondecreasing_on_fixed_set(rng):
    z = rng.uniform(0.05, 0.95, 30)
    recs = [PredictionRecord(i, z[i], True, radius=5.0, sigma=0.25) for i in range(30)]
    rows = run_pipeline(RunConfig(radii=np.linspace(0, 1, 6), admm=QUICK), recs).rows
    widths = [r["mean_width"] for r in rows]
    assert widths == sorted(widths) and widths[0] == 0.0


def test_acce_nondecreasing_on_well_calibrated_stream(rng):
    z = rng.uniform(0.55, 0.95, 60)
    recs = [PredictionRecord(i, z[i], bool(rng.random() < z[i]), radius=10.0, sigma=0.5) for i in range(60)]
    rows = run_pipeline(RunConfig(radii=(0, 0.05, 0.1, 0.2, 0.4), bins=8), recs).rows
    acce = [r["acce_admm"] for r in rows]
    assert all(b >= a - 1e-9 for a, b in zip(acce, acce[1:]))
    cbs = [r["cbs"] for r in rows]
    assert all(b >= a for a, b in zip(cbs, cbs[1:]))


def test_abstain_policies():
    recs = [PredictionRecord("a", 0.8, True, radius=0.1, sigma=0.25),
            PredictionRecord("b", 0.6, True, radius=0.5, sigma=0.25)]
    ex = run_pipeline(RunConfig(radii=(0.2,), admm=QUICK), recs).rows[0]
    inc = run_pipeline(RunConfig(radii=(0.2,), abstain="incorrect", admm=QUICK), recs).rows[0]
    assert ex["n_certified"] == 1 and ex["accuracy"] == 1.0
    assert inc["n_certified"] == 2 and inc["accuracy"] == 0.5
    assert ex["certified_accuracy"] == 0.5


def test_strict_radius_filter():
    recs = [PredictionRecord("a", 0.8, True, radius=0.2, sigma=0.25)]
    rows = run_pipeline(RunConfig(radii=(0.2, 0.2000001), admm=QUICK), recs).rows
    assert [r["n_certified"] for r in rows] == [1, 0]


def test_missing_bounds_and_sigma_is_an_error():
    recs = [PredictionRecord("a", 0.8, True)]
    with pytest.raises(InputError, match="neither bounds nor sigma"):
        run_pipeline(RunConfig(radii=(0.1,)), recs)


def test_round_trip_and_explicit_nulls(tmp_path):
    recs = [PredictionRecord(r.id, r.confidence, r.correct, 1.0, r.lower, r.upper)
            for r in ingest(FIXTURES / "e2.jsonl")]
    report = run_pipeline(RunConfig(radii=(0, 5.0), bins=3, dece=True), recs)
    rows = report.rows
    assert set(rows[1]) == set(ROW_KEYS)
    path = tmp_path / "out" / "report.json"
    emit_report(report, path, tmp_path / "plot.csv", tmp_path / "rel.csv")
    raw = json.loads(path.read_text())
    assert raw["version"] == FORMAT_VERSION and list(raw)[:3] == ["version", "config", "rows"]
    assert "cbs" in raw["rows"][1] and raw["rows"][1]["cbs"] is None
    back = load_report(path)
    assert back.to_dict() == report.to_dict()
    assert report_json(back) == path.read_text()
    plot = (tmp_path / "plot.csv").read_text().splitlines()
    assert plot[0] == "radius,metric,value,method"
    assert len(plot) - 1 == 2 * 5  # radii x enabled series (dece on, oracle off)
    assert len(plot_rows(report)) == 10
    rel = (tmp_path / "rel.csv").read_text().splitlines()
    assert rel[0] == "radius,bin,count,mean_confidence,accuracy,gap" and len(rel) == 4


def test_report_version_check(tmp_path):
    p = write(tmp_path, "r.json", json.dumps({"version": 99, "config": {}, "rows": []}))
    with pytest.raises(InputError, match="version"):
        load_report(p)
    with pytest.raises(InputError):
        CertifiedReport.from_dict({"version": 0})


def test_workers_do_not_change_results():
    recs = smoothed_dataset(0.25, 60, seed=1)
    a = run_pipeline(RunConfig(radii=(0, 0.1, 0.2), bins=6, admm=QUICK), recs)
    b = run_pipeline(RunConfig(radii=(0, 0.1, 0.2), bins=6, admm=QUICK, workers=3), recs)
    assert a.rows == b.rows


def test_run_config_validation():
    assert RunConfig(radii=(0.5, 0, 0.25)).radii == (0.0, 0.25, 0.5)
    for bad in ({"bins": 0}, {"radii": (-1,)}, {"radii": ()}, {"mode": "x"}, {"admm": {"nope": 1}},
                {"alpha": 1.5}, {"abstain": "maybe"}):
        with pytest.raises(InputError):
            RunConfig(**bad)
    with pytest.raises(InputError, match="unknown configuration"):
        RunConfig.from_mapping({"frobnicate": 1})
    assert RunConfig.from_mapping({"radii": "0, 0.5"}).radii == (0.0, 0.5)


def test_equal_count_binning():
    recs = smoothed_dataset(0.25, 50, seed=2)
    row = run_pipeline(RunConfig(radii=(0.1,), binning="equal-count", bins=5, dece=True, admm=QUICK), recs).rows[0]
    assert row["acce_admm"] >= row["ece"] - 1e-12
    assert row["acce_dece"] is None  # soft binning is equal-width only


def test_evidence_alpha_override(tmp_path):
    rng = np.random.default_rng(0)
    evs = synthetic_evidence(rng, 5, n_samples=400)
    recs = [EvidenceRecord(i, True, ev) for i, ev in enumerate(evs)]
    loose = run_pipeline(RunConfig(mode="evidence", radii=(0.1,), admm=QUICK), recs).rows[0]
    tight = run_pipeline(RunConfig(mode="evidence", radii=(0.1,), alpha=0.2, admm=QUICK), recs).rows[0]
    if loose["n_certified"] == tight["n_certified"] == 5:
        assert tight["mean_width"] <= loose["mean_width"]
    assert tight["n_certified"] >= loose["n_certified"]
