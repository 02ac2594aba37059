import csv
import json
import warnings

import pytest
import yaml

from gptmacro import cli
from gptmacro.config import ConfigError, RunConfig, parse_config
from gptmacro.embedding import classification_label
from gptmacro.errors import ConvergenceFailure
from gptmacro.tomography import reconstruct


def _cfg(tmp_path, doc, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return str(p)


def _run(*argv):
    return cli.main([str(a) for a in argv])


def test_simulate_counterexample_shape(tmp_path):
    cfg = _cfg(tmp_path, {"schema": 1, "scenario": "counterexample", "trials": 10**5, "seed": 7})
    assert _run("simulate", "--config", cfg, "--out", tmp_path / "o") == 0
    with open(tmp_path / "o" / "counts.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["prep_id", "meas_id", "outcome_id", "count"]
    assert len(rows) == 4 * 1 * 2
    assert {r["prep_id"] for r in rows} == {"s1", "s2", "sbar1", "sbar2"}
    per_prep = {}
    for r in rows:
        per_prep[r["prep_id"]] = per_prep.get(r["prep_id"], 0) + int(r["count"])
    assert set(per_prep.values()) == {10**5}


@pytest.mark.parametrize("workers", [1, 4])
def test_simulate_rerun_is_byte_identical(tmp_path, workers):
    cfg = _cfg(tmp_path, {"schema": 1, "scenario": {"name": "sharp_qubit", "params": {"n": 6}}, "trials": 5000, "seed": 11})
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert _run("simulate", "--config", cfg, "--out", out, "--workers", workers) == 0
        outs.append((out / "counts.csv").read_bytes())
    assert outs[0] == outs[1]


def test_worker_count_does_not_change_counts(tmp_path):
    cfg = _cfg(tmp_path, {"schema": 1, "scenario": "qubit_pauli", "trials": 2000, "seed": 5})
    _run("simulate", "--config", cfg, "--out", tmp_path / "w1", "--workers", 1)
    _run("simulate", "--config", cfg, "--out", tmp_path / "w4", "--workers", 4)
    assert (tmp_path / "w1" / "counts.csv").read_bytes() == (tmp_path / "w4" / "counts.csv").read_bytes()


def test_exact_sentinel(tmp_path):
    cfg = _cfg(tmp_path, {"schema": 1, "scenario": "counterexample", "trials": 100, "seed": 1})
    assert _run("simulate", "--config", cfg, "--out", tmp_path, "--exact", "--csv-summary") == 0
    with open(tmp_path / "counts.csv") as fh:
        rows = {(r["prep_id"], r["outcome_id"]): r["count"] for r in csv.DictReader(fh)}
    assert float(rows[("s1", "e")]) == 0.75
    meta = json.loads((tmp_path / "counts.meta.json").read_text())
    assert meta["exact"] is True
    assert {t["trials"] for t in meta["trials"]} == {0}
    with open(tmp_path / "frequencies.csv") as fh:
        freqs = {(r["prep_id"], r["outcome_id"]): float(r["frequency"]) for r in csv.DictReader(fh)}
    assert freqs[("s1", "e")] == 0.75


def test_analyze_exact_counterexample(tmp_path):
    cfg = _cfg(tmp_path, {"schema": 1, "scenario": "counterexample"})
    assert _run("simulate", "--config", cfg, "--out", tmp_path) == 0
    assert _run("analyze", "--config", cfg, "--counts", tmp_path / "counts.csv", "--out", tmp_path, "--csv-summary") == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["classification"] == "ConsistentWithMacrorealism"
    assert rep["realized_gpt"]["k"] == 2
    emb = rep["embedding"]
    assert rep["classification"] == classification_label(emb["noncontextuality"]["verdict"], emb["strict_classicality"]["verdict"])
    assert len(rep["config_hash"]) == 64 and rep["version"]
    header = (tmp_path / "realized_gpt.csv").read_text().splitlines()[0]
    assert header == "kind,id,c0,c1"
    summary = (tmp_path / "summary.csv").read_text()
    assert "classification,ConsistentWithMacrorealism" in summary


def test_analyze_exact_sharp_qubit(tmp_path):
    cfg = _cfg(tmp_path, {"schema": 1, "scenario": {"name": "sharp_qubit", "params": {"n": 20}}})
    _run("simulate", "--config", cfg, "--out", tmp_path)
    assert _run("analyze", "--config", cfg, "--counts", tmp_path / "counts.csv", "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["classification"] == "Contextual" and rep["realized_gpt"]["k"] == 4


def test_analyze_reports_are_reproducible(tmp_path):
    cfg = _cfg(tmp_path, {"schema": 1, "scenario": "counterexample", "trials": 10**4, "seed": 3})
    _run("simulate", "--config", cfg, "--out", tmp_path)
    docs = []
    for i in range(2):
        out = tmp_path / f"a{i}"
        assert _run("analyze", "--config", cfg, "--counts", tmp_path / "counts.csv", "--out", out) == 0
        docs.append((out / "report.json").read_text())
    assert docs[0] == docs[1]


def test_exit_codes(tmp_path):
    bad_key = _cfg(tmp_path, {"schema": 1, "scenario": "counterexample", "colour": "red"}, "a.yaml")
    assert _run("simulate", "--config", bad_key, "--out", tmp_path) == 2
    no_schema = _cfg(tmp_path, {"scenario": "counterexample"}, "b.yaml")
    assert _run("simulate", "--config", no_schema, "--out", tmp_path) == 2
    no_seed = _cfg(tmp_path, {"schema": 1, "scenario": "counterexample", "trials": 10}, "c.yaml")
    assert _run("simulate", "--config", no_seed, "--out", tmp_path) == 2
    unknown = _cfg(tmp_path, {"schema": 1, "scenario": "no_such_scenario"}, "d.yaml")
    assert _run("simulate", "--config", unknown, "--out", tmp_path) == 3
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert _run("analyze", "--counts", empty, "--out", tmp_path) == 4
    garbled = tmp_path / "garbled.csv"
    garbled.write_text("prep_id,meas_id,outcome_id,count\ns1,M,e,lots\n")
    assert _run("analyze", "--counts", garbled, "--out", tmp_path) == 4
    assert _run("bogus-command") == 2


def test_witness_missing_labels_exit_3(tmp_path):
    cfg = _cfg(tmp_path, {"schema": 1, "scenario": "counterexample", "witnesses": ["lg"]})
    assert _run("witness", "--config", cfg, "--out", tmp_path) == 3


def test_convergence_failure_exit_5(tmp_path, monkeypatch):
    def stubborn(fm, **kw):
        rg = reconstruct(fm, **kw)
        warnings.warn("forced", ConvergenceFailure)
        return rg

    monkeypatch.setattr(cli, "reconstruct", stubborn)
    cfg = _cfg(tmp_path, {"schema": 1, "scenario": "counterexample"})
    _run("simulate", "--config", cfg, "--out", tmp_path)
    assert _run("analyze", "--config", cfg, "--counts", tmp_path / "counts.csv", "--out", tmp_path) == 5
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["status"] == "convergence-failure" and "classification" not in rep


def test_witness_presets(tmp_path):
    lg = _cfg(tmp_path, {"schema": 1, "scenario": {"name": "lg_qubit", "params": {"theta": 1.0471975511965976}}}, "lg.yaml")
    assert _run("witness", "--config", lg, "--out", tmp_path / "lg") == 0
    rep = json.loads((tmp_path / "lg" / "witness_report.json").read_text())
    assert rep["witnesses"][0]["result"]["K3"] == pytest.approx(1.5, abs=1e-9)
    ns = _cfg(tmp_path, {"schema": 1, "scenario": "nsit_qubit", "witnesses": ["nsit"]}, "ns.yaml")
    assert _run("witness", "--config", ns, "--out", tmp_path / "ns", "--csv-summary") == 0
    rep = json.loads((tmp_path / "ns" / "witness_report.json").read_text())
    assert rep["witnesses"][0]["result"]["delta"] == pytest.approx(0.5, abs=1e-9)
    assert (tmp_path / "ns" / "witness_summary.csv").exists()


def test_demo_counterexample(tmp_path):
    assert _run("demo-counterexample", "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "demo_report.json").read_text())
    assert rep["disturbances"] == pytest.approx({"sbar1": 1.0, "sbar2": 1.0, "s1": 0.5, "s2": 0.5}, abs=1e-9)
    w = rep["witness_noisy_controls"]
    assert w["max_control"] == pytest.approx(0.5) and w["test_disturbance"] == pytest.approx(1.0) and w["fires"]
    assert not rep["witness_vertex_controls"]["fires"]
    assert rep["analysis"]["classification"] == "ConsistentWithMacrorealism"


def test_shipped_configs_parse():
    from pathlib import Path

    for p in sorted(Path(__file__).resolve().parent.parent.joinpath("configs").glob("*.yaml")):
        parse_config(yaml.safe_load(p.read_text()))


def test_config_hash_stable():
    a = RunConfig(scenario="counterexample", trials=10, seed=1)
    b = RunConfig(scenario="counterexample", trials=10, seed=1)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != RunConfig(scenario="counterexample", trials=10, seed=2).config_hash()
    assert a.config_hash() == RunConfig(scenario="counterexample", trials=10, seed=1, out="elsewhere", workers=3).config_hash()
    with pytest.raises(ConfigError):
        RunConfig(trials=10)
