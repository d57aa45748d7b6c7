"""CLI subcommands: exit codes, output schemas, determinism."""

import json
import os

import pytest

from tfhesim import programs
from tfhesim.cli import main


def write_program(tmp_path, doc, name="prog.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run(argv):
    return main(argv)


def test_keygen_writes_keys(tmp_path):
    rc = run(["keygen", "--params", "desk-w3", "--seed", "3", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "keys-desk-w3.bin").exists()


def test_compile_emits_schedule_and_stats(tmp_path):
    prog = write_program(tmp_path, programs.fanout_program(3))
    rc = run(["compile", prog, "--out", str(tmp_path)])
    assert rc == 0
    sched = json.loads((tmp_path / "schedule.json").read_text())
    stats = json.loads((tmp_path / "stats.json").read_text())
    assert sched["version"] == 1 and sched["batches"]
    assert stats["ks_dedup"]["ks_before"] == 3
    assert stats["ks_dedup"]["ks_after"] == 1


def test_run_func_matches_oracle(tmp_path):
    prog = write_program(tmp_path, programs.fig2b_program())
    out = tmp_path / "run"
    rc = run(["run-func", prog, "--params", "desk-w3", "--seed", "11", "--out", str(out)])
    assert rc == 0
    doc = json.loads((out / "results.json").read_text())
    assert doc["all_match"] is True
    assert all(row["match"] for row in doc["outputs"].values())
    assert doc["counters"]["pbs"] == 1


def test_run_func_explicit_inputs(tmp_path):
    prog = write_program(tmp_path, programs.fig2b_program())
    ins = tmp_path / "inputs.json"
    ins.write_text(json.dumps({"x": [1], "y": [1]}))
    out = tmp_path / "run"
    rc = run(["run-func", prog, "--params", "desk-w3", "--seed", "1", "--inputs", str(ins), "--out", str(out)])
    assert rc == 0
    doc = json.loads((out / "results.json").read_text())
    # 2*1 + 3*1 = 5 -> relu clamps the negative half to 0
    assert doc["outputs"]["out"]["expected"] == [0]


def test_run_func_deterministic(tmp_path):
    prog = write_program(tmp_path, programs.fig2b_program())
    blobs = []
    for d in ("a", "b"):
        out = tmp_path / d
        rc = run(["run-func", prog, "--params", "desk-w3", "--seed", "7", "--out", str(out)])
        assert rc == 0
        blobs.append((out / "results.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_run_func_dump_spectra(tmp_path):
    prog = write_program(tmp_path, programs.lut_chain_program(1))
    out = tmp_path / "run"
    spectra = tmp_path / "spectra.csv"
    rc = run(
        ["run-func", prog, "--params", "desk-w3", "--seed", "2", "--out", str(out), "--dump-spectra", str(spectra)]
    )
    assert rc == 0
    header = spectra.read_text().splitlines()[0]
    assert header == "table,chunk,index,re,im"


def test_run_perf_reports(tmp_path):
    prog = write_program(tmp_path, programs.fanout_program(4))
    out = tmp_path / "perf"
    rc = run(["run-perf", prog, "--params", "cnn20", "--seed", "1", "--out", str(out)])
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    xrep = json.loads((out / "report_xpu.json").read_text())
    assert rep["machine"] == "bru" and xrep["machine"] == "xpu"
    assert rep["total_cycles"] > 0 and xrep["total_cycles"] > rep["total_cycles"]
    assert (out / "trace.csv").read_text().startswith("batch,start,cycles,bsk,ksk,glwe,lwe")


def test_run_perf_cluster_utilization_rows(tmp_path):
    prog = write_program(tmp_path, programs.lut_lanes_program(64))
    out = tmp_path / "perf8"
    rc = run(["run-perf", prog, "--params", "cnn20", "--clusters", "8", "--out", str(out), "--no-xpu"])
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    bru_units = [u for u in rep["units"] if u.endswith(".bru")]
    assert len(bru_units) == 8
    assert all("utilization" in rep["units"][u] for u in bru_units)


def test_simulate_from_schedule(tmp_path):
    prog = write_program(tmp_path, programs.lut_lanes_program(48, width=6))
    rc = run(["compile", prog, "--params", "cnn20", "--out", str(tmp_path)])
    assert rc == 0
    out = tmp_path / "sim"
    rc = run(["simulate", str(tmp_path / "schedule.json"), "--params", "cnn20", "--out", str(out)])
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["total_cycles"] > 0
    assert (out / "report_xpu.json").exists()


def test_sweep_csv(tmp_path):
    out_file = tmp_path / "rr.csv"
    rc = run(
        ["sweep", "--kind", "rr", "--range", "11:13", "--params", "cnn20", "--out", str(tmp_path), "--out-file", str(out_file)]
    )
    assert rc == 0
    lines = out_file.read_text().splitlines()
    assert lines[0].startswith("point,total_cycles")
    assert len(lines) == 4


def test_sweep_deterministic(tmp_path):
    blobs = []
    for d in ("s1", "s2"):
        out_file = tmp_path / d / "rr.csv"
        os.makedirs(tmp_path / d)
        rc = run(["sweep", "--kind", "clusters", "--range", "2:4", "--params", "cnn20", "--out", str(tmp_path / d), "--out-file", str(out_file)])
        assert rc == 0
        blobs.append(out_file.read_bytes())
    assert blobs[0] == blobs[1]


def test_dedup_report_values(tmp_path, capsys):
    prog = write_program(tmp_path, programs.fanout_program(3))
    rc = run(["dedup-report", prog, "--out", str(tmp_path)])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    row = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert row["pass"] == "ks_dedup"
    assert float(row["reduction_pct"]) == pytest.approx(66.6667, abs=0.01)

    prog64 = write_program(tmp_path, programs.tensor_map_program(64), "map.json")
    rc = run(["dedup-report", prog64, "--out", str(tmp_path)])
    out = capsys.readouterr().out.strip().splitlines()
    acc_row = dict(zip(out[0].split(","), out[2].split(",")))
    assert float(acc_row["reduction_pct"]) == pytest.approx(98.4375, abs=0.01)


def test_dedup_report_disabled_passes(tmp_path, capsys):
    prog = write_program(tmp_path, programs.fanout_program(3))
    rc = run(["dedup-report", prog, "--no-ks-dedup", "--no-acc-dedup", "--out", str(tmp_path)])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    for line in lines[1:]:
        assert line.endswith(",0")


def test_missing_program_errors(tmp_path, capsys):
    rc = run(["compile", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_invalid_program_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    rc = run(["compile", str(bad), "--out", str(tmp_path)])
    assert rc == 2


def test_machine_config_env_dir(tmp_path, monkeypatch):
    cfgdir = tmp_path / "cfg"
    cfgdir.mkdir()
    (cfgdir / "small.cfg").write_text("clusters = 2\n")
    monkeypatch.setenv("TFHESIM_CONFIG_DIR", str(cfgdir))
    prog = write_program(tmp_path, programs.lut_lanes_program(8))
    out = tmp_path / "env"
    rc = run(["run-perf", prog, "--params", "cnn20", "--machine", "small.cfg", "--clusters", "2", "--out", str(out), "--no-xpu"])
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert len([u for u in rep["units"] if u.endswith(".bru")]) == 2
