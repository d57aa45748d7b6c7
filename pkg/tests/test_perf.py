"""Cycle formulas, bandwidth accounting, and both machine models."""

import json
from fractions import Fraction

import pytest

from tfhesim import compiler, params, perf, programs
from tfhesim.params import TfheParams
from tfhesim.perf import MachineConfig, XpuConfig
from tfhesim.torus import GadgetParams


def mk_params(n=737, N=2048, k=1, d=2, d_ks=2, width=6):
    return TfheParams(
        name="perf-test",
        n=n,
        glwe_degree=N,
        glwe_dim=k,
        width=width,
        pbs_gadget=GadgetParams(8, d),
        ks_gadget=GadgetParams(8, d_ks),
        noise_std_short=0.0,
        noise_std_long=0.0,
    )


M = MachineConfig()


def test_balanced_pipeline_breakdown():
    bd = perf.bru_iteration_breakdown(mk_params(), M)
    assert bd["fft"] == 16 and bd["mac"] == 16 and bd["iteration"] == 16


def test_breakdown_linear_in_depth():
    b1 = perf.bru_iteration_breakdown(mk_params(d=1), M)
    b2 = perf.bru_iteration_breakdown(mk_params(d=2), M)
    assert b2["fft"] == 2 * b1["fft"]
    assert b2["mac"] == 2 * b1["mac"]


def test_mac_quadratic_in_glwe_dim():
    b1 = perf.bru_iteration_breakdown(mk_params(k=1), M)
    b2 = perf.bru_iteration_breakdown(mk_params(k=2), M)
    assert b2["mac"] / b1["mac"] == Fraction(9, 4)


def test_lpu_keyswitch_scaling():
    p1 = mk_params(d_ks=1)
    p2 = mk_params(d_ks=2)
    fill = M.pipeline_fill_cycles
    assert perf.lpu_keyswitch_cycles(p2, M) - fill == 2 * (perf.lpu_keyswitch_cycles(p1, M) - fill)
    m8 = M.with_overrides(lpu_lanes=8)
    assert perf.lpu_keyswitch_cycles(p2, m8) - fill == (perf.lpu_keyswitch_cycles(p2, M) - fill) / 2


@pytest.mark.parametrize("name", params.FULL_SET_NAMES)
def test_keyswitch_hides_under_blind_rotation(name):
    p = params.get_params(name)
    assert perf.lpu_keyswitch_cycles(p, M) < perf.bru_blind_rotation_cycles(p, M)


def test_bsk_bytes_per_iteration():
    assert perf.bsk_iteration_bytes(mk_params()) == 98_304


def test_bandwidth_demand_trace():
    p = mk_params()
    lg = compiler.lower(programs.to_graph(programs.lut_lanes_program(48, width=6)))
    sched = compiler.make_schedule(lg)
    rows = perf.bandwidth_demand(sched.batches[0], p, M)
    assert len(rows) == p.n
    assert all(r["bsk"] == 98_304 for r in rows)
    total = sum(r["bsk"] + r["ksk"] + r["glwe"] + r["lwe"] for r in rows)
    assert total > 0


def test_bsk_reuse_factor():
    # bytes per ciphertext at rr=1 are 12x the bytes at rr=12
    p = params.get_params("cnn20")
    wl = perf.standard_sweep_workload("rr", p, batches=4)
    rows = perf.sweep("rr", [1, 12], wl, p, M)
    per_ct = [r["bsk_bytes"] / (r["point"] * 4 * 4) for r in rows]
    assert per_ct[0] / per_ct[1] == pytest.approx(12.0)


def test_bsk_bytes_per_batch_independent_of_rr():
    p = params.get_params("cnn20")
    wl = perf.standard_sweep_workload("rr", p, batches=4)
    rows = perf.sweep("rr", [6, 12], wl, p, M)
    per_batch = [r["bsk_bytes"] / 4 for r in rows]
    assert per_batch[0] == per_batch[1]


def test_simulate_deterministic(desk_params):
    p = params.get_params("cnn20")
    lg = compiler.lower(programs.to_graph(programs.mixed_layers_program(50, 3, width=6)))
    sched = compiler.make_schedule(lg)
    a = perf.simulate(sched, p, M)
    b = perf.simulate(sched, p, M)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def test_conservation():
    p = params.get_params("cnn20")
    lg = compiler.lower(programs.to_graph(programs.mixed_layers_program(48, 4, width=6)))
    sched = compiler.make_schedule(lg)
    rep = perf.simulate(sched, p, M)
    for name, u in rep.units.items():
        assert u.busy + u.stall + u.idle == rep.total_cycles, name
    assert sum(w.total for w in rep.windows) == sum(
        rep.totals[k] for k in ("bsk", "ksk", "glwe", "lwe")
    )


def test_overlap_beats_serial():
    p = params.get_params("cnn20")
    lg = compiler.lower(programs.to_graph(programs.lut_lanes_program(4 * 48, width=6)))
    sched = compiler.make_schedule(lg)
    rep = perf.simulate(sched, p, M)
    pre = 12 * (perf.lpu_keyswitch_cycles(p, M) + perf.lpu_modswitch_cycles(p, M))
    dur = p.n * 96 + M.pipeline_fill_cycles
    post = 12 * perf.lpu_sample_extract_cycles(p, M)
    serialized = 4 * (pre + dur + post)
    assert rep.total_cycles < serialized


def test_monotone_degradation():
    p = params.get_params("cnn20")
    lg = compiler.lower(programs.to_graph(programs.lut_lanes_program(96, width=6)))
    sched = compiler.make_schedule(lg)
    base = perf.simulate(sched, p, M).total_cycles
    prev = base
    for bw in (600.0, 400.0, 200.0):
        t = perf.simulate(sched, p, M.with_overrides(hbm_bandwidth_bytes_per_cycle=bw)).total_cycles
        assert t >= prev
        prev = t
    prev = base
    for buf in (512 * 1024, 256 * 1024, 64 * 1024):
        t = perf.simulate(sched, p, M.with_overrides(acc_buffer_bytes=buf)).total_cycles
        assert t >= prev
        prev = t


def test_acc_requirement_anchor():
    # two complex accumulators per ciphertext at the largest desk row:
    # 12 cts x 2 x (k+1) x N/2 x 12B == the 9216 KB default
    p = params.get_params("gpt2")
    assert perf.acc_buffer_required(p, 12) == 9216 * 1024
    assert M.acc_buffer_bytes == 9216 * 1024


def test_swap_stalls_and_band():
    p = params.get_params("gpt2")
    req = perf.acc_buffer_required(p, 12)
    wl = perf.standard_sweep_workload("accbuf", p)
    pts = [req, req - 8 * 1024, req - 64 * 1024]
    rows = perf.sweep("accbuf", pts, wl, p, M)
    assert rows[0]["swap_stalls"] == 0
    assert rows[1]["swap_stalls"] > 0
    assert rows[1]["bru_utilization"] > 0.99
    assert rows[0]["total_cycles"] < rows[1]["total_cycles"] < rows[2]["total_cycles"]


def test_xpu_pe_activity():
    sched = compiler.make_schedule(
        compiler.lower(programs.to_graph(programs.lut_lanes_program(48, width=6)))
    )
    x = XpuConfig()
    r1 = perf.simulate_xpu(sched, mk_params(k=1), x, M)
    r3 = perf.simulate_xpu(sched, mk_params(k=3, N=1024), x, M)
    assert r1.pe_active_fraction == 0.5
    assert r3.pe_active_fraction == 1.0


def test_xpu_work_invariance_and_speedup_band():
    p = params.get_params("cnn20")
    lg = compiler.lower(programs.to_graph(programs.mixed_layers_program(96, 6, width=6, fanout_every=2)))
    sched = compiler.make_schedule(lg)
    rb = perf.simulate(sched, p, M)
    rx = perf.simulate_xpu(sched, p, XpuConfig(), M)
    assert rb.work["mac_ops"] == rx.work["mac_ops"]
    ratio = rx.total_cycles / rb.total_cycles
    assert 1.0 < ratio < 10.0


def test_xpu_equal_throughput_sanity():
    # matched per-cluster FFT capacity and clean packing: the two models agree
    p = mk_params(d=2)
    m = M.with_overrides(round_robin=8)
    lg = compiler.lower(programs.to_graph(programs.lut_lanes_program(2 * 32, width=6)))
    sched = compiler.make_schedule(lg, round_robin=8)
    rb = perf.simulate(sched, p, m)
    rx = perf.simulate_xpu(sched, p, XpuConfig(rows=4, pes_per_row=4, fftu_throughput=64), m)
    assert rx.total_cycles / rb.total_cycles == pytest.approx(1.0, abs=0.02)


def test_machine_config_file(tmp_path):
    cfg = tmp_path / "m.cfg"
    cfg.write_text("clusters = 8\nhbm_efficiency = 0.8  # derate\nsync_mode = grouped\n")
    m = MachineConfig.from_file(str(cfg))
    assert m.clusters == 8 and m.hbm_efficiency == 0.8 and m.sync_mode == "grouped"
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n")
    with pytest.raises(ValueError):
        MachineConfig.from_file(str(bad))


def test_parse_range():
    assert perf.parse_range("2:8:2") == [2, 4, 6, 8]
    assert perf.parse_range("1:3") == [1, 2, 3]
    assert perf.parse_range("5,9,12") == [5, 9, 12]
    with pytest.raises(ValueError):
        perf.parse_range("3:1:0")


def test_grouped_sync_effects():
    p = params.get_params("cnn20")
    lg = compiler.lower(programs.to_graph(programs.mixed_layers_program(44, 8, width=6)))
    rf = perf.simulate(compiler.make_schedule(lg, sync_mode="full"), p, M)
    rg = perf.simulate(
        compiler.make_schedule(lg, sync_mode="grouped"), p, M.with_overrides(sync_mode="grouped")
    )
    improvement = 1 - rg.total_cycles / rf.total_cycles
    assert 0.0 <= improvement < 0.05
    assert rg.peak_bandwidth >= 1.7 * rf.peak_bandwidth
    # desynchronized groups refetch their own key streams
    assert rg.totals["bsk"] == 2 * rf.totals["bsk"]
