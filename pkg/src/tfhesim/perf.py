"""Cycle- and bandwidth-level model of the accelerator, plus a systolic baseline.

The machine: `clusters` vector-core clusters, each with two blind-rotation
units (BRUs) sharing one inverse-FFT unit, and one LWE processing unit
(LPU) with four 64-element lanes.  Blind rotation interleaves up to
`round_robin` ciphertexts per cluster so one fetched bootstrapping-key
chunk serves every in-flight ciphertext in the machine; key-switching and
sample extraction run on the LPU and overlap blind rotation of independent
batches.  The systolic baseline replaces each BRU with a 4-row
external-product array whose per-row FFT streams 8 points per cycle.

Everything is closed-form integer/Fraction arithmetic walked batch by
batch, so reports are bit-reproducible.  DRAM is a bandwidth-limited pipe
with an efficiency factor; per-stage FFT pipeline depths and NoC latency
are exposed as knobs since no canonical values exist for them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from fractions import Fraction

from .compiler import LoweredGraph, Schedule, make_schedule
from .params import TfheParams

BYTES_PER_COMPLEX = 12  # 48-bit real + 48-bit imaginary
BYTES_PER_WORD = 8


@dataclass(frozen=True)
class MachineConfig:
    clusters: int = 4
    brus_per_cluster: int = 2
    bru_mac_throughput: int = 512  # complex MACs per cycle per BRU
    fft_throughput: int = 256  # points per cycle per BRU; the shared IFFT runs at this rate
    lpu_lanes: int = 4
    lpu_lane_width: int = 64
    round_robin: int = 12  # ciphertexts per cluster in one batch
    acc_buffer_bytes: int = 9216 * 1024
    glwe_buffer_bytes: int = 1536 * 1024
    lwe_buffer_bytes: int = 24 * 1024
    ggsw_buffer_bytes: int = 819 * 1024
    ksk_buffer_bytes: int = 512 * 1024
    twiddle_buffer_bytes: int = 819 * 1024
    hbm_bandwidth_bytes_per_cycle: float = 819.0  # two HBM stacks at 1 GHz
    hbm_efficiency: float = 0.90
    noc_latency_cycles: int = 8
    pipeline_fill_cycles: int = 64
    swap_chunk_bytes: int = 16 * 1024  # read/store queue granularity
    swap_event_cycles: int = 1
    sync_mode: str = "full"
    clock_ghz: float = 1.0

    @property
    def batch_capacity(self) -> int:
        return self.clusters * self.round_robin

    @property
    def hbm_capacity(self) -> float:
        return self.hbm_bandwidth_bytes_per_cycle * self.hbm_efficiency

    def with_overrides(self, **kw) -> "MachineConfig":
        return replace(self, **kw)

    @classmethod
    def from_file(cls, path: str) -> "MachineConfig":
        """Parse a key=value config file (# comments allowed)."""
        kw = {}
        types = {f.name: f.type for f in fields(cls)}
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key = value")
                key, val = (s.strip() for s in line.split("=", 1))
                if key not in types:
                    raise ValueError(f"{path}:{lineno}: unknown machine key {key!r}")
                if types[key] == "int":
                    kw[key] = int(val)
                elif types[key] == "float":
                    kw[key] = float(val)
                else:
                    kw[key] = val
        return cls(**kw)


@dataclass(frozen=True)
class XpuConfig:
    rows: int = 4
    pes_per_row: int = 4
    fftu_throughput: int = 8  # points per cycle per row


@dataclass
class BandwidthWindow:
    batch: int
    start: int
    cycles: int
    bsk: int
    ksk: int
    glwe: int
    lwe: int

    @property
    def total(self) -> int:
        return self.bsk + self.ksk + self.glwe + self.lwe


@dataclass
class UnitStats:
    busy: int = 0
    stall: int = 0
    idle: int = 0

    @property
    def total(self) -> int:
        return self.busy + self.stall + self.idle

    @property
    def utilization(self) -> float:
        denom = self.busy + self.stall
        return self.busy / denom if denom else 1.0


@dataclass
class PerfReport:
    machine: str
    total_cycles: int
    units: dict[str, UnitStats]
    windows: list[BandwidthWindow]
    peak_bandwidth: float  # demanded bytes/cycle over the worst window
    totals: dict[str, int]  # bytes per stream
    stalls: dict[str, int]  # key_starvation | buffer_swap | dependency
    buffers: dict[str, int]
    work: dict[str, int]
    clock_ghz: float = 1.0
    pe_active_fraction: float | None = None

    @property
    def wall_clock_ms(self) -> float:
        return self.total_cycles / (self.clock_ghz * 1e6)

    def bru_utilization(self) -> float:
        stats = [u for name, u in self.units.items() if name.endswith("bru")]
        busy = sum(u.busy for u in stats)
        stall = sum(u.stall for u in stats)
        return busy / (busy + stall) if busy + stall else 1.0

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "machine": self.machine,
            "total_cycles": self.total_cycles,
            "wall_clock_ms": self.wall_clock_ms,
            "units": {
                name: {"busy": u.busy, "stall": u.stall, "idle": u.idle, "utilization": u.utilization}
                for name, u in self.units.items()
            },
            "bandwidth": {
                "peak_bytes_per_cycle": self.peak_bandwidth,
                "totals": self.totals,
                "windows": [
                    {
                        "batch": w.batch,
                        "start": w.start,
                        "cycles": w.cycles,
                        "bsk": w.bsk,
                        "ksk": w.ksk,
                        "glwe": w.glwe,
                        "lwe": w.lwe,
                    }
                    for w in self.windows
                ],
            },
            "stalls": self.stalls,
            "buffers": self.buffers,
            "work": self.work,
            "pe_active_fraction": self.pe_active_fraction,
        }


# ---------------------------------------------------------------- formulas


def bru_iteration_breakdown(params: TfheParams, m: MachineConfig) -> dict[str, Fraction]:
    """Per blind-rotation iteration, per ciphertext, on one BRU (exact)."""
    N, k, d = params.glwe_degree, params.glwe_dim, params.pbs_gadget.depth
    half = Fraction(N, 2)
    fft_c = Fraction((k + 1) * d) * half / m.fft_throughput
    mac_c = Fraction((k + 1) ** 2 * d) * half / m.bru_mac_throughput
    # the IFFT is shared by the cluster's BRUs, so each sees half its rate
    ifft_c = Fraction(k + 1) * half * m.brus_per_cluster / m.fft_throughput
    return {
        "fft": fft_c,
        "mac": mac_c,
        "ifft": ifft_c,
        "iteration": max(fft_c, mac_c, ifft_c),
    }


def bru_blind_rotation_cycles(params: TfheParams, m: MachineConfig) -> int:
    """One ciphertext's blind rotation: n pipelined iterations plus fill."""
    it = bru_iteration_breakdown(params, m)["iteration"]
    return math.ceil(params.n * it) + m.pipeline_fill_cycles


def lpu_keyswitch_cycles(params: TfheParams, m: MachineConfig) -> int:
    """n_long * d_ks digit rows, each accumulating an (n+1)-element LWE row."""
    work = params.n_long * params.ks_gadget.depth * (params.n + 1)
    return math.ceil(work / (m.lpu_lanes * m.lpu_lane_width)) + m.pipeline_fill_cycles


def lpu_modswitch_cycles(params: TfheParams, m: MachineConfig) -> int:
    return math.ceil((params.n + 1) / (m.lpu_lanes * m.lpu_lane_width))


def lpu_sample_extract_cycles(params: TfheParams, m: MachineConfig) -> int:
    return math.ceil((params.n_long + 1) / (m.lpu_lanes * m.lpu_lane_width))


def lpu_linear_cycles(params: TfheParams, m: MachineConfig) -> int:
    return math.ceil((params.n_long + 1) / (m.lpu_lanes * m.lpu_lane_width))


def bsk_iteration_bytes(params: TfheParams) -> int:
    """Bootstrapping-key bytes consumed by one blind-rotation iteration,
    fetched once per iteration machine-wide and reused by every in-flight
    ciphertext."""
    k, d, N = params.glwe_dim, params.pbs_gadget.depth, params.glwe_degree
    return (k + 1) ** 2 * d * (N // 2) * BYTES_PER_COMPLEX


def ksk_total_bytes(params: TfheParams) -> int:
    return params.n_long * params.ks_gadget.depth * (params.n + 1) * BYTES_PER_WORD


def lwe_bytes(params: TfheParams) -> int:
    return (params.n_long + 1) * BYTES_PER_WORD


def glwe_bytes(params: TfheParams) -> int:
    return (params.glwe_dim + 1) * params.glwe_degree * BYTES_PER_WORD


def acc_bytes_per_ciphertext(params: TfheParams) -> int:
    """Two complex GLWE accumulators per in-flight ciphertext."""
    return 2 * (params.glwe_dim + 1) * (params.glwe_degree // 2) * BYTES_PER_COMPLEX


def acc_buffer_required(params: TfheParams, cts_per_cluster: int) -> int:
    return cts_per_cluster * acc_bytes_per_ciphertext(params)


def mac_ops_per_pbs(params: TfheParams) -> int:
    k, d, N = params.glwe_dim, params.pbs_gadget.depth, params.glwe_degree
    return params.n * (k + 1) ** 2 * d * (N // 2)


# ------------------------------------------------------- per-batch model


@dataclass
class _BatchCost:
    round_compute: int  # lockstep round, cycles (max over clusters)
    round_eff: int  # with bandwidth and swap effects
    round_compute_c: list[int]
    bytes_round: dict[str, int]
    swap_event_cyc: int
    bw_stall: int  # per round, cycles
    swap_stall: int  # per round, cycles


def _batch_cost(cts_c: list[int], unique_tables: int, params: TfheParams, m: MachineConfig) -> _BatchCost:
    # the cluster's round-robin ring feeds both BRUs jointly, so an odd
    # ciphertext count alternates between them instead of idling a slot
    it = bru_iteration_breakdown(params, m)["iteration"]
    rc_c = [math.ceil(Fraction(c) * it / m.brus_per_cluster) for c in cts_c]
    rc = max(rc_c, default=0)
    cts = sum(cts_c)
    n = params.n
    bsk = bsk_iteration_bytes(params)
    ksk = -(-ksk_total_bytes(params) // n)
    io_batch = cts * 2 * lwe_bytes(params) + unique_tables * glwe_bytes(params)
    io = -(-io_batch // n)
    glwe_io = -(-unique_tables * glwe_bytes(params) // n)
    lwe_io = io - glwe_io

    shortfall = max(0, max((acc_buffer_required(params, c) for c in cts_c), default=0) - m.acc_buffer_bytes)
    swap_bytes = 2 * shortfall  # spill + refill per round
    swap_events = -(-swap_bytes // m.swap_chunk_bytes)
    swap_event_cyc = swap_events * m.swap_event_cycles

    base_bytes = bsk + ksk + io
    cap = m.hbm_capacity
    base_eff = max(rc, math.ceil(base_bytes / cap)) if cts else 0
    full_eff = max(rc, math.ceil((base_bytes + swap_bytes) / cap)) if cts else 0
    bw_stall = base_eff - rc if cts else 0
    swap_stall = (full_eff - base_eff) + swap_event_cyc if cts else 0
    round_eff = (full_eff + swap_event_cyc) if cts else 0
    return _BatchCost(
        round_compute=rc,
        round_eff=round_eff,
        round_compute_c=rc_c,
        bytes_round={"bsk": bsk, "ksk": ksk, "glwe": glwe_io, "lwe": lwe_io, "swap": swap_bytes},
        swap_event_cyc=swap_event_cyc,
        bw_stall=bw_stall,
        swap_stall=swap_stall,
    )


def bandwidth_demand(batch, params: TfheParams, m: MachineConfig) -> list[dict]:
    """Per-iteration-round byte trace for one scheduled batch."""
    cts_c = batch.slots_per_cluster(m.clusters)
    cost = _batch_cost(cts_c, len(batch.unique_tables), params, m)
    rows = []
    for r in range(params.n):
        rows.append(
            {
                "round": r,
                "cycles": cost.round_eff,
                "bsk": cost.bytes_round["bsk"],
                "ksk": cost.bytes_round["ksk"],
                "glwe": cost.bytes_round["glwe"],
                "lwe": cost.bytes_round["lwe"],
                "swap": cost.bytes_round["swap"],
            }
        )
    return rows


def _cluster_groups(m: MachineConfig, sync_mode: str) -> list[list[int]]:
    ids = list(range(m.clusters))
    if sync_mode == "grouped" and m.clusters > 1:
        half = (m.clusters + 1) // 2
        return [ids[:half], ids[half:]]
    return [ids]


def _simulate_core(
    schedule: Schedule,
    params: TfheParams,
    m: MachineConfig,
    machine_name: str,
    round_fn,
    pe_active: float | None = None,
) -> PerfReport:
    """Shared batch-walk for both machine models.

    round_fn(cts_c) -> (round_compute_c list, lockstep rounds per batch);
    the byte model is common, with key streams fetched once per group.
    """
    sync_mode = schedule.sync_mode or m.sync_mode
    groups = _cluster_groups(m, sync_mode)
    group_of = {c: gi for gi, grp in enumerate(groups) for c in grp}
    n = params.n

    # ks_avail: when the LPU can begin the NEXT batch's key switching;
    # sample extraction of the running batch preempts it at br_end, so the
    # reservation adds that batch's post work to the cursor.
    ks_avail = [0] * m.clusters
    bru_free = [0] * m.clusters
    units = {}
    for c in range(m.clusters):
        units[f"cluster{c}.lpu"] = UnitStats()
        units[f"cluster{c}.bru"] = UnitStats()
    stalls = {"key_starvation": 0, "buffer_swap": 0, "dependency": 0}
    windows: list[BandwidthWindow] = []
    totals = {"bsk": 0, "ksk": 0, "glwe": 0, "lwe": 0, "swap": 0}
    peak = 0.0
    batch_ends: list[int] = []
    acc_peak = 0
    lwe_peak = 0
    total_slots = 0

    ks = lpu_keyswitch_cycles(params, m)
    ms = lpu_modswitch_cycles(params, m)
    se = lpu_sample_extract_cycles(params, m)
    lin = lpu_linear_cycles(params, m)

    for batch in schedule.batches:
        cts_c = batch.slots_per_cluster(m.clusters)
        total_slots += sum(cts_c)
        # LPU work, element-weighted; ks_elements reflects sharing after
        # ks_dedup (a shared key switch runs once and is broadcast).
        pre_total = batch.ks_elements * ks + batch.ms_elements * ms + batch.lin_elements * lin
        pre_c = [-(-pre_total // m.clusters)] * m.clusters
        post_c = [-(-batch.se_elements * se // m.clusters)] * m.clusters

        dep_start = max((batch_ends[j] for j in batch.dep_batches), default=0)
        ks_start = [max(ks_avail[c], dep_start) for c in range(m.clusters)]
        ks_end = [ks_start[c] + pre_c[c] for c in range(m.clusters)]
        br_ready = [max(bru_free[c], ks_end[c]) for c in range(m.clusters)]

        # blind rotation runs in lockstep within a group; desynchronized
        # groups each stream their own copy of the key sequence
        has_br = sum(cts_c) > 0
        br_start_g: dict[int, int] = {}
        br_dur_g: dict[int, int] = {}
        gcost: dict[int, tuple] = {}
        batch_rate = 0.0
        for gi, grp in enumerate(groups):
            gcts = [cts_c[c] for c in grp]
            cost = _batch_cost(gcts, len(batch.unique_tables), params, m)
            rc_list, dur = round_fn(gcts, cost)
            gcost[gi] = (cost, dict(zip(grp, rc_list)))
            # key/control broadcast over the NoC before rotation starts
            start = max((br_ready[c] for c in grp), default=0)
            br_start_g[gi] = start + (m.noc_latency_cycles if sum(gcts) else 0)
            br_dur_g[gi] = dur if sum(gcts) else 0
            if sum(gcts):
                w = BandwidthWindow(
                    batch=batch.index,
                    start=br_start_g[gi],
                    cycles=n * cost.round_eff,
                    bsk=n * cost.bytes_round["bsk"],
                    ksk=n * cost.bytes_round["ksk"],
                    glwe=n * cost.bytes_round["glwe"],
                    lwe=n * cost.bytes_round["lwe"],
                )
                windows.append(w)
                totals["bsk"] += w.bsk
                totals["ksk"] += w.ksk
                totals["glwe"] += w.glwe
                totals["lwe"] += w.lwe
                totals["swap"] += n * cost.bytes_round["swap"]
                batch_rate += w.total / w.cycles if w.cycles else 0.0
        peak = max(peak, batch_rate)

        br_end = [br_start_g[group_of[c]] + br_dur_g[group_of[c]] for c in range(m.clusters)]
        se_end = [br_end[c] + post_c[c] for c in range(m.clusters)]

        for c in range(m.clusters):
            units[f"cluster{c}.lpu"].busy += pre_c[c] + post_c[c]
            cost, rc_by_cluster = gcost[group_of[c]]
            if br_dur_g[group_of[c]]:
                own = n * rc_by_cluster.get(c, 0)
                units[f"cluster{c}.bru"].busy += own
                lockstep = n * (cost.round_compute - rc_by_cluster.get(c, 0))
                bw = n * cost.bw_stall
                swap = n * cost.swap_stall
                units[f"cluster{c}.bru"].stall += lockstep + bw + swap
                stalls["dependency"] += lockstep + (br_start_g[group_of[c]] - br_ready[c])
                stalls["key_starvation"] += bw
                stalls["buffer_swap"] += swap

        if has_br:
            acc_peak = max(acc_peak, max((acc_buffer_required(params, c) for c in cts_c), default=0))
            lwe_peak = max(lwe_peak, max(cts_c, default=0) * 2 * lwe_bytes(params))

        # the next batch's KS may run during this batch's rotation; SE work
        # reserves its LPU share at br_end
        ks_avail = [ks_end[c] + post_c[c] for c in range(m.clusters)]
        bru_free = br_end
        batch_ends.append(max(max(se_end), max(ks_end)))

    total_cycles = max(batch_ends, default=0)
    for u in units.values():
        u.idle = total_cycles - u.busy - u.stall

    work = {
        "pbs_count": total_slots,
        "mac_ops": total_slots * mac_ops_per_pbs(params),
    }
    buffers = {
        "acc_required_bytes": acc_buffer_required(params, m.round_robin),
        "acc_configured_bytes": m.acc_buffer_bytes,
        "acc_peak_bytes": min(acc_peak, m.acc_buffer_bytes) if acc_peak else 0,
        "lwe_peak_bytes": lwe_peak,
        "glwe_table_peak_bytes": max(
            (len(b.unique_tables) * glwe_bytes(params) for b in schedule.batches), default=0
        ),
    }
    return PerfReport(
        machine=machine_name,
        total_cycles=total_cycles,
        units=units,
        windows=windows,
        peak_bandwidth=peak,
        totals=totals,
        stalls=stalls,
        buffers=buffers,
        work=work,
        clock_ghz=m.clock_ghz,
        pe_active_fraction=pe_active,
    )


def simulate(schedule: Schedule, params: TfheParams, m: MachineConfig) -> PerfReport:
    """Round-robin BRU machine."""

    def round_fn(cts_c, cost):
        return cost.round_compute_c, params.n * cost.round_eff + (
            m.pipeline_fill_cycles if sum(cts_c) else 0
        )

    return _simulate_core(schedule, params, m, "bru", round_fn)


def simulate_xpu(schedule: Schedule, params: TfheParams, x: XpuConfig, m: MachineConfig) -> PerfReport:
    """Systolic-array baseline: each BRU slot holds one 4-row external-product
    array; rows process different ciphertexts in lockstep, streaming every
    decomposed polynomial at fftu_throughput points/cycle, and each BSK
    element is used once per in-flight group (no round-robin reuse)."""
    N, k, d = params.glwe_degree, params.glwe_dim, params.pbs_gadget.depth
    group_iter = Fraction((k + 1) * d * (N // 2), x.fftu_throughput)

    def round_fn(cts_c, cost):
        rc_c = []
        for c in cts_c:
            per_xpu = -(-c // m.brus_per_cluster) if c else 0
            waves = -(-per_xpu // x.rows) if per_xpu else 0
            rc_c.append(math.ceil(waves * group_iter))
        rc = max(rc_c, default=0)
        has = sum(cts_c) > 0
        # same byte streams as the BRU machine over the wave-round cadence
        br = cost.bytes_round
        base = br["bsk"] + br["ksk"] + br["glwe"] + br["lwe"]
        cap = m.hbm_capacity
        base_eff = max(rc, math.ceil(base / cap)) if has else 0
        full_eff = max(rc, math.ceil((base + br["swap"]) / cap)) if has else 0
        cost.round_compute = rc
        cost.round_compute_c = rc_c
        cost.bw_stall = base_eff - rc if has else 0
        cost.swap_stall = (full_eff - base_eff) + cost.swap_event_cyc if has else 0
        cost.round_eff = full_eff + cost.swap_event_cyc if has else 0
        return rc_c, params.n * cost.round_eff + (m.pipeline_fill_cycles if has else 0)

    pe_active = min(k + 1, x.pes_per_row) / x.pes_per_row
    return _simulate_core(schedule, params, m, "xpu", round_fn, pe_active=pe_active)


# ------------------------------------------------------------- sweeps


def sweep(kind: str, points: list[int], workload, params: TfheParams, m: MachineConfig) -> list[dict]:
    """One simulate per point; emits rows ready for CSV.

    `workload` is either a LoweredGraph or a callable (machine) -> LoweredGraph
    so sweeps can size the benchmark to whole batches at every point."""
    rows = []
    for v in points:
        if kind == "clusters":
            mc = m.with_overrides(clusters=v)
        elif kind in ("rr", "round_robin"):
            mc = m.with_overrides(round_robin=v)
        elif kind in ("accbuf", "acc_buffer"):
            mc = m.with_overrides(acc_buffer_bytes=v)
        else:
            raise ValueError(f"unknown sweep kind {kind!r}")
        lg = workload(mc) if callable(workload) else workload
        sched = make_schedule(lg, clusters=mc.clusters, round_robin=mc.round_robin, sync_mode=mc.sync_mode)
        rep = simulate(sched, params, mc)
        cycles = rep.total_cycles
        row = {
            "point": v,
            "total_cycles": cycles,
            "bsk_bytes": rep.totals["bsk"],
            "ksk_bytes": rep.totals["ksk"],
            "glwe_bytes": rep.totals["glwe"],
            "lwe_bytes": rep.totals["lwe"],
            "bsk_rate": rep.totals["bsk"] / cycles,
            "ksk_rate": rep.totals["ksk"] / cycles,
            "glwe_lwe_rate": (rep.totals["glwe"] + rep.totals["lwe"]) / cycles,
            "total_rate": sum(rep.totals[s] for s in ("bsk", "ksk", "glwe", "lwe")) / cycles,
            "peak_bandwidth": rep.peak_bandwidth,
            "throughput_ct_per_mcycle": rep.work["pbs_count"] / cycles * 1e6,
            "acc_buffer_required": acc_buffer_required(params, mc.round_robin),
            "swap_stalls": rep.stalls["buffer_swap"],
            "key_stalls": rep.stalls["key_starvation"],
            "bru_utilization": rep.bru_utilization(),
        }
        rows.append(row)
    return rows


def standard_sweep_workload(kind: str, params: TfheParams, batches: int | None = None):
    """Benchmark used by the design-space sweeps: independent single-LUT
    lanes with per-lane tables, sized to whole batches at every point."""
    from .compiler import lower
    from .programs import lut_lanes_program, to_graph

    depth = batches if batches is not None else (2 if kind in ("accbuf", "acc_buffer") else 16)

    def factory(mc: MachineConfig) -> LoweredGraph:
        lanes = depth * mc.batch_capacity
        doc = lut_lanes_program(lanes, width=params.width, distinct_tables=True)
        return lower(to_graph(doc))

    return factory


def parse_range(spec: str) -> list[int]:
    """a:b:step inclusive range, or a comma list."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) == 2:
            a, b, step = int(parts[0]), int(parts[1]), 1
        elif len(parts) == 3:
            a, b, step = int(parts[0]), int(parts[1]), int(parts[2])
        else:
            raise ValueError(f"bad range {spec!r}")
        if step <= 0:
            raise ValueError("range step must be positive")
        return list(range(a, b + 1, step))
    return [int(s) for s in spec.split(",")]


def report_to_json(rep: PerfReport) -> str:
    return json.dumps(rep.to_dict(), indent=2, sort_keys=True)
