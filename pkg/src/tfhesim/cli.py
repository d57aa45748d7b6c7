"""Command-line entry point.

Subcommands: keygen, compile, run-func, run-perf, sweep, dedup-report.
Every subcommand is deterministic under a fixed --seed; all reports are
JSON/CSV written atomically.  TFHESIM_CONFIG_DIR, when set, is searched
for machine config files given as bare names.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass


from . import compiler, executor, perf, programs, scheme, serial
from .fft import FIXED48, REFERENCE, forward_fft
from .params import PARAMETER_SETS, TfheParams, get_params

CONFIG_DIR_ENV = "TFHESIM_CONFIG_DIR"


@dataclass
class RunManifest:
    """Everything one run needs; validated before any work starts."""

    program: str | None
    params_name: str
    seed: int
    ks_dedup: bool
    acc_dedup: bool
    machine_path: str | None
    out_dir: str

    def resolve_params(self) -> TfheParams:
        return get_params(self.params_name)

    def resolve_machine(self) -> perf.MachineConfig:
        if not self.machine_path:
            return perf.MachineConfig()
        path = self.machine_path
        if not os.path.exists(path):
            cfg_dir = os.environ.get(CONFIG_DIR_ENV)
            if cfg_dir and os.path.exists(os.path.join(cfg_dir, path)):
                path = os.path.join(cfg_dir, path)
            else:
                raise FileNotFoundError(f"machine config {self.machine_path!r} not found")
        return perf.MachineConfig.from_file(path)

    def validate(self) -> None:
        if self.program is not None and not os.path.exists(self.program):
            raise FileNotFoundError(f"program file {self.program!r} not found")
        get_params(self.params_name)
        os.makedirs(self.out_dir, exist_ok=True)


def _atomic_write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def _write_json(path: str, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: str, fieldnames: list[str], rows: list[dict]) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(row.get(k)) for k in fieldnames})
    _atomic_write_text(path, buf.getvalue())


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


def _manifest(args) -> RunManifest:
    man = RunManifest(
        program=getattr(args, "program", None),
        params_name=args.params,
        seed=args.seed,
        ks_dedup=not getattr(args, "no_ks_dedup", False),
        acc_dedup=not getattr(args, "no_acc_dedup", False),
        machine_path=getattr(args, "machine", None),
        out_dir=args.out,
    )
    man.validate()
    return man


def cmd_keygen(args) -> int:
    man = _manifest(args)
    p = man.resolve_params()
    keys = scheme.keygen(p, man.seed)
    path = os.path.join(man.out_dir, f"keys-{p.name}.bin")
    serial.write_keyset(path, keys)
    print(f"wrote {path} (n={p.n}, N={p.glwe_degree}, k={p.glwe_dim}, width={p.width})")
    return 0


def _compile(man: RunManifest, args):
    g = compiler.load_program(man.program)
    return g, compiler.compile_program(
        g,
        use_ks_dedup=man.ks_dedup,
        use_acc_dedup=man.acc_dedup,
        clusters=args.clusters,
        round_robin=args.rr,
        sync_mode=args.sync,
    )


def cmd_compile(args) -> int:
    man = _manifest(args)
    g, (lg, stats, sched) = _compile(man, args)
    sched.meta = {"params": man.params_name, "program": os.path.basename(man.program)}
    if args.emit in ("schedule", "both"):
        path = os.path.join(man.out_dir, "schedule.json")
        _write_json(path, sched.to_dict())
        print(f"wrote {path} ({len(sched.batches)} batches)")
    if args.emit in ("stats", "both"):
        path = os.path.join(man.out_dir, "stats.json")
        _write_json(path, {name: s.as_dict() for name, s in stats.items()})
        print(f"wrote {path}")
    return 0


def cmd_run_func(args) -> int:
    man = _manifest(args)
    p = man.resolve_params()
    g, (lg, stats, sched) = _compile(man, args)

    warnings = executor.check_plaintext_bounds(g, p.width)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)

    rng = scheme.make_rng(man.seed + 1)
    if args.inputs:
        with open(args.inputs, "r", encoding="utf-8") as f:
            inputs = {k: [int(v) for v in vals] for k, vals in json.load(f).items()}
    else:
        inputs = programs.random_inputs(rng, g, p.width)

    keys = scheme.keygen(p, man.seed)
    result = executor.run_lowered(lg, keys, inputs, seed=man.seed + 2, mode=args.mode)
    expected = executor.interpret_plain(g, inputs)

    if args.dump_spectra:
        _dump_spectra(args.dump_spectra, lg, p)

    rows = {}
    all_match = True
    for out in expected:
        match = expected[out] == result.outputs[out]
        all_match &= match
        rows[out] = {"expected": expected[out], "actual": result.outputs[out], "match": match}
    doc = {
        "program": os.path.basename(man.program),
        "params": p.name,
        "seed": man.seed,
        "inputs": inputs,
        "outputs": rows,
        "all_match": all_match,
        "counters": {
            "pbs": result.counters.pbs,
            "cmux": result.counters.cmux,
            "key_switches": result.counters.key_switches,
            "external_products": result.counters.external_products,
        },
    }
    path = os.path.join(man.out_dir, "results.json")
    _write_json(path, doc)
    print(f"wrote {path}; match={all_match}")
    return 0 if all_match else 1


def _dump_spectra(path: str, lg: compiler.LoweredGraph, p: TfheParams) -> None:
    from .fft import build_plan

    plan = build_plan(p.glwe_degree)
    rows = []
    for tid, entries in sorted(lg.tables.items()):
        lut = scheme.encode_lut(entries, p)
        spec = forward_fft(lut.encoded.body_poly, plan, REFERENCE)
        for chunk in range(spec.points.shape[0]):
            for idx in range(spec.points.shape[1]):
                v = spec.points[chunk, idx]
                rows.append({"table": tid, "chunk": chunk, "index": idx, "re": float(v.real), "im": float(v.imag)})
    _write_csv(path, ["table", "chunk", "index", "re", "im"], rows)


def cmd_run_perf(args) -> int:
    man = _manifest(args)
    p = man.resolve_params()
    m = man.resolve_machine().with_overrides(sync_mode=args.sync, clusters=args.clusters, round_robin=args.rr)
    g, (lg, stats, sched) = _compile(man, args)
    rep = perf.simulate(sched, p, m)
    _write_json(os.path.join(man.out_dir, "report.json"), rep.to_dict())
    _write_csv(
        os.path.join(man.out_dir, "trace.csv"),
        ["batch", "start", "cycles", "bsk", "ksk", "glwe", "lwe"],
        [w.__dict__ for w in rep.windows],
    )
    headline = f"cycles={rep.total_cycles} wall_clock_ms={rep.wall_clock_ms:.3f} peak_bw={rep.peak_bandwidth:.1f} B/cyc"
    if not args.no_xpu:
        xrep = perf.simulate_xpu(sched, p, perf.XpuConfig(), m)
        _write_json(os.path.join(man.out_dir, "report_xpu.json"), xrep.to_dict())
        headline += f" | systolic_cycles={xrep.total_cycles} speedup={xrep.total_cycles / rep.total_cycles:.2f}x"
    print(headline)
    return 0


def cmd_simulate(args) -> int:
    man = _manifest(args)
    with open(args.schedule, "r", encoding="utf-8") as f:
        sched = compiler.schedule_from_dict(json.load(f))
    pname = sched.meta.get("params", args.params)
    p = get_params(pname)
    m = man.resolve_machine()
    rep = perf.simulate(sched, p, m)
    out_path = os.path.join(man.out_dir, "report.json")
    _write_json(out_path, rep.to_dict())
    print(f"wrote {out_path}: cycles={rep.total_cycles} wall_clock_ms={rep.wall_clock_ms:.3f}")
    if not args.no_xpu:
        xrep = perf.simulate_xpu(sched, p, perf.XpuConfig(), m)
        _write_json(os.path.join(man.out_dir, "report_xpu.json"), xrep.to_dict())
        print(f"systolic cycles={xrep.total_cycles} speedup={xrep.total_cycles / rep.total_cycles:.2f}x")
    return 0


def cmd_sweep(args) -> int:
    man = _manifest(args)
    p = man.resolve_params()
    m = man.resolve_machine()
    points = perf.parse_range(args.range)
    workload = perf.standard_sweep_workload(args.kind, p)
    rows = perf.sweep(args.kind, points, workload, p, m)
    fields = list(rows[0].keys()) if rows else ["point"]
    _write_csv(args.out_file, fields, rows)
    print(f"wrote {args.out_file} ({len(rows)} points)")
    return 0


def cmd_dedup_report(args) -> int:
    man = _manifest(args)
    g, (lg, stats, sched) = _compile(man, args)
    rows = []
    for name, key_before, key_after in (
        ("ks_dedup", "ks_before", "ks_after"),
        ("acc_dedup", "acc_materializations_before", "acc_materializations_after"),
    ):
        s = stats[name].as_dict()
        before, after = s[key_before], s[key_after]
        red = 100.0 * (before - after) / before if before else 0.0
        enabled = (name == "ks_dedup" and man.ks_dedup) or (name == "acc_dedup" and man.acc_dedup)
        if not enabled:
            red = 0.0
            after = before
        rows.append({"pass": name, "before": before, "after": after, "reduction_pct": red})
    out = io.StringIO()
    w = csv.DictWriter(out, fieldnames=["pass", "before", "after", "reduction_pct"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    sys.stdout.write(out.getvalue())
    if args.out and args.out != ".":
        _write_csv(os.path.join(args.out, "dedup.csv"), ["pass", "before", "after", "reduction_pct"], rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tfhesim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, program=True):
        if program:
            sp.add_argument("program", help="program JSON file")
        sp.add_argument("--params", default="desk-w3", choices=sorted(PARAMETER_SETS), help="parameter set name")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--no-ks-dedup", action="store_true")
        sp.add_argument("--no-acc-dedup", action="store_true")
        sp.add_argument("--clusters", type=int, default=4)
        sp.add_argument("--rr", type=int, default=12, help="round-robin ciphertexts per cluster")
        sp.add_argument("--sync", choices=["full", "grouped"], default="full")
        sp.add_argument("--machine", help="machine config file (key = value lines)")

    sp = sub.add_parser("keygen", help="generate and serialize a key set")
    common(sp, program=False)
    sp.set_defaults(fn=cmd_keygen)

    sp = sub.add_parser("compile", help="lower, optimize, and schedule a program")
    common(sp)
    sp.add_argument("--emit", choices=["schedule", "stats", "both"], default="both")
    sp.set_defaults(fn=cmd_compile)

    sp = sub.add_parser("run-func", help="execute functionally and compare with the plaintext oracle")
    common(sp)
    sp.add_argument("--inputs", help="JSON file mapping input node -> list of ints")
    sp.add_argument("--mode", choices=[REFERENCE, FIXED48], default=REFERENCE)
    sp.add_argument("--dump-spectra", help="debug: write LUT spectra to this CSV")
    sp.set_defaults(fn=cmd_run_func)

    sp = sub.add_parser("run-perf", help="compile and simulate on both machine models")
    common(sp)
    sp.add_argument("--no-xpu", action="store_true", help="skip the systolic baseline")
    sp.set_defaults(fn=cmd_run_perf)

    sp = sub.add_parser("simulate", help="simulate a previously compiled schedule")
    common(sp, program=False)
    sp.add_argument("schedule", help="schedule JSON from `compile`")
    sp.add_argument("--no-xpu", action="store_true")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("sweep", help="design-space sweeps (clusters | rr | accbuf)")
    common(sp, program=False)
    sp.add_argument("--kind", choices=["clusters", "rr", "accbuf"], required=True)
    sp.add_argument("--range", required=True, help="a:b[:step] or comma list")
    sp.add_argument("--out-file", default="sweep.csv")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("dedup-report", help="print before/after pass statistics as CSV")
    common(sp)
    sp.set_defaults(fn=cmd_dedup_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FileNotFoundError, ValueError, KeyError, compiler.ProgramError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
