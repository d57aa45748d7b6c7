"""Tensor-level FHE program IR, lowering, dedup passes, and batch scheduling.

Programs are small elementwise dataflow graphs over encrypted integers:
inputs, outputs, additions, constant multiplications, and LUT applications.
The text format is JSON (see ``parse_program``).  Lowering expands every
LUT node into the four-step bootstrap chain KS -> MS -> BR -> SE and every
linear node into a LIN node; the two optimization passes then share
key-switch results across fanout (ks_dedup) and merge accumulators with
identical table contents (acc_dedup).  Compilation is deterministic and
single-threaded; its outputs are immutable inputs for the executors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

PROGRAM_VERSION = 1
SCHEDULE_VERSION = 1

ELEMENTWISE_OPS = ("add", "mul_const", "lut")
VALID_OPS = ("input", "output") + ELEMENTWISE_OPS
PRIMITIVE_KINDS = ("KS", "MS", "BR", "SE", "LIN")


class ProgramError(ValueError):
    """Validation failure, carrying the offending node id when known."""

    def __init__(self, message: str, node: str | None = None):
        self.node = node
        super().__init__(f"{message}" + (f" (node {node!r})" if node else ""))


@dataclass
class Node:
    id: str
    op: str
    shape: tuple[int, ...]
    args: dict

    @property
    def elements(self) -> int:
        return int(math.prod(self.shape))


@dataclass
class ProgramGraph:
    nodes: dict[str, Node]  # insertion order preserved
    operands: dict[str, list[str]]
    tables: dict[str, list[int]]
    order: list[str]  # topological

    @property
    def inputs(self) -> list[str]:
        return [i for i in self.order if self.nodes[i].op == "input"]

    @property
    def outputs(self) -> list[str]:
        return [i for i in self.order if self.nodes[i].op == "output"]


def parse_program(text: str) -> ProgramGraph:
    """Parse and validate the JSON program format.

    {"version": 1,
     "nodes": [{"id": ..., "op": ..., "shape": [...], "args": {...}}, ...],
     "edges": [[from, to], ...],
     "tables": {table_id: [entries]}}
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ProgramError(f"syntax error: {e}") from None
    if not isinstance(doc, dict) or "nodes" not in doc:
        raise ProgramError("program must be a JSON object with a 'nodes' list")
    if doc.get("version", PROGRAM_VERSION) != PROGRAM_VERSION:
        raise ProgramError(f"unsupported program version {doc.get('version')}")

    nodes: dict[str, Node] = {}
    for spec in doc["nodes"]:
        nid = spec.get("id")
        if not isinstance(nid, str) or not nid:
            raise ProgramError("every node needs a non-empty string id")
        if nid in nodes:
            raise ProgramError("duplicate node id", node=nid)
        op = spec.get("op")
        if op not in VALID_OPS:
            raise ProgramError(f"unknown op {op!r}", node=nid)
        shape = tuple(spec.get("shape", [1]))
        if not shape or any((not isinstance(s, int)) or s < 1 for s in shape):
            raise ProgramError("shape must be a list of positive ints", node=nid)
        nodes[nid] = Node(nid, op, shape, dict(spec.get("args", {})))

    operands: dict[str, list[str]] = {nid: [] for nid in nodes}
    for edge in doc.get("edges", []):
        if not (isinstance(edge, list) and len(edge) == 2):
            raise ProgramError(f"malformed edge {edge!r}")
        src, dst = edge
        if src not in nodes:
            raise ProgramError("edge source does not exist", node=src)
        if dst not in nodes:
            raise ProgramError("edge target does not exist", node=dst)
        operands[dst].append(src)

    tables = {}
    for tid, entries in doc.get("tables", {}).items():
        if not isinstance(entries, list) or not all(isinstance(v, int) for v in entries):
            raise ProgramError(f"table {tid!r} must be a list of ints")
        tables[tid] = list(entries)

    arity = {"input": 0, "output": 1, "add": 2, "mul_const": 1, "lut": 1}
    for nid, node in nodes.items():
        ops = operands[nid]
        if len(ops) != arity[node.op]:
            raise ProgramError(
                f"op {node.op!r} takes {arity[node.op]} operand(s), found {len(ops)}", node=nid
            )
        for src in ops:
            if nodes[src].op == "output":
                raise ProgramError("outputs cannot feed other nodes", node=nid)
            if nodes[src].shape != node.shape:
                raise ProgramError(
                    f"shape mismatch: {nodes[src].shape} feeds {node.shape}", node=nid
                )
        if node.op == "mul_const" and not isinstance(node.args.get("c"), int):
            raise ProgramError("mul_const needs integer arg 'c'", node=nid)
        if node.op == "lut":
            tid = node.args.get("table")
            if tid not in tables:
                raise ProgramError(f"lut references unknown table {tid!r}", node=nid)

    # Kahn topological sort; leftovers mean a cycle
    indeg = {nid: len(operands[nid]) for nid in nodes}
    ready = [nid for nid, dg in indeg.items() if dg == 0]
    consumers: dict[str, list[str]] = {nid: [] for nid in nodes}
    for dst, srcs in operands.items():
        for src in srcs:
            consumers[src].append(dst)
    order = []
    while ready:
        nid = ready.pop(0)
        order.append(nid)
        for dst in consumers[nid]:
            indeg[dst] -= 1
            if indeg[dst] == 0:
                ready.append(dst)
    if len(order) != len(nodes):
        stuck = sorted(set(nodes) - set(order))
        raise ProgramError("cycle detected", node=stuck[0])

    return ProgramGraph(nodes=nodes, operands=operands, tables=tables, order=order)


def load_program(path: str) -> ProgramGraph:
    with open(path, "r", encoding="utf-8") as f:
        return parse_program(f.read())


@dataclass
class LoweredNode:
    id: str
    kind: str  # IN | OUT | LIN | KS | MS | BR | SE
    operands: list[str]
    source: str  # provenance: originating program node
    elements: int
    table_id: str | None = None
    acc_ref: str | None = None  # registry entry after acc_dedup
    ksk_id: str = "ksk0"
    lin_op: str | None = None  # add | mul_const
    args: dict = field(default_factory=dict)


@dataclass
class DedupStats:
    ks_before: int = 0
    ks_after: int = 0
    acc_materializations_before: int = 0
    acc_materializations_after: int = 0

    def as_dict(self) -> dict:
        return {
            "ks_before": self.ks_before,
            "ks_after": self.ks_after,
            "acc_materializations_before": self.acc_materializations_before,
            "acc_materializations_after": self.acc_materializations_after,
        }


@dataclass
class LoweredGraph:
    nodes: dict[str, LoweredNode]
    tables: dict[str, list[int]]
    outputs: dict[str, str]  # program output id -> lowered producer id
    acc_registry: dict[str, str] = field(default_factory=dict)  # table_id -> registry id
    passes_applied: list[str] = field(default_factory=list)

    def order(self) -> list[str]:
        return list(self.nodes)

    def count(self, kind: str) -> int:
        return sum(1 for n in self.nodes.values() if n.kind == kind)

    def primitive_count(self) -> int:
        return sum(1 for n in self.nodes.values() if n.kind in PRIMITIVE_KINDS)

    def consumers(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for nid, node in self.nodes.items():
            for src in node.operands:
                out[src].append(nid)
        return out


def lower(g: ProgramGraph) -> LoweredGraph:
    """Expand LUT nodes into KS -> MS -> BR -> SE; linear nodes become LIN."""
    nodes: dict[str, LoweredNode] = {}
    produced: dict[str, str] = {}  # program node -> lowered node carrying its value
    outputs: dict[str, str] = {}
    for nid in g.order:
        node = g.nodes[nid]
        elems = node.elements
        srcs = [produced[s] for s in g.operands[nid]]
        if node.op == "input":
            nodes[nid] = LoweredNode(nid, "IN", [], nid, elems)
            produced[nid] = nid
        elif node.op == "output":
            nodes[nid] = LoweredNode(nid, "OUT", srcs, nid, elems)
            outputs[nid] = srcs[0]
        elif node.op in ("add", "mul_const"):
            nodes[nid] = LoweredNode(
                nid, "LIN", srcs, nid, elems, lin_op=node.op, args=dict(node.args)
            )
            produced[nid] = nid
        elif node.op == "lut":
            tid = node.args["table"]
            ks = f"{nid}.ks"
            ms = f"{nid}.ms"
            br = f"{nid}.br"
            se = f"{nid}.se"
            nodes[ks] = LoweredNode(ks, "KS", srcs, nid, elems)
            nodes[ms] = LoweredNode(ms, "MS", [ks], nid, elems)
            nodes[br] = LoweredNode(br, "BR", [ms], nid, elems, table_id=tid)
            nodes[se] = LoweredNode(se, "SE", [br], nid, elems)
            produced[nid] = se
    return LoweredGraph(nodes=nodes, tables=dict(g.tables), outputs=outputs)


def ks_dedup(lg: LoweredGraph) -> tuple[LoweredGraph, DedupStats]:
    """Share one KS node among all blind rotations fed by the same source
    ciphertext under the same KSK; semantics are unchanged because key
    switching is a deterministic function of its input."""
    stats = DedupStats()
    ks_nodes = [n for n in lg.nodes.values() if n.kind == "KS"]
    stats.ks_before = sum(n.elements for n in ks_nodes)
    canonical: dict[tuple[str, str], str] = {}
    replace: dict[str, str] = {}
    for n in ks_nodes:
        key = (n.operands[0], n.ksk_id)
        if key in canonical:
            replace[n.id] = canonical[key]
        else:
            canonical[key] = n.id
    for nid in replace:
        del lg.nodes[nid]
    for n in lg.nodes.values():
        n.operands = [replace.get(s, s) for s in n.operands]
    stats.ks_after = sum(n.elements for n in lg.nodes.values() if n.kind == "KS")
    lg.passes_applied.append("ks_dedup")
    return lg, stats


def acc_dedup(lg: LoweredGraph) -> tuple[LoweredGraph, DedupStats]:
    """Merge accumulators: BR nodes whose tables hold identical entry lists
    share one registry entry (content equality, not id equality)."""
    stats = DedupStats()
    br_nodes = [n for n in lg.nodes.values() if n.kind == "BR"]
    stats.acc_materializations_before = sum(n.elements for n in br_nodes)
    registry: dict[tuple[int, ...], str] = {}
    table_to_entry: dict[str, str] = {}
    for n in br_nodes:
        content = tuple(lg.tables[n.table_id])
        if content not in registry:
            registry[content] = f"acc{len(registry)}"
        table_to_entry[n.table_id] = registry[content]
        n.acc_ref = registry[content]
    lg.acc_registry = table_to_entry
    stats.acc_materializations_after = len(registry)
    lg.passes_applied.append("acc_dedup")
    return lg, stats


def dedup_stats_without_passes(lg: LoweredGraph) -> DedupStats:
    """Baseline accounting when a pass is disabled: before == after."""
    ks = sum(n.elements for n in lg.nodes.values() if n.kind == "KS")
    acc = sum(n.elements for n in lg.nodes.values() if n.kind == "BR")
    return DedupStats(ks_before=ks, ks_after=ks, acc_materializations_before=acc, acc_materializations_after=acc)


@dataclass
class BatchSlot:
    node: str  # BR node id
    element: int
    cluster: int


@dataclass
class Batch:
    index: int
    level: int
    slots: list[BatchSlot]
    bru_ops: list[str]
    lpu_ops: list[str]
    overlappable: bool
    unique_tables: list[str]
    # element-weighted LPU op counts; ks reflects sharing after ks_dedup
    ks_elements: int = 0
    ms_elements: int = 0
    se_elements: int = 0
    lin_elements: int = 0
    dep_batches: list[int] = field(default_factory=list)

    def slots_per_cluster(self, clusters: int) -> list[int]:
        counts = [0] * clusters
        for s in self.slots:
            counts[s.cluster] += 1
        return counts


@dataclass
class Schedule:
    batches: list[Batch]
    sync_mode: str
    clusters: int
    round_robin: int
    meta: dict = field(default_factory=dict)

    @property
    def capacity(self) -> int:
        return self.clusters * self.round_robin

    def to_dict(self) -> dict:
        return {
            "version": SCHEDULE_VERSION,
            "sync_mode": self.sync_mode,
            "clusters": self.clusters,
            "round_robin": self.round_robin,
            "meta": self.meta,
            "batches": [
                {
                    "index": b.index,
                    "level": b.level,
                    "overlappable": b.overlappable,
                    "slots": [[s.node, s.element, s.cluster] for s in b.slots],
                    "bru_ops": b.bru_ops,
                    "lpu_ops": b.lpu_ops,
                    "unique_tables": b.unique_tables,
                    "ks_elements": b.ks_elements,
                    "ms_elements": b.ms_elements,
                    "se_elements": b.se_elements,
                    "lin_elements": b.lin_elements,
                    "dep_batches": b.dep_batches,
                }
            for b in self.batches],
        }


def schedule_from_dict(doc: dict) -> Schedule:
    if doc.get("version") != SCHEDULE_VERSION:
        raise ProgramError(f"unsupported schedule version {doc.get('version')}")
    batches = [
        Batch(
            index=b["index"],
            level=b["level"],
            slots=[BatchSlot(*s) for s in b["slots"]],
            bru_ops=list(b["bru_ops"]),
            lpu_ops=list(b["lpu_ops"]),
            overlappable=bool(b["overlappable"]),
            unique_tables=list(b["unique_tables"]),
            ks_elements=int(b.get("ks_elements", 0)),
            ms_elements=int(b.get("ms_elements", 0)),
            se_elements=int(b.get("se_elements", 0)),
            lin_elements=int(b.get("lin_elements", 0)),
            dep_batches=list(b.get("dep_batches", [])),
        )
        for b in doc["batches"]
    ]
    return Schedule(batches, doc["sync_mode"], doc["clusters"], doc["round_robin"], doc.get("meta", {}))


def _br_levels(lg: LoweredGraph) -> dict[str, int]:
    """Depth of each node counted in BR generations (1-based for BR nodes)."""
    level: dict[str, int] = {}
    for nid in lg.nodes:  # insertion order is topological by construction
        node = lg.nodes[nid]
        base = max((level[s] for s in node.operands), default=0)
        level[nid] = base + 1 if node.kind == "BR" else base
    return level


def make_schedule(lg: LoweredGraph, clusters: int = 4, round_robin: int = 12, sync_mode: str = "full") -> Schedule:
    """Greedy topological batching: fill up to round_robin*clusters ciphertext
    slots per batch, level by level; independent consecutive batches are
    marked overlappable so the simulator may overlap LPU and BRU phases."""
    if sync_mode not in ("full", "grouped"):
        raise ProgramError(f"unknown sync mode {sync_mode!r}")
    capacity = clusters * round_robin
    level = _br_levels(lg)
    node_pos = {nid: i for i, nid in enumerate(lg.nodes)}
    br_ids = [nid for nid in lg.nodes if lg.nodes[nid].kind == "BR"]
    se_of_br = {n.operands[0]: nid for nid, n in lg.nodes.items() if n.kind == "SE"}

    # LIN nodes run on the LPU one level after the BR generation they consume
    lin_sched: dict[int, list[str]] = {}
    for nid, node in lg.nodes.items():
        if node.kind == "LIN":
            lin_sched.setdefault(level[nid] + 1, []).append(nid)

    max_level = max(
        [level[b] for b in br_ids] + [lvl for lvl in lin_sched], default=0
    )

    batches: list[Batch] = []
    for lvl in range(1, max_level + 1):
        pending = [
            (br, e)
            for br in br_ids
            if level[br] == lvl
            for e in range(lg.nodes[br].elements)
        ]
        lins = lin_sched.get(lvl, [])
        if not pending and not lins:
            continue
        chunks = [pending[p: p + capacity] for p in range(0, len(pending), capacity)] or [[]]
        for ci, chunk in enumerate(chunks):
            # rotate the starting cluster per batch so ragged tails spread
            # across clusters instead of always loading cluster 0
            off = len(batches)
            slots = [BatchSlot(br, e, (i + off) % clusters) for i, (br, e) in enumerate(chunk)]
            bru_ops = sorted({br for br, _ in chunk}, key=node_pos.get)
            batch_lins = list(lins) if ci == 0 else []
            lpu = list(batch_lins)
            ks_pairs = set()
            for br, e in chunk:
                ms = lg.nodes[br].operands[0]
                ks_pairs.add((lg.nodes[ms].operands[0], e))
            for br in bru_ops:
                ms = lg.nodes[br].operands[0]
                for op in (lg.nodes[ms].operands[0], ms, se_of_br[br]):
                    if op not in lpu:
                        lpu.append(op)
            tables = []
            for br in bru_ops:
                t = lg.nodes[br].table_id
                key = lg.acc_registry.get(t, t)
                if key not in tables:
                    tables.append(key)
            batches.append(
                Batch(
                    len(batches), lvl, slots, bru_ops, lpu, False, tables,
                    ks_elements=len(ks_pairs),
                    ms_elements=len(chunk),
                    se_elements=len(chunk),
                    lin_elements=sum(lg.nodes[l].elements for l in batch_lins),
                )
            )

    if not batches:
        all_lins = [nid for nid, n in lg.nodes.items() if n.kind == "LIN"]
        batches = [
            Batch(
                0, 0, [], [], all_lins, False, [],
                lin_elements=sum(lg.nodes[l].elements for l in all_lins),
            )
        ]

    _mark_overlappable(lg, batches)
    return Schedule(batches, sync_mode, clusters, round_robin)


def _mark_overlappable(lg: LoweredGraph, batches: list[Batch]) -> None:
    """Record which earlier batches produced each batch's inputs.  A batch is
    overlappable when it does not consume anything from the immediately
    preceding batch, letting its key switching run during that batch's
    blind rotation."""
    produced: dict[tuple[str, int], int] = {}
    for b in batches:
        for s in b.slots:
            produced[(s.node, s.element)] = b.index
    br_batches: dict[str, set[int]] = {}
    for (br, _e), idx in produced.items():
        br_batches.setdefault(br, set()).add(idx)
    for b in batches:
        deps: set[int] = set()
        for s in b.slots:
            ms = lg.nodes[s.node].operands[0]
            ks = lg.nodes[ms].operands[0]
            for anc in _ancestor_brs(lg, ks):
                idx = produced.get((anc, s.element))
                if idx is not None:
                    deps.add(idx)
        for op in b.lpu_ops:
            if lg.nodes[op].kind == "LIN":
                for anc in _ancestor_brs(lg, op):
                    deps.update(br_batches.get(anc, ()))
        b.dep_batches = sorted(d for d in deps if d < b.index)
        b.overlappable = b.index > 0 and (b.index - 1) not in b.dep_batches


def _ancestor_brs(lg: LoweredGraph, start: str) -> set[str]:
    """BR nodes reachable upward from `start` without crossing another BR."""
    seen: set[str] = set()
    out: set[str] = set()
    stack = [start]
    while stack:
        nid = stack.pop()
        if nid in seen:
            continue
        seen.add(nid)
        node = lg.nodes[nid]
        if node.kind == "BR":
            out.add(nid)
            continue
        stack.extend(node.operands)
    return out


def compile_program(
    g: ProgramGraph,
    use_ks_dedup: bool = True,
    use_acc_dedup: bool = True,
    clusters: int = 4,
    round_robin: int = 12,
    sync_mode: str = "full",
) -> tuple[LoweredGraph, dict, Schedule]:
    """Front door: lower, run enabled passes, and schedule.

    Returns (lowered graph, stats per pass, schedule).
    """
    lg = lower(g)
    stats: dict[str, DedupStats] = {}
    if use_ks_dedup:
        lg, stats["ks_dedup"] = ks_dedup(lg)
    else:
        base = dedup_stats_without_passes(lg)
        stats["ks_dedup"] = DedupStats(base.ks_before, base.ks_after, 0, 0)
    if use_acc_dedup:
        lg, stats["acc_dedup"] = acc_dedup(lg)
    else:
        base = dedup_stats_without_passes(lg)
        stats["acc_dedup"] = DedupStats(0, 0, base.acc_materializations_before, base.acc_materializations_after)
    sched = make_schedule(lg, clusters=clusters, round_robin=round_robin, sync_mode=sync_mode)
    return lg, stats, sched
