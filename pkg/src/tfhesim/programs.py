"""Synthetic program builders: microbenchmarks and random test programs.

Real model imports are out of scope; these builders produce graphs with the
same shapes the compiler and simulator care about (fanout, tensor maps,
LUT chains, mixed layers).
"""

from __future__ import annotations

import json

import numpy as np

from .compiler import ProgramGraph, parse_program


def _program(nodes, edges, tables) -> dict:
    return {"version": 1, "nodes": nodes, "edges": edges, "tables": tables}


def to_graph(doc: dict) -> ProgramGraph:
    return parse_program(json.dumps(doc))


def identity_table(width: int) -> list[int]:
    return list(range(1 << width))


def relu_table(width: int) -> list[int]:
    """x >= p/2 treated as the negative half: clamp it to zero."""
    p = 1 << width
    return [x if x < p // 2 else 0 for x in range(p)]


def fig2b_program(width: int = 3, w1: int = 2, w2: int = 3) -> dict:
    """Two scaled inputs summed, then a ReLU-style LUT: the canonical
    multiply-accumulate-then-activate block."""
    tables = {"relu": relu_table(width)}
    nodes = [
        {"id": "x", "op": "input", "shape": [1]},
        {"id": "y", "op": "input", "shape": [1]},
        {"id": "mx", "op": "mul_const", "args": {"c": w1}, "shape": [1]},
        {"id": "my", "op": "mul_const", "args": {"c": w2}, "shape": [1]},
        {"id": "s", "op": "add", "shape": [1]},
        {"id": "act", "op": "lut", "args": {"table": "relu"}, "shape": [1]},
        {"id": "out", "op": "output", "shape": [1]},
    ]
    edges = [["x", "mx"], ["y", "my"], ["mx", "s"], ["my", "s"], ["s", "act"], ["act", "out"]]
    return _program(nodes, edges, tables)


def fanout_program(m: int, width: int = 3) -> dict:
    """One ciphertext feeding m different LUTs: the KS-dedup microbench."""
    p = 1 << width
    tables = {f"t{i}": [(x + i) % p for x in range(p)] for i in range(m)}
    nodes = [{"id": "x", "op": "input", "shape": [1]}]
    edges = []
    for i in range(m):
        nodes.append({"id": f"l{i}", "op": "lut", "args": {"table": f"t{i}"}, "shape": [1]})
        nodes.append({"id": f"o{i}", "op": "output", "shape": [1]})
        edges += [["x", f"l{i}"], [f"l{i}", f"o{i}"]]
    return _program(nodes, edges, tables)


def tensor_map_program(elements: int, width: int = 3, distinct_tables: bool = False) -> dict:
    """Apply a LUT across a tensor: the ACC-dedup microbench."""
    if distinct_tables:
        p = 1 << width
        tables = {f"t{i}": [(x + i) % p for x in range(p)] for i in range(elements)}
        nodes = [{"id": "x", "op": "input", "shape": [1]}]
        edges = []
        for i in range(elements):
            nodes.append({"id": f"l{i}", "op": "lut", "args": {"table": f"t{i}"}, "shape": [1]})
            nodes.append({"id": f"o{i}", "op": "output", "shape": [1]})
            edges += [["x", f"l{i}"], [f"l{i}", f"o{i}"]]
        return _program(nodes, edges, tables)
    tables = {"t": identity_table(width)}
    nodes = [
        {"id": "x", "op": "input", "shape": [elements]},
        {"id": "l", "op": "lut", "args": {"table": "t"}, "shape": [elements]},
        {"id": "o", "op": "output", "shape": [elements]},
    ]
    return _program(nodes, edges=[["x", "l"], ["l", "o"]], tables=tables)


def lut_chain_program(depth: int, width: int = 3) -> dict:
    """Strictly dependent LUT chain: zero scheduling overlap possible."""
    tables = {"t": identity_table(width)}
    nodes = [{"id": "x", "op": "input", "shape": [1]}]
    edges = []
    prev = "x"
    for i in range(depth):
        nodes.append({"id": f"l{i}", "op": "lut", "args": {"table": "t"}, "shape": [1]})
        edges.append([prev, f"l{i}"])
        prev = f"l{i}"
    nodes.append({"id": "o", "op": "output", "shape": [1]})
    edges.append([prev, "o"])
    return _program(nodes, edges, tables)


def lut_lanes_program(count: int, width: int = 3, distinct_tables: bool = True) -> dict:
    """`count` scalar lanes, each its own input -> LUT -> output; with
    distinct_tables every lane also carries a distinct accumulator."""
    p = 1 << width
    tables = {}
    nodes = []
    edges = []
    for i in range(count):
        tid = f"t{i}" if distinct_tables else "t"
        tables[tid] = [(x + (i if distinct_tables else 0)) % p for x in range(p)]
        nodes += [
            {"id": f"x{i}", "op": "input", "shape": [1]},
            {"id": f"l{i}", "op": "lut", "args": {"table": tid}, "shape": [1]},
            {"id": f"o{i}", "op": "output", "shape": [1]},
        ]
        edges += [[f"x{i}", f"l{i}"], [f"l{i}", f"o{i}"]]
    return _program(nodes, edges, tables)


def mixed_layers_program(lanes: int, layers: int, width: int = 3, fanout_every: int = 0) -> dict:
    """Layered LUT workload over a tensor with optional extra fanout LUTs;
    consecutive layers depend on each other, lanes inside a layer do not."""
    p = 1 << width
    tables = {}
    nodes = [{"id": "x", "op": "input", "shape": [lanes]}]
    edges = []
    prev = "x"
    for layer in range(layers):
        tid = f"t{layer}"
        tables[tid] = [(x * 2 + layer) % p for x in range(p)]
        lid = f"l{layer}"
        nodes.append({"id": lid, "op": "lut", "args": {"table": tid}, "shape": [lanes]})
        edges.append([prev, lid])
        if fanout_every and layer % fanout_every == 0:
            tid2 = f"f{layer}"
            tables[tid2] = [(x + 1) % p for x in range(p)]
            nodes.append({"id": f"side{layer}", "op": "lut", "args": {"table": tid2}, "shape": [lanes]})
            nodes.append({"id": f"sideout{layer}", "op": "output", "shape": [lanes]})
            edges += [[prev, f"side{layer}"], [f"side{layer}", f"sideout{layer}"]]
        prev = lid
    nodes.append({"id": "o", "op": "output", "shape": [lanes]})
    edges.append([prev, "o"])
    return _program(nodes, edges, tables)


def random_program(rng: np.random.Generator, max_nodes: int = 30, width: int = 3) -> dict:
    """Random DAG over add/mul_const/lut keeping every LUT operand bound
    below p so the padding bit stays safe and the plaintext oracle agrees."""
    p = 1 << width
    cap = max(1, p // 4)
    tables = {"id": [x % cap for x in identity_table(width)]}
    nodes = [{"id": "in0", "op": "input", "shape": [1]}]
    edges = []
    bound = {"in0": cap - 1}
    avail = ["in0"]
    n_outputs = 0
    count = 1
    tcount = 1
    while count < max_nodes - 1:
        nid = f"n{count}"
        kind = rng.choice(["add", "mul_const", "lut", "lut"])
        if kind == "add":
            a, b = (str(rng.choice(avail)) for _ in range(2))
            if bound[a] + bound[b] >= p:
                kind = "lut"
            else:
                nodes.append({"id": nid, "op": "add", "shape": [1]})
                edges += [[a, nid], [b, nid]]
                bound[nid] = bound[a] + bound[b]
        if kind == "mul_const":
            a = str(rng.choice(avail))
            c = int(rng.integers(1, 4))
            if bound[a] * c >= p:
                kind = "lut"
            else:
                nodes.append({"id": nid, "op": "mul_const", "args": {"c": c}, "shape": [1]})
                edges.append([a, nid])
                bound[nid] = bound[a] * c
        if kind == "lut":
            a = str(rng.choice(avail))
            if rng.random() < 0.5:
                tid = "id"
            else:
                tid = f"t{tcount}"
                tables[tid] = [int(v) for v in rng.integers(0, cap, p)]
                tcount += 1
            nodes.append({"id": nid, "op": "lut", "args": {"table": tid}, "shape": [1]})
            edges.append([a, nid])
            bound[nid] = max(tables[tid])
        avail.append(nid)
        count += 1
    sinks = [n["id"] for n in nodes if n["op"] != "output" and n["id"] not in {e[0] for e in edges}]
    for s in sinks or [avail[-1]]:
        oid = f"out{n_outputs}"
        nodes.append({"id": oid, "op": "output", "shape": [1]})
        edges.append([s, oid])
        n_outputs += 1
    return _program(nodes, edges, tables)


def random_inputs(rng: np.random.Generator, g: ProgramGraph, width: int) -> dict[str, list[int]]:
    cap = max(1, (1 << width) // 4)
    return {
        nid: [int(v) for v in rng.integers(0, cap, g.nodes[nid].elements)]
        for nid in g.inputs
    }
