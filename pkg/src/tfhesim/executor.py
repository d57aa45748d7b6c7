"""Functional execution of lowered programs plus the plaintext oracle.

The encrypted executor walks the lowered graph node by node; the plaintext
interpreter evaluates the same program on clear integers mod p.  Both are
deterministic given a seed, so compiled-with-pass and compiled-without-pass
variants of one program must produce bit-identical ciphertexts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import scheme
from .compiler import LoweredGraph, ProgramGraph
from .fft import REFERENCE
from .scheme import KeySet, LweCiphertext, OpCounters


@dataclass
class ExecResult:
    outputs: dict[str, list[int]]  # program output node -> decrypted values
    output_cts: dict[str, list[LweCiphertext]]
    counters: OpCounters = field(default_factory=OpCounters)


def interpret_plain(g: ProgramGraph, inputs: dict[str, list[int]]) -> dict[str, list[int]]:
    """Plaintext oracle: evaluate the tensor program on integers mod p.

    LUT entries are applied to the value reduced mod p, matching what the
    encrypted pipeline computes when plaintext bounds respect the padding
    bit (see check_plaintext_bounds).
    """
    values: dict[str, np.ndarray] = {}
    out: dict[str, list[int]] = {}
    for nid in g.order:
        node = g.nodes[nid]
        srcs = g.operands[nid]
        if node.op == "input":
            vals = np.asarray(inputs[nid], dtype=np.int64)
            if vals.size != node.elements:
                raise ValueError(f"input {nid!r} expects {node.elements} values, got {vals.size}")
            values[nid] = vals
        elif node.op == "add":
            values[nid] = values[srcs[0]] + values[srcs[1]]
        elif node.op == "mul_const":
            values[nid] = values[srcs[0]] * node.args["c"]
        elif node.op == "lut":
            table = np.asarray(g.tables[node.args["table"]], dtype=np.int64)
            p = len(table)
            values[nid] = table[values[srcs[0]] % p]
        elif node.op == "output":
            out[nid] = [int(v) for v in values[srcs[0]]]
    return out


def check_plaintext_bounds(g: ProgramGraph, width: int) -> list[str]:
    """Interval analysis: warn when a LUT may see a value at or above p,
    which would flip the padding bit and corrupt the rotation."""
    p = 1 << width
    bound: dict[str, int] = {}
    warnings: list[str] = []
    for nid in g.order:
        node = g.nodes[nid]
        srcs = g.operands[nid]
        if node.op == "input":
            bound[nid] = p - 1
        elif node.op == "add":
            bound[nid] = bound[srcs[0]] + bound[srcs[1]]
        elif node.op == "mul_const":
            c = node.args["c"]
            bound[nid] = bound[srcs[0]] * abs(c)
            if c < 0:
                warnings.append(f"node {nid!r}: negative constant wraps mod p")
        elif node.op == "lut":
            if bound[srcs[0]] >= p:
                warnings.append(
                    f"node {nid!r}: operand bound {bound[srcs[0]]} >= p = {p}; "
                    "decode may fail (padding bit at risk)"
                )
            bound[nid] = max(g.tables[node.args["table"]])
        elif node.op == "output":
            bound[nid] = bound[srcs[0]]
    return warnings


def run_lowered(
    lg: LoweredGraph,
    keys: KeySet,
    inputs: dict[str, list[int]],
    seed: int,
    mode: str = REFERENCE,
) -> ExecResult:
    """Encrypt inputs, execute the lowered graph, decrypt outputs.

    The encryption RNG is seeded independently of compilation choices and
    consumed in input-name order, so two compilations of the same program
    see identical fresh ciphertexts.
    """
    rng = scheme.make_rng(seed)
    counters = OpCounters()
    params = keys.params
    store: dict[str, list] = {}

    for nid in lg.nodes:
        node = lg.nodes[nid]
        if node.kind != "IN":
            continue
        vals = inputs[nid]
        if len(vals) != node.elements:
            raise ValueError(f"input {nid!r} expects {node.elements} values, got {len(vals)}")
        store[nid] = [scheme.encrypt(int(v) % params.message_space, keys, rng) for v in vals]

    luts: dict[str, scheme.LookupTable] = {}

    def lut_for(table_id: str) -> scheme.LookupTable:
        key = lg.acc_registry.get(table_id, table_id)
        if key not in luts:
            entries = lg.tables[table_id]
            luts[key] = scheme.encode_lut(entries, params)
        return luts[key]

    outputs: dict[str, list[int]] = {}
    output_cts: dict[str, list[LweCiphertext]] = {}
    for nid in lg.nodes:
        node = lg.nodes[nid]
        if node.kind in ("IN",):
            continue
        if node.kind == "LIN":
            if node.lin_op == "add":
                a, b = store[node.operands[0]], store[node.operands[1]]
                store[nid] = [scheme.lwe_add(x, y) for x, y in zip(a, b)]
            else:
                c = node.args["c"]
                store[nid] = [scheme.lwe_mul_const(x, c) for x in store[node.operands[0]]]
        elif node.kind == "KS":
            store[nid] = [scheme.key_switch(x, keys, counters) for x in store[node.operands[0]]]
        elif node.kind == "MS":
            store[nid] = [scheme.mod_switch_lwe(x, params.glwe_degree) for x in store[node.operands[0]]]
        elif node.kind == "BR":
            lut = lut_for(node.table_id)
            store[nid] = [
                scheme.blind_rotate(lut, m, keys.bsk, keys.plan, mode, counters)
                for m in store[node.operands[0]]
            ]
        elif node.kind == "SE":
            store[nid] = [scheme.sample_extract(x) for x in store[node.operands[0]]]
            counters.pbs += len(store[nid])
        elif node.kind == "OUT":
            cts = store[node.operands[0]]
            output_cts[nid] = cts
            outputs[nid] = [scheme.decrypt(x, keys) for x in cts]
    return ExecResult(outputs=outputs, output_cts=output_cts, counters=counters)
