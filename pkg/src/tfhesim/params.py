"""Parameter sets: named full-size rows and desk-scale variants.

Full-size rows carry the published (n, N, k, width) shapes of the evaluated
workloads; gadget bases/depths and noise levels are engineering choices made
here (the sources give only the dimensions).  Desk-scale rows shrink n and N
so the functional pipeline runs in milliseconds while keeping the decoding
failure probability far below 2**-20; they are the workhorses of the test
suite.  Presets are data: adding a row needs no code changes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .torus import GadgetParams


@dataclass(frozen=True)
class TfheParams:
    """Scheme parameters for one multi-bit TFHE instance."""

    name: str
    n: int
    glwe_degree: int  # N
    glwe_dim: int  # k
    width: int
    pbs_gadget: GadgetParams
    ks_gadget: GadgetParams
    noise_std_short: float
    noise_std_long: float
    padding_bits: int = 1

    def __post_init__(self):
        N = self.glwe_degree
        if N & (N - 1) or not (2**3 <= N <= 2**16):
            raise ValueError(f"glwe_degree must be a power of two in [2^3, 2^16], got {N}")
        if not (1 <= self.width <= 10):
            raise ValueError(f"width must be in [1, 10], got {self.width}")
        if self.padding_bits != 1:
            raise ValueError("padding_bits is fixed at 1")
        if 2 * N < 2 * self.message_space:
            raise ValueError(f"2N = {2*N} cannot hold the message space p = {self.message_space}")
        if self.n < 1 or self.glwe_dim < 1:
            raise ValueError("dimensions must be positive")

    @property
    def n_long(self) -> int:
        return self.glwe_dim * self.glwe_degree

    @property
    def message_space(self) -> int:
        return 1 << self.width

    @property
    def delta(self) -> int:
        """Encoding step: messages occupy the top width+padding bits."""
        return 1 << (64 - self.width - self.padding_bits)

    @property
    def lut_box(self) -> int:
        return self.glwe_degree // self.message_space

    def stable_hash(self) -> int:
        blob = json.dumps(
            {
                "n": self.n,
                "N": self.glwe_degree,
                "k": self.glwe_dim,
                "width": self.width,
                "pbs": [self.pbs_gadget.base_log, self.pbs_gadget.depth],
                "ks": [self.ks_gadget.base_log, self.ks_gadget.depth],
                "std_short": self.noise_std_short,
                "std_long": self.noise_std_long,
                "padding": self.padding_bits,
            },
            sort_keys=True,
        ).encode()
        return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def _full_row(name: str, n: int, N: int, k: int, width: int) -> TfheParams:
    # Noise levels here are functional-correctness budgets, not a security
    # calibration (security search is out of scope); single-level gadgets
    # with wide bases keep full-size runs tractable.
    return TfheParams(
        name=name,
        n=n,
        glwe_degree=N,
        glwe_dim=k,
        width=width,
        pbs_gadget=GadgetParams(base_log=23, depth=1),
        ks_gadget=GadgetParams(base_log=18, depth=1),
        noise_std_short=2.0**-36,
        noise_std_long=2.0**-51,
    )


def _desk_row(name: str, width: int, n: int = 185) -> TfheParams:
    # N and the pbs depth scale with width so the accumulator-rounding noise
    # stays well below the decoding half-window of 1/(4p)
    N = 1024 if width <= 4 else 2048
    depth = 2 if width <= 4 else 3
    return TfheParams(
        name=name,
        n=n,
        glwe_degree=N,
        glwe_dim=1,
        width=width,
        pbs_gadget=GadgetParams(base_log=8, depth=depth),
        ks_gadget=GadgetParams(base_log=8, depth=2),
        noise_std_short=2.0**-24,
        noise_std_long=2.0**-29,
    )


_FULL_ROWS = [
    ("cnn20", 737, 2048, 1, 6),
    ("cnn50", 828, 4096, 1, 6),
    ("decision-tree", 1070, 65536, 1, 9),
    ("gpt2", 1003, 32768, 1, 6),
    ("gpt2-12head", 1009, 32768, 1, 6),
    ("knn", 1058, 65536, 1, 9),
    ("xgboost", 1025, 32768, 1, 8),
]

PARAMETER_SETS: dict[str, TfheParams] = {}
for _name, _n, _N, _k, _w in _FULL_ROWS:
    PARAMETER_SETS[_name] = _full_row(_name, _n, _N, _k, _w)
    # desk twin: same workload name, shrunk dimensions, width capped at 6
    PARAMETER_SETS[f"desk-{_name}"] = _desk_row(f"desk-{_name}", min(_w, 6))
for _w in range(1, 7):
    PARAMETER_SETS[f"desk-w{_w}"] = _desk_row(f"desk-w{_w}", _w)

FULL_SET_NAMES = tuple(name for name, *_ in _FULL_ROWS)
DESK_SET_NAMES = tuple(name for name in PARAMETER_SETS if name.startswith("desk-"))


def get_params(name: str) -> TfheParams:
    try:
        return PARAMETER_SETS[name]
    except KeyError:
        known = ", ".join(sorted(PARAMETER_SETS))
        raise KeyError(f"unknown parameter set {name!r}; known sets: {known}") from None
