"""Exact arithmetic on the 64-bit discretized torus and negacyclic polynomials.

Conventions used throughout the package:

* A torus element is a 64-bit unsigned integer t interpreted as the real
  fraction t / 2**64 in [0, 1).  All arithmetic wraps modulo 2**64.
* A torus polynomial of degree N is a numpy array of shape (..., N) with
  dtype uint64.  Multiplication is negacyclic: X**N == -1.
* An integer polynomial (decomposition digits, binary secret keys) is a
  numpy array of shape (..., N) with a signed integer dtype; magnitudes
  stay far below 2**63 so two's-complement conversion to uint64 is exact.

Scalar helpers operate on plain Python ints reduced mod 2**64; the
vectorised variants operate on uint64 arrays with numpy's wrapping
semantics, which this module relies on (never trap on overflow).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MOD = 1 << 64
MASK = MOD - 1


@dataclass(frozen=True)
class GadgetParams:
    """Power-of-two gadget: base B = 2**base_log across `depth` levels."""

    base_log: int
    depth: int

    def __post_init__(self):
        if self.base_log < 1:
            raise ValueError(f"base_log must be >= 1, got {self.base_log}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.depth * self.base_log > 64:
            raise ValueError(
                f"depth*base_log = {self.depth * self.base_log} exceeds the 64-bit torus"
            )

    @property
    def base(self) -> int:
        return 1 << self.base_log


def torus_add(a: int, b: int) -> int:
    return (a + b) & MASK


def torus_scalar_mul(k: int, a: int) -> int:
    """k*a mod 2**64 with two's-complement semantics for negative k."""
    return (k * a) & MASK


def torus_distance(a: int, b: int) -> int:
    """Shortest wrap-around distance between two torus elements."""
    d = (a - b) & MASK
    return min(d, MOD - d)


def poly_neg(p: np.ndarray) -> np.ndarray:
    return np.subtract(np.uint64(0), p)


def poly_monomial_mul(p: np.ndarray, e: int) -> np.ndarray:
    """Multiply a torus polynomial by X**e under X**N == -1.

    e is reduced mod 2N; e == N negates every coefficient.
    """
    n = p.shape[-1]
    e %= 2 * n
    if e >= n:
        p = poly_neg(p)
        e -= n
    if e == 0:
        return p.copy()
    out = np.empty_like(p)
    # X**e shifts coefficients up by e; the top e coefficients wrap with a sign flip
    out[..., :e] = np.subtract(np.uint64(0), p[..., n - e:])
    out[..., e:] = p[..., : n - e]
    return out


def _round_half_even_shift(value: int, shift: int) -> int:
    """round(value / 2**shift) with ties to even, as an integer."""
    if shift == 0:
        return value
    q = value >> shift
    frac = value & ((1 << shift) - 1)
    half = 1 << (shift - 1)
    if frac > half or (frac == half and (q & 1)):
        q += 1
    return q


def _round_half_even_shift_vec(values: np.ndarray, shift: int) -> np.ndarray:
    if shift == 0:
        return values.copy()
    q = values >> np.uint64(shift)
    frac = values & np.uint64((1 << shift) - 1)
    half = np.uint64(1 << (shift - 1))
    round_up = (frac > half) | ((frac == half) & ((q & np.uint64(1)) == np.uint64(1)))
    return q + round_up.astype(np.uint64)


def gadget_decompose(a: int, g: GadgetParams) -> list[int]:
    """Balanced signed base-B digits of the top depth*base_log bits of `a`.

    The value is first rounded to depth*base_log fractional bits (ties to
    even), then expanded into digits g_1..g_d with |g_j| <= B/2 such that
    sum(g_j * 2**(64 - j*base_log)) equals the rounded value mod 2**64.
    Carries propagate from the least significant digit upward; the carry
    out of the top digit has weight 2**64 and drops.
    """
    beta, d = g.base_log, g.depth
    shift = 64 - d * beta
    r = _round_half_even_shift(a & MASK, shift) & ((1 << (d * beta)) - 1)
    base = 1 << beta
    half_base = base >> 1
    digits = [0] * d
    carry = 0
    for j in range(d - 1, -1, -1):
        dig = (r & (base - 1)) + carry
        r >>= beta
        if dig >= half_base:
            dig -= base
            carry = 1
        else:
            carry = 0
        digits[j] = dig
    return digits


def gadget_recompose(digits: list[int], g: GadgetParams) -> int:
    acc = 0
    for j, dig in enumerate(digits):
        acc += dig << (64 - (j + 1) * g.base_log)
    return acc & MASK


def poly_gadget_decompose(p: np.ndarray, g: GadgetParams) -> np.ndarray:
    """Coefficientwise gadget_decompose.

    Input shape (..., N) uint64; output shape (depth, ..., N) int64 with
    digits[j] holding the level-(j+1) digit of every coefficient.
    """
    beta, d = g.base_log, g.depth
    shift = 64 - d * beta
    r = _round_half_even_shift_vec(np.asarray(p, dtype=np.uint64), shift)
    r &= np.uint64((1 << (d * beta)) - 1)
    base_mask = np.uint64((1 << beta) - 1)
    half_base = 1 << (beta - 1)
    digits = np.empty((d, *p.shape), dtype=np.int64)
    carry = np.zeros(p.shape, dtype=np.int64)
    for j in range(d - 1, -1, -1):
        dig = (r & base_mask).astype(np.int64) + carry
        r >>= np.uint64(beta)
        carry = (dig >= half_base).astype(np.int64)
        dig -= carry << beta
        digits[j] = dig
    return digits


def poly_gadget_recompose(digits: np.ndarray, g: GadgetParams) -> np.ndarray:
    acc = np.zeros(digits.shape[1:], dtype=np.uint64)
    for j in range(g.depth):
        scale = np.uint64((1 << (64 - (j + 1) * g.base_log)) & MASK)
        acc += digits[j].astype(np.uint64) * scale
    return acc


def mod_switch(a: int, two_n: int) -> int:
    """Scale a torus element to [0, 2N): round(a * 2N / 2**64), ties to even."""
    t = two_n.bit_length() - 1
    if two_n != 1 << t:
        raise ValueError(f"mod_switch target must be a power of two, got {two_n}")
    return _round_half_even_shift(a & MASK, 64 - t) & (two_n - 1)


def mod_switch_vec(a: np.ndarray, two_n: int) -> np.ndarray:
    t = two_n.bit_length() - 1
    if two_n != 1 << t:
        raise ValueError(f"mod_switch target must be a power of two, got {two_n}")
    r = _round_half_even_shift_vec(np.asarray(a, dtype=np.uint64), 64 - t)
    return (r & np.uint64(two_n - 1)).astype(np.int64)
