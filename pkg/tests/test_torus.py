"""Torus scalars, negacyclic monomials, gadget decomposition, mod switch."""

import numpy as np
import pytest

from tfhesim.torus import (
    MASK,
    MOD,
    GadgetParams,
    gadget_decompose,
    gadget_recompose,
    mod_switch,
    mod_switch_vec,
    poly_gadget_decompose,
    poly_gadget_recompose,
    poly_monomial_mul,
    torus_add,
    torus_distance,
    torus_scalar_mul,
)


def test_add_identity_and_wraparound():
    assert torus_add(0, 12345) == 12345
    assert torus_add(1 << 63, 1 << 63) == 0
    # 128-bit oracle reduction mod 2^64
    assert torus_add(3, MOD - 1) == (3 + MOD - 1) % MOD == 2


def test_add_bulk_properties():
    rng = np.random.default_rng(7)
    a = rng.integers(0, MOD, 100_000, dtype=np.uint64)
    b = rng.integers(0, MOD, 100_000, dtype=np.uint64)
    c = rng.integers(0, MOD, 100_000, dtype=np.uint64)
    assert np.array_equal(a + b, b + a)
    assert np.array_equal((a + b) + c, a + (b + c))


def test_scalar_mul():
    assert torus_scalar_mul(1, 987654321) == 987654321
    assert torus_scalar_mul(0, 987654321) == 0
    for x in (1, 2, 2**63, 2**64 - 7):
        assert torus_scalar_mul(-1, x) == (MOD - x) % MOD
    # oracle: plain python mod arithmetic
    rng = np.random.default_rng(8)
    for _ in range(200):
        k = int(rng.integers(-(2**20), 2**20))
        x = int(rng.integers(0, MOD, dtype=np.uint64))
        assert torus_scalar_mul(k, x) == (k * x) % MOD


def test_monomial_identity_and_negation():
    rng = np.random.default_rng(9)
    p = rng.integers(0, MOD, 16, dtype=np.uint64)
    assert np.array_equal(poly_monomial_mul(p, 0), p)
    assert np.array_equal(poly_monomial_mul(p, 16), (np.uint64(0) - p))


def test_monomial_shift_by_one():
    rng = np.random.default_rng(10)
    p = rng.integers(0, MOD, 8, dtype=np.uint64)
    out = poly_monomial_mul(p, 1)
    assert int(out[0]) == (MOD - int(p[-1])) % MOD
    assert np.array_equal(out[1:], p[:-1])


def test_monomial_period():
    rng = np.random.default_rng(11)
    n = 32
    p = rng.integers(0, MOD, n, dtype=np.uint64)
    for e in range(2 * n):
        back = poly_monomial_mul(poly_monomial_mul(p, e), 2 * n - e)
        assert np.array_equal(back, p), e


def test_gadget_params_validation():
    with pytest.raises(ValueError):
        GadgetParams(0, 2)
    with pytest.raises(ValueError):
        GadgetParams(8, 0)
    with pytest.raises(ValueError):
        GadgetParams(33, 2)


def test_decompose_zero_and_midpoint():
    g = GadgetParams(8, 2)
    assert gadget_decompose(0, g) == [0, 0]
    digits = gadget_decompose(1 << 63, g)
    assert digits == [-128, 0]
    assert gadget_recompose(digits, g) == 1 << 63


def _round_ties_even(value, shift):
    q, frac = value >> shift, value & ((1 << shift) - 1)
    half = 1 << (shift - 1)
    if frac > half or (frac == half and q & 1):
        q += 1
    return q << shift


@pytest.mark.parametrize("base_log,depth", [(8, 2), (4, 4), (16, 2), (2, 8), (8, 3)])
def test_decompose_recompose_random(base_log, depth):
    g = GadgetParams(base_log, depth)
    rng = np.random.default_rng(12)
    shift = 64 - base_log * depth
    for a in rng.integers(0, MOD, 10_000, dtype=np.uint64):
        a = int(a)
        digits = gadget_decompose(a, g)
        assert all(abs(d) <= g.base // 2 for d in digits)
        rounded = _round_ties_even(a, shift) % MOD if shift else a
        assert gadget_recompose(digits, g) == rounded
        assert torus_distance(gadget_recompose(digits, g), a) <= 1 << max(shift - 1, 0)


def test_poly_decompose_matches_scalar():
    g = GadgetParams(8, 2)
    rng = np.random.default_rng(13)
    p = rng.integers(0, MOD, 64, dtype=np.uint64)
    digits = poly_gadget_decompose(p, g)
    assert digits.shape == (2, 64)
    for j in range(64):
        assert list(digits[:, j]) == gadget_decompose(int(p[j]), g)
    rec = poly_gadget_recompose(digits, g)
    for j in range(64):
        assert int(rec[j]) == gadget_recompose(gadget_decompose(int(p[j]), g), g)


def test_poly_decompose_constant_lift():
    # constant polynomials reproduce the scalar examples coefficientwise
    g = GadgetParams(8, 2)
    p = np.full(16, 1 << 63, dtype=np.uint64)
    digits = poly_gadget_decompose(p, g)
    assert np.all(digits[0] == -128) and np.all(digits[1] == 0)


def test_mod_switch_examples():
    assert mod_switch(0, 2048) == 0
    assert mod_switch(1 << 63, 2048) == 1024
    # exact tie at half-step: ties-to-even keeps 1024
    assert mod_switch((1 << 63) + (1 << 52), 2048) == 1024


def test_mod_switch_oracle():
    # rational-arithmetic oracle with the same tie rule, plain ints
    rng = np.random.default_rng(14)
    two_n = 2048
    for a in rng.integers(0, MOD, 5000, dtype=np.uint64):
        a = int(a)
        num = a * two_n
        q, rem = divmod(num, MOD)
        half = MOD // 2
        if rem > half or (rem == half and q & 1):
            q += 1
        assert mod_switch(a, two_n) == q % two_n


def test_mod_switch_error_bound():
    rng = np.random.default_rng(15)
    two_n = 2048
    a = rng.integers(0, MOD, 20_000, dtype=np.uint64)
    s = mod_switch_vec(a, two_n)
    err = np.abs(a.astype(np.float64) / MOD - s / two_n)
    err = np.minimum(err, 1.0 - err)
    assert err.max() <= 1 / (2 * two_n) + 1e-12


def test_mod_switch_rejects_bad_target():
    with pytest.raises(ValueError):
        mod_switch(1, 1000)
