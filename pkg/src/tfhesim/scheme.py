"""Multi-bit TFHE: keys, encryption, linear ops, and the four-step PBS.

Programmable bootstrapping runs in key-switching-first order:
key_switch -> mod_switch -> blind_rotate -> sample_extract.  Every
evaluation operation is a pure function of immutable keys, so independent
ciphertexts can be processed concurrently; randomness enters only at key
generation and encryption, through a counter-based (Philox) generator so
runs are reproducible from a seed.  This is a research artifact, not a
hardened cryptographic library.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fft
from .fft import FIXED48, REFERENCE, FftPlan, build_plan
from .params import TfheParams
from .torus import (
    MASK,
    GadgetParams,
    mod_switch_vec,
    poly_gadget_decompose,
    poly_monomial_mul,
    poly_neg,
)

SCHOOLBOOK = "schoolbook"

_KEYGEN_FFT_SLICE = 512  # polynomials per batched transform, caps keygen memory


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based deterministic generator; one seed fixes the whole run."""
    return np.random.Generator(np.random.Philox(key=seed))


@dataclass
class LweCiphertext:
    mask: np.ndarray  # uint64, length n or k*N
    body: int
    dim_tag: str  # "short" | "long"

    def copy(self) -> "LweCiphertext":
        return LweCiphertext(self.mask.copy(), self.body, self.dim_tag)


@dataclass
class GlweCiphertext:
    mask_polys: np.ndarray  # (k, N) uint64
    body_poly: np.ndarray  # (N,) uint64

    def copy(self) -> "GlweCiphertext":
        return GlweCiphertext(self.mask_polys.copy(), self.body_poly.copy())


@dataclass
class _SpectrumView:
    points: np.ndarray  # (rows, k+1, chunks, N/2) complex
    scale_exponent: int
    chunk_bits: int


@dataclass
class GgswCiphertext:
    """(k+1)*d GLWE rows; row c*d+j encrypts m * 2^(64-(j+1)*base_log) on component c."""

    data: np.ndarray  # ((k+1)*d, k+1, N) uint64
    gadget: GadgetParams
    stored_spectrum: dict = field(default_factory=dict, repr=False)

    def spectrum(self, plan: FftPlan, mode: str) -> _SpectrumView:
        cached = self.stored_spectrum.get(mode)
        if cached is None:
            f = fft.forward_fft(self.data, plan, mode)
            # (chunks, rows, k+1, M) -> contiguous (rows, k+1, chunks, M)
            pts = np.ascontiguousarray(np.moveaxis(f.points, 0, 2))
            cached = _SpectrumView(pts, f.scale_exponent, f.chunk_bits)
            self.stored_spectrum[mode] = cached
        return cached


@dataclass
class BootstrappingKey:
    ggsw_list: list[GgswCiphertext]

    def __len__(self) -> int:
        return len(self.ggsw_list)


@dataclass
class KeySwitchingKey:
    """table[i][j]: short-LWE encryption of long_key[i] * 2^(64-(j+1)*beta_ks)."""

    mask: np.ndarray  # (n_long, d_ks, n) uint64
    body: np.ndarray  # (n_long, d_ks) uint64


@dataclass
class SecretKeys:
    short_key: np.ndarray  # (n,) int64 in {0,1}
    glwe_key: np.ndarray  # (k, N) int64 in {0,1}

    @property
    def long_key(self) -> np.ndarray:
        return self.glwe_key.reshape(-1)


@dataclass
class KeySet:
    params: TfheParams
    secret: SecretKeys
    bsk: BootstrappingKey
    ksk: KeySwitchingKey
    plan: FftPlan


@dataclass
class LookupTable:
    entries: np.ndarray  # (p,) plaintext values
    encoded: GlweCiphertext  # trivial (zero-mask) encoding


@dataclass
class OpCounters:
    cmux: int = 0
    external_products: int = 0
    key_switches: int = 0
    pbs: int = 0


def _sample_noise(rng: np.random.Generator, sigma: float, shape) -> np.ndarray:
    if sigma == 0.0:
        return np.zeros(shape, dtype=np.uint64)
    raw = np.rint(rng.normal(0.0, sigma * 2.0**64, shape))
    return raw.astype(np.int64).astype(np.uint64)


def _uniform_torus(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 1 << 64, shape, dtype=np.uint64, endpoint=False)


def _wrap_dot(mask: np.ndarray, key_bits: np.ndarray) -> np.ndarray:
    """sum(mask * key) mod 2^64 along the last axis; exact for binary keys."""
    return (mask * key_bits.astype(np.uint64)).sum(axis=-1, dtype=np.uint64)


def _bin_key_mul(polys: np.ndarray, key_poly: np.ndarray, plan: FftPlan) -> np.ndarray:
    """Exact negacyclic product of many torus polynomials with one binary key
    polynomial, batched through the chunked reference transform."""
    out = np.empty_like(polys)
    fkey = fft.forward_fft(key_poly, plan, REFERENCE)
    for lo in range(0, polys.shape[0], _KEYGEN_FFT_SLICE):
        sl = polys[lo: lo + _KEYGEN_FFT_SLICE]
        fm = fft.forward_fft(sl, plan, REFERENCE)
        prod = fft.FourierPolynomial(fm.points * fkey.points, REFERENCE, 0, fm.chunk_bits)
        out[lo: lo + _KEYGEN_FFT_SLICE] = fft.inverse_fft(prod, plan, REFERENCE)
    return out


def encode(m: int, params: TfheParams) -> int:
    return (m * params.delta) & MASK


def decode(t: int, params: TfheParams) -> int:
    shift = 64 - params.width - params.padding_bits
    centered = (t + (params.delta >> 1)) & MASK
    return (centered >> shift) % params.message_space


def keygen(params: TfheParams, seed: int) -> KeySet:
    """Deterministic key generation: binary secrets, BSK encrypting the short
    key bits under the GLWE key, KSK re-encrypting the flattened GLWE key
    under the short key."""
    rng = make_rng(seed)
    n, N, k = params.n, params.glwe_degree, params.glwe_dim
    d, beta = params.pbs_gadget.depth, params.pbs_gadget.base_log
    d_ks, beta_ks = params.ks_gadget.depth, params.ks_gadget.base_log
    plan = build_plan(N)

    short_key = rng.integers(0, 2, n).astype(np.int64)
    glwe_key = rng.integers(0, 2, (k, N)).astype(np.int64)
    long_key = glwe_key.reshape(-1)

    ksk_mask = _uniform_torus(rng, (params.n_long, d_ks, n))
    ksk_noise = _sample_noise(rng, params.noise_std_short, (params.n_long, d_ks))
    levels = np.array([(1 << (64 - (j + 1) * beta_ks)) & MASK for j in range(d_ks)], dtype=np.uint64)
    ksk_msg = long_key.astype(np.uint64)[:, None] * levels[None, :]
    ksk_body = _wrap_dot(ksk_mask, short_key) + ksk_msg + ksk_noise

    rows = (k + 1) * d
    bsk_mask = _uniform_torus(rng, (n, rows, k, N))
    bsk_noise = _sample_noise(rng, params.noise_std_long, (n, rows, N))
    body = np.zeros((n * rows, N), dtype=np.uint64)
    flat_mask = bsk_mask.reshape(n * rows, k, N)
    for c in range(k):
        body += _bin_key_mul(flat_mask[:, c, :], glwe_key[c], plan)
    body = body.reshape(n, rows, N) + bsk_noise

    gadget_levels = [(1 << (64 - (j + 1) * beta)) & MASK for j in range(d)]
    ggsw_list = []
    for i in range(n):
        data = np.zeros((rows, k + 1, N), dtype=np.uint64)
        data[:, :k, :] = bsk_mask[i]
        data[:, k, :] = body[i]
        if short_key[i]:
            for c in range(k + 1):
                for j in range(d):
                    data[c * d + j, c, 0:1] += np.uint64(gadget_levels[j])
        ggsw_list.append(GgswCiphertext(data, params.pbs_gadget))

    secret = SecretKeys(short_key=short_key, glwe_key=glwe_key)
    return KeySet(params, secret, BootstrappingKey(ggsw_list), KeySwitchingKey(ksk_mask, ksk_body), plan)


def encrypt(m: int, keys: KeySet, rng: np.random.Generator, dim_tag: str = "long") -> LweCiphertext:
    params = keys.params
    if not 0 <= m < params.message_space:
        raise ValueError(f"message {m} out of range for width {params.width}")
    key_bits = keys.secret.long_key if dim_tag == "long" else keys.secret.short_key
    sigma = params.noise_std_long if dim_tag == "long" else params.noise_std_short
    mask = _uniform_torus(rng, len(key_bits))
    noise = int(_sample_noise(rng, sigma, ()))
    body = (int(_wrap_dot(mask, key_bits)) + encode(m, params) + noise) & MASK
    return LweCiphertext(mask, body, dim_tag)


def decrypt_raw(ct: LweCiphertext, keys: KeySet) -> int:
    key_bits = keys.secret.long_key if ct.dim_tag == "long" else keys.secret.short_key
    if len(ct.mask) != len(key_bits):
        raise ValueError("ciphertext dimension does not match key")
    return (ct.body - int(_wrap_dot(ct.mask, key_bits))) & MASK


def decrypt(ct: LweCiphertext, keys: KeySet) -> int:
    return decode(decrypt_raw(ct, keys), keys.params)


def noise_of(ct: LweCiphertext, keys: KeySet, m: int) -> int:
    """Signed phase error relative to the exact encoding of m."""
    err = (decrypt_raw(ct, keys) - encode(m, keys.params)) & MASK
    return err - (1 << 64) if err >= 1 << 63 else err


def lwe_add(a: LweCiphertext, b: LweCiphertext) -> LweCiphertext:
    if a.dim_tag != b.dim_tag or len(a.mask) != len(b.mask):
        raise ValueError("lwe_add dimension mismatch")
    return LweCiphertext(a.mask + b.mask, (a.body + b.body) & MASK, a.dim_tag)


def lwe_mul_const(a: LweCiphertext, c: int) -> LweCiphertext:
    cu = np.uint64(c & MASK)
    return LweCiphertext(a.mask * cu, (a.body * c) & MASK, a.dim_tag)


def trivial_lwe(m: int, params: TfheParams, dim_tag: str = "long") -> LweCiphertext:
    dim = params.n_long if dim_tag == "long" else params.n
    return LweCiphertext(np.zeros(dim, dtype=np.uint64), encode(m, params), dim_tag)


def key_switch(ct: LweCiphertext, keys: KeySet, counters: OpCounters | None = None) -> LweCiphertext:
    """Long -> short dimension switch by accumulating gadget digits against the KSK."""
    params = keys.params
    if ct.dim_tag != "long":
        raise ValueError("key_switch expects a long ciphertext")
    digits = poly_gadget_decompose(ct.mask, params.ks_gadget)  # (d_ks, n_long)
    dig_u = np.ascontiguousarray(digits.T).astype(np.uint64)  # (n_long, d_ks)
    mask = (dig_u[:, :, None] * keys.ksk.mask).sum(axis=(0, 1), dtype=np.uint64)
    body = int((dig_u * keys.ksk.body).sum(dtype=np.uint64))
    out = LweCiphertext(poly_neg(mask), (ct.body - body) & MASK, "short")
    if counters is not None:
        counters.key_switches += 1
    return out


def mod_switch_lwe(ct: LweCiphertext, N: int) -> np.ndarray:
    """Scale mask then body to integers in [0, 2N); the last entry is the body."""
    vals = np.concatenate([ct.mask, np.array([ct.body], dtype=np.uint64)])
    return mod_switch_vec(vals, 2 * N)


def glwe_add(a: GlweCiphertext, b: GlweCiphertext) -> GlweCiphertext:
    return GlweCiphertext(a.mask_polys + b.mask_polys, a.body_poly + b.body_poly)


def glwe_sub(a: GlweCiphertext, b: GlweCiphertext) -> GlweCiphertext:
    return GlweCiphertext(a.mask_polys - b.mask_polys, a.body_poly - b.body_poly)


def glwe_rotate(c: GlweCiphertext, e: int) -> GlweCiphertext:
    return GlweCiphertext(poly_monomial_mul(c.mask_polys, e), poly_monomial_mul(c.body_poly, e))


def decrypt_glwe(c: GlweCiphertext, keys: KeySet) -> np.ndarray:
    acc = c.body_poly.copy()
    for r in range(keys.params.glwe_dim):
        acc -= fft.negacyclic_mul(keys.secret.glwe_key[r], c.mask_polys[r], keys.plan, REFERENCE)
    return acc


def external_product(
    g: GgswCiphertext,
    c: GlweCiphertext,
    plan: FftPlan,
    mode: str = REFERENCE,
    counters: OpCounters | None = None,
) -> GlweCiphertext:
    """GGSW (x) GLWE: decompose, transform, MAC against the key spectrum, invert.

    The schoolbook mode runs the identical decomposition with exact integer
    convolutions; reference and fixed48 match it bit for bit inside the
    transform exactness envelope (checked by the acceptance suite).
    """
    k = c.mask_polys.shape[0]
    d = g.gadget.depth
    n_poly = c.body_poly.shape[-1]
    if g.data.shape != ((k + 1) * d, k + 1, n_poly):
        raise ValueError("GGSW shape does not match the GLWE operand")

    stacked = np.concatenate([c.mask_polys, c.body_poly[None, :]], axis=0)  # (k+1, N)
    digits = poly_gadget_decompose(stacked, g.gadget)  # (d, k+1, N)
    dig_rows = np.swapaxes(digits, 0, 1).reshape((k + 1) * d, n_poly)  # row c*d+j

    if counters is not None:
        counters.external_products += 1

    if mode == SCHOOLBOOK:
        out = np.zeros((k + 1, n_poly), dtype=np.uint64)
        for r in range((k + 1) * d):
            out += fft.negacyclic_mul_schoolbook(dig_rows[r], g.data[r])
        return GlweCiphertext(out[:k], out[k])

    fdig = fft.forward_fft(dig_rows, plan, mode)  # points (1, rows, M)
    gspec = g.spectrum(plan, mode)
    # accumulate over rows: (rows, M) x (rows, k+1, chunks, M) -> (k+1, chunks, M)
    acc = (fdig.points[0][:, None, None, :] * gspec.points).sum(axis=0)
    if mode == FIXED48:
        rows = dig_rows.shape[0]
        guard = max(1, rows - 1).bit_length()
        exp = fdig.scale_exponent + gspec.scale_exponent + 46 + guard
        acc = fft.quantize_block(acc, exp, "mac")
    else:
        exp = 0
    spec = fft.FourierPolynomial(np.moveaxis(acc, 1, 0), mode, exp, gspec.chunk_bits)
    out = fft.inverse_fft(spec, plan, mode)  # (k+1, N)
    return GlweCiphertext(out[:k], out[k])


def cmux(
    g: GgswCiphertext,
    c0: GlweCiphertext,
    c1: GlweCiphertext,
    plan: FftPlan,
    mode: str = REFERENCE,
    counters: OpCounters | None = None,
) -> GlweCiphertext:
    """c0 + g (x) (c1 - c0): selects c_b for a GGSW-encrypted bit b."""
    diff = glwe_sub(c1, c0)
    prod = external_product(g, diff, plan, mode, counters)
    if counters is not None:
        counters.cmux += 1
    return glwe_add(c0, prod)


def encode_lut(entries, params: TfheParams) -> LookupTable:
    """Redundant LUT encoding: each entry repeated N/p times, pre-rotated by
    half a window so rounding noise decodes to the intended entry."""
    entries = np.asarray(entries, dtype=np.int64)
    p = params.message_space
    if entries.shape != (p,):
        raise ValueError(f"expected {p} table entries, got {entries.shape}")
    if np.any(entries < 0) or np.any(entries >= p):
        raise ValueError("table entries must be width-bit integers")
    N, k = params.glwe_degree, params.glwe_dim
    box = params.lut_box
    body = np.repeat(entries.astype(np.uint64) * np.uint64(params.delta), box)
    body = poly_monomial_mul(body, 2 * N - box // 2)
    encoded = GlweCiphertext(np.zeros((k, N), dtype=np.uint64), body)
    return LookupTable(entries=entries, encoded=encoded)


def blind_rotate(
    lut: LookupTable,
    msct: np.ndarray,
    bsk: BootstrappingKey,
    plan: FftPlan,
    mode: str = REFERENCE,
    counters: OpCounters | None = None,
) -> GlweCiphertext:
    """Exactly n CMux iterations rotating the LUT accumulator by the phase.

    A zero rotation still runs its CMux (the digit rows it feeds are all
    zero, so the result is unchanged bit for bit), keeping the iteration
    count equal to n as the execution trace promises.
    """
    n = len(bsk)
    if len(msct) != n + 1:
        raise ValueError("mod-switched ciphertext length must be n+1")
    acc = glwe_rotate(lut.encoded, -int(msct[-1]))
    for i in range(n):
        rotated = glwe_rotate(acc, int(msct[i]))
        acc = cmux(bsk.ggsw_list[i], acc, rotated, plan, mode, counters)
    return acc


def sample_extract(c: GlweCiphertext) -> LweCiphertext:
    """LWE of dimension k*N whose phase equals the constant coefficient.

    mask[r*N + j] multiplies key bit S_r[j]: A_r[0] for j == 0 and
    -A_r[N - j] for j >= 1, the negacyclic sign pattern."""
    k, N = c.mask_polys.shape
    mask = np.empty((k, N), dtype=np.uint64)
    mask[:, 0] = c.mask_polys[:, 0]
    mask[:, 1:] = np.subtract(np.uint64(0), c.mask_polys[:, :0:-1])
    return LweCiphertext(mask.reshape(-1), int(c.body_poly[0]), "long")


def pbs(
    ct: LweCiphertext,
    lut: LookupTable,
    keys: KeySet,
    mode: str = REFERENCE,
    counters: OpCounters | None = None,
) -> LweCiphertext:
    """Programmable bootstrap, key-switching-first order (KS -> MS -> BR -> SE)."""
    short = key_switch(ct, keys, counters)
    msct = mod_switch_lwe(short, keys.params.glwe_degree)
    rotated = blind_rotate(lut, msct, keys.bsk, keys.plan, mode, counters)
    out = sample_extract(rotated)
    if counters is not None:
        counters.pbs += 1
    return out
