"""Binary serialization for keys and ciphertexts.

Layout (all integers little-endian):

    header:  magic b"TFHS" | version u32 | params_hash u64
    body:    type tag u32, then type-specific fields; every array is a
             u64 count followed by that many raw little-endian u64 words.

params_hash is the stable hash of the parameter set the object was built
with; loading cross-checks it so keys cannot silently pair with the wrong
parameters.  Files are written atomically (temp file + rename).
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .params import TfheParams
from .scheme import (
    BootstrappingKey,
    GgswCiphertext,
    KeySet,
    KeySwitchingKey,
    LweCiphertext,
    SecretKeys,
)
from .fft import build_plan

MAGIC = b"TFHS"
VERSION = 1

_TAG_KEYSET = 1
_TAG_LWE = 2


class FormatError(ValueError):
    pass


def _pack_array(arr: np.ndarray) -> bytes:
    flat = np.ascontiguousarray(arr, dtype=np.uint64).reshape(-1)
    return struct.pack("<Q", flat.size) + flat.astype("<u8").tobytes()


def _unpack_array(buf: memoryview, offset: int) -> tuple[np.ndarray, int]:
    (count,) = struct.unpack_from("<Q", buf, offset)
    offset += 8
    arr = np.frombuffer(buf, dtype="<u8", count=count, offset=offset).astype(np.uint64)
    return arr, offset + 8 * count


def _header(params: TfheParams) -> bytes:
    return MAGIC + struct.pack("<IQ", VERSION, params.stable_hash())


def _check_header(buf: memoryview, params: TfheParams) -> int:
    if bytes(buf[:4]) != MAGIC:
        raise FormatError("bad magic; not a tfhesim binary file")
    version, phash = struct.unpack_from("<IQ", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    if phash != params.stable_hash():
        raise FormatError("params hash mismatch: file was written under different parameters")
    return 16


def _atomic_write(path: str, blob: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tfhesim-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_keyset(path: str, keys: KeySet) -> None:
    p = keys.params
    parts = [_header(p), struct.pack("<I", _TAG_KEYSET)]
    parts.append(_pack_array(keys.secret.short_key))
    parts.append(_pack_array(keys.secret.glwe_key))
    parts.append(_pack_array(keys.ksk.mask))
    parts.append(_pack_array(keys.ksk.body))
    bsk = np.stack([g.data for g in keys.bsk.ggsw_list])
    parts.append(_pack_array(bsk))
    _atomic_write(path, b"".join(parts))


def read_keyset(path: str, params: TfheParams) -> KeySet:
    with open(path, "rb") as f:
        buf = memoryview(f.read())
    off = _check_header(buf, params)
    (tag,) = struct.unpack_from("<I", buf, off)
    off += 4
    if tag != _TAG_KEYSET:
        raise FormatError(f"expected a key-set file, found tag {tag}")
    n, N, k = params.n, params.glwe_degree, params.glwe_dim
    d = params.pbs_gadget.depth
    short, off = _unpack_array(buf, off)
    glwe, off = _unpack_array(buf, off)
    ksk_mask, off = _unpack_array(buf, off)
    ksk_body, off = _unpack_array(buf, off)
    bsk, off = _unpack_array(buf, off)
    secret = SecretKeys(short.astype(np.int64), glwe.astype(np.int64).reshape(k, N))
    ksk = KeySwitchingKey(
        ksk_mask.reshape(params.n_long, params.ks_gadget.depth, n),
        ksk_body.reshape(params.n_long, params.ks_gadget.depth),
    )
    rows = (k + 1) * d
    bsk = bsk.reshape(n, rows, k + 1, N)
    ggsw_list = [GgswCiphertext(bsk[i], params.pbs_gadget) for i in range(n)]
    return KeySet(params, secret, BootstrappingKey(ggsw_list), ksk, build_plan(N))


def write_ciphertext(path: str, ct: LweCiphertext, params: TfheParams) -> None:
    tag_byte = 0 if ct.dim_tag == "short" else 1
    parts = [
        _header(params),
        struct.pack("<II", _TAG_LWE, tag_byte),
        _pack_array(ct.mask),
        struct.pack("<Q", ct.body),
    ]
    _atomic_write(path, b"".join(parts))


def read_ciphertext(path: str, params: TfheParams) -> LweCiphertext:
    with open(path, "rb") as f:
        buf = memoryview(f.read())
    off = _check_header(buf, params)
    tag, dim_byte = struct.unpack_from("<II", buf, off)
    off += 8
    if tag != _TAG_LWE:
        raise FormatError(f"expected a ciphertext file, found tag {tag}")
    mask, off = _unpack_array(buf, off)
    (body,) = struct.unpack_from("<Q", buf, off)
    return LweCiphertext(mask, int(body), "short" if dim_byte == 0 else "long")
