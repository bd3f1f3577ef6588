"""Binary formats for BFV objects.

Layout of every "HHEB" blob::

    b"HHEB" | version u16 | kind u8 | params hash (32 bytes) | header | u64 LE limbs

Evaluation keys use their own magic ("HHEK") and bundle the relinearisation
key with every Galois key.  Blobs written by another format version or for
another parameter set are rejected.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import SerializationError
from .encoder import BatchedPlaintext
from .evaluator import Ciphertext
from .keys import EvaluationKey, GaloisKeys, KeySwitchKey, PublicKey, SecretKey
from .params import FORMAT_VERSION, PROFILES, HeParams, get_profile

MAGIC = b"HHEB"
EVK_MAGIC = b"HHEK"
KIND_CIPHERTEXT = 1
KIND_PLAINTEXT = 2
KIND_PUBLIC_KEY = 3
KIND_SECRET_KEY = 4
KIND_KSK = 5

_PREFIX = struct.Struct("<4sHB32s")
_EVK_PREFIX = struct.Struct("<4sH32s")


def _u64(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<u8").tobytes()


def _read(buf: memoryview, offset: int, count: int) -> tuple[np.ndarray, int]:
    end = offset + 8 * count
    if end > len(buf):
        raise SerializationError("truncated blob")
    arr = np.frombuffer(buf[offset:end], dtype="<u8").astype(np.int64)
    return arr, end


def resolve_params(params_hash: bytes, params: HeParams | None) -> HeParams:
    if params is not None:
        if params.params_hash != params_hash:
            raise SerializationError("blob was written for a different parameter set")
        return params
    for name in PROFILES:
        cand = get_profile(name)
        if cand.params_hash == params_hash:
            return cand
    raise SerializationError("unknown parameter set")


def _header(params: HeParams, kind: int) -> bytes:
    return _PREFIX.pack(MAGIC, FORMAT_VERSION, kind, params.params_hash)


def _open(blob: bytes, kind: int, params: HeParams | None) -> tuple[HeParams, memoryview, int]:
    if len(blob) < _PREFIX.size:
        raise SerializationError("blob too short")
    magic, version, got_kind, phash = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise SerializationError("bad magic")
    if version != FORMAT_VERSION:
        raise SerializationError(f"unsupported format version {version}")
    if got_kind != kind:
        raise SerializationError(f"expected object kind {kind}, found {got_kind}")
    return resolve_params(phash, params), memoryview(blob), _PREFIX.size


def _done(buf: memoryview, offset: int) -> None:
    if offset != len(buf):
        raise SerializationError("trailing bytes after object")


# -- ciphertexts and plaintexts ---------------------------------------------

def serialize_ciphertext(ct: Ciphertext) -> bytes:
    return _header(ct.params, KIND_CIPHERTEXT) + struct.pack("<BB", ct.size, ct.level) + _u64(ct.data)


def deserialize_ciphertext(blob: bytes, params: HeParams | None = None) -> Ciphertext:
    params, buf, off = _open(blob, KIND_CIPHERTEXT, params)
    if off + 2 > len(buf):
        raise SerializationError("truncated blob")
    size, level = struct.unpack_from("<BB", buf, off)
    off += 2
    if size not in (2, 3) or level > params.max_level:
        raise SerializationError("bad ciphertext header")
    n = params.degree
    arr, off = _read(buf, off, size * (level + 1) * n)
    _done(buf, off)
    data = arr.reshape(size, level + 1, n)
    if np.any(data >= params.tables.qs[: level + 1][None, :, None]):
        raise SerializationError("residue out of range")
    return Ciphertext(params, data, level)


def ciphertext_size(params: HeParams, level: int | None = None, size: int = 2) -> int:
    level = params.max_level if level is None else level
    return _PREFIX.size + 2 + 8 * size * (level + 1) * params.degree


def serialize_plaintext(pt: BatchedPlaintext) -> bytes:
    return _header(pt.params, KIND_PLAINTEXT) + struct.pack("<I", pt.stride) + _u64(pt.coeffs)


def deserialize_plaintext(blob: bytes, params: HeParams | None = None) -> BatchedPlaintext:
    params, buf, off = _open(blob, KIND_PLAINTEXT, params)
    (stride,) = struct.unpack_from("<I", buf, off)
    arr, off = _read(buf, off + 4, params.degree)
    _done(buf, off)
    if np.any(arr >= params.p):
        raise SerializationError("plaintext coefficient out of range")
    return BatchedPlaintext(params, arr, stride)


# -- keys --------------------------------------------------------------------

def serialize_public_key(pk: PublicKey) -> bytes:
    return _header(pk.params, KIND_PUBLIC_KEY) + _u64(pk.data)


def deserialize_public_key(blob: bytes, params: HeParams | None = None) -> PublicKey:
    params, buf, off = _open(blob, KIND_PUBLIC_KEY, params)
    arr, off = _read(buf, off, 2 * params.L * params.degree)
    _done(buf, off)
    data = arr.reshape(2, params.L, params.degree)
    if np.any(data >= params.tables.qs[: params.L][None, :, None]):
        raise SerializationError("residue out of range")
    return PublicKey(params, data)


def serialize_secret_key(sk: SecretKey) -> bytes:
    return _header(sk.params, KIND_SECRET_KEY) + _u64(sk.small % 3) + _u64(sk.ntt)


def deserialize_secret_key(blob: bytes, params: HeParams | None = None) -> SecretKey:
    params, buf, off = _open(blob, KIND_SECRET_KEY, params)
    n = params.degree
    small, off = _read(buf, off, n)
    ntt, off = _read(buf, off, (params.L + 1) * n)
    _done(buf, off)
    if np.any(small > 2):
        raise SerializationError("secret coefficient out of range")
    small = np.where(small == 2, -1, small)
    return SecretKey(params, small, ntt.reshape(params.L + 1, n))


def _ksk_body(key: KeySwitchKey) -> bytes:
    return struct.pack("<Q", key.galois_elt) + _u64(key.data)


def _ksk_read(params: HeParams, buf: memoryview, off: int) -> tuple[KeySwitchKey, int]:
    if off + 8 > len(buf):
        raise SerializationError("truncated blob")
    (g,) = struct.unpack_from("<Q", buf, off)
    L, n = params.L, params.degree
    arr, off = _read(buf, off + 8, L * 2 * (L + 1) * n)
    data = arr.reshape(L, 2, L + 1, n)
    ext = params.level(params.max_level).tix_ext
    if np.any(data >= params.tables.qs[ext][None, None, :, None]):
        raise SerializationError("residue out of range")
    return KeySwitchKey(params, data, g), off


def serialize_ksk(key: KeySwitchKey) -> bytes:
    return _header(key.params, KIND_KSK) + _ksk_body(key)


def deserialize_ksk(blob: bytes, params: HeParams | None = None) -> KeySwitchKey:
    params, buf, off = _open(blob, KIND_KSK, params)
    key, off = _ksk_read(params, buf, off)
    _done(buf, off)
    return key


def serialize_evk(evk: EvaluationKey) -> bytes:
    params = evk.params
    parts = [_EVK_PREFIX.pack(EVK_MAGIC, FORMAT_VERSION, params.params_hash), _ksk_body(evk.relin),
             struct.pack("<I", len(evk.galois.keys))]
    for g in sorted(evk.galois.keys):
        parts.append(_ksk_body(evk.galois.keys[g]))
    return b"".join(parts)


def deserialize_evk(blob: bytes, params: HeParams | None = None) -> EvaluationKey:
    if len(blob) < _EVK_PREFIX.size:
        raise SerializationError("blob too short")
    magic, version, phash = _EVK_PREFIX.unpack_from(blob)
    if magic != EVK_MAGIC:
        raise SerializationError("bad magic")
    if version != FORMAT_VERSION:
        raise SerializationError(f"unsupported format version {version}")
    params = resolve_params(phash, params)
    buf = memoryview(blob)
    relin, off = _ksk_read(params, buf, _EVK_PREFIX.size)
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    keys = {}
    for _ in range(count):
        key, off = _ksk_read(params, buf, off)
        keys[key.galois_elt] = key
    _done(buf, off)
    return EvaluationKey(relin, GaloisKeys(params, keys))
