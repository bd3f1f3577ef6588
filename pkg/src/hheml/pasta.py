"""PASTA-style additive stream cipher over F_p.

State is two branches of ``t`` words, initialised to the key halves.  Every
round applies a fresh per-branch affine layer drawn from an XOF, the mix
``(L, R) -> (2L + R, L + 2R)`` and an S-box: the Feistel square map
``s_j += s_{j-1}**2`` (using the values from before the round) in all rounds
but the last, and the cube map in the last.  One more affine layer and mix
follow; the keystream is the left branch, truncated to the block length.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CipherError, DomainError, ParameterError, SerializationError
from .xof import Xof, as_seed, derive_seed

NONCE_BYTES = 16
MAX_AFFINE_RETRIES = 64
SYM_MAGIC = b"HHES"
SYM_VERSION = 1
WORD_BITS = 17   # smallest draw width that covers every residue of 65537


@dataclass(frozen=True)
class CipherProfile:
    name: str
    t: int
    rounds: int
    p: int = 65537
    wire_id: int = 0

    def __post_init__(self):
        if self.t < 2:
            raise ParameterError("branch width t must be at least 2")
        if self.rounds < 2:
            raise ParameterError("at least two rounds are required")
        if self.p.bit_length() > WORD_BITS:
            raise ParameterError(f"p must fit in {WORD_BITS} bits")

    @property
    def key_words(self) -> int:
        return 2 * self.t


CIPHER_PROFILES: dict[str, CipherProfile] = {
    "test": CipherProfile("test", 32, 3, wire_id=1),
    "pasta3-like": CipherProfile("pasta3-like", 128, 3, wire_id=2),
}


def get_cipher_profile(name: str) -> CipherProfile:
    try:
        return CIPHER_PROFILES[name]
    except KeyError:
        raise ParameterError(f"unknown cipher profile {name!r}") from None


@dataclass(frozen=True)
class SymKey:
    words: np.ndarray

    def __post_init__(self):
        self.words.setflags(write=False)

    @property
    def left(self) -> np.ndarray:
        return self.words[: self.words.size // 2]

    @property
    def right(self) -> np.ndarray:
        return self.words[self.words.size // 2:]


@dataclass(frozen=True)
class SymCiphertext:
    profile: CipherProfile
    nonce: bytes
    words: np.ndarray

    @property
    def count(self) -> int:
        return int(self.words.size)

    @property
    def block_count(self) -> int:
        return -(-self.count // self.profile.t)

    def block(self, j: int) -> np.ndarray:
        t = self.profile.t
        return self.words[j * t:(j + 1) * t]

    def blocks(self) -> list[np.ndarray]:
        return [self.block(j) for j in range(self.block_count)]


def _check_words(x: np.ndarray, p: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64).ravel()
    if np.any(x < 0) or np.any(x >= p):
        raise DomainError(f"every word must lie in [0, {p})")
    return x


def ske_gen(profile: CipherProfile, seed=None) -> SymKey:
    """2t uniform words, deterministic under ``seed``."""
    xof = Xof("PERV-KEY", profile.name, as_seed(seed))
    return SymKey(draw_words(xof, profile.key_words, profile.p))


def draw_words(xof: Xof, count: int, p: int) -> np.ndarray:
    """Uniform field words from 17-bit draws with rejection of values >= p."""
    out = np.empty(count, dtype=np.int64)
    filled = 0
    mask = np.uint64((1 << WORD_BITS) - 1)
    while filled < count:
        want = count - filled
        raw = xof.words(want + want // 512 + 8, 3) & mask
        good = raw[raw < np.uint64(p)][:want]
        out[filled:filled + good.size] = good.astype(np.int64)
        filled += good.size
    return out


def rank_mod_p(matrix: np.ndarray, p: int) -> int:
    """Rank over F_p by Gaussian elimination (p < 2**31)."""
    a = np.array(matrix, dtype=np.int64) % p
    rows, cols = a.shape
    rank = 0
    for c in range(cols):
        pivots = np.nonzero(a[rank:, c])[0]
        if pivots.size == 0:
            continue
        r = rank + pivots[0]
        if r != rank:
            a[[rank, r]] = a[[r, rank]]
        inv = pow(int(a[rank, c]), p - 2, p)
        a[rank] = a[rank] * inv % p
        below = a[rank + 1:, c].copy()
        a[rank + 1:] = (a[rank + 1:] - below[:, None] * a[rank]) % p
        rank += 1
        if rank == rows:
            break
    return rank


@lru_cache(maxsize=256)
def _gen_affine_cached(profile_name: str, nonce: bytes, block: int, rnd: int, branch: int,
                       t: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    for retry in range(MAX_AFFINE_RETRIES):
        xof = Xof("PERV-AFF", profile_name, nonce, block, rnd, branch, retry)
        words = draw_words(xof, t * t + t, p)
        mat = words[: t * t].reshape(t, t)
        if rank_mod_p(mat, p) == t:
            mat.setflags(write=False)
            const = words[t * t:]
            const.setflags(write=False)
            return mat, const
    raise CipherError("affine layer generation exceeded the retry cap")


def gen_affine(profile: CipherProfile, nonce: bytes, block: int, rnd: int, branch: int
               ) -> tuple[np.ndarray, np.ndarray]:
    """Invertible t x t matrix and constant vector for one (round, branch)."""
    return _gen_affine_cached(profile.name, bytes(nonce), int(block), int(rnd), int(branch),
                              profile.t, profile.p)


def mix(left: np.ndarray, right: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    return (2 * left + right) % p, (left + 2 * right) % p


def feistel(s: np.ndarray, p: int) -> np.ndarray:
    out = s.copy()
    out[1:] = (s[1:] + s[:-1] * s[:-1]) % p
    return out


def cube(s: np.ndarray, p: int) -> np.ndarray:
    return s * s % p * s % p


def keystream(key: SymKey, nonce: bytes, block: int, profile: CipherProfile) -> np.ndarray:
    """The t keystream words of block ``block``."""
    p = profile.p
    if key.words.size != profile.key_words:
        raise ParameterError("key length does not match the profile")
    left = key.left.astype(np.int64)
    right = key.right.astype(np.int64)
    for rnd in range(1, profile.rounds + 1):
        m0, c0 = gen_affine(profile, nonce, block, rnd, 0)
        m1, c1 = gen_affine(profile, nonce, block, rnd, 1)
        left = (m0 @ left % p + c0) % p
        right = (m1 @ right % p + c1) % p
        left, right = mix(left, right, p)
        if rnd < profile.rounds:
            left, right = feistel(left, p), feistel(right, p)
        else:
            left, right = cube(left, p), cube(right, p)
    final = profile.rounds + 1
    m0, c0 = gen_affine(profile, nonce, block, final, 0)
    m1, c1 = gen_affine(profile, nonce, block, final, 1)
    left = (m0 @ left % p + c0) % p
    right = (m1 @ right % p + c1) % p
    left, _ = mix(left, right, p)
    return left


def fresh_nonce(seed=None) -> bytes:
    if seed is None:
        return os.urandom(NONCE_BYTES)
    return derive_seed(as_seed(seed), "nonce")[:NONCE_BYTES]


def ske_enc(key: SymKey, nonce: bytes, x, profile: CipherProfile) -> SymCiphertext:
    """c_j = x_j + z_j mod p, block by block."""
    if len(nonce) != NONCE_BYTES:
        raise ParameterError(f"nonce must be {NONCE_BYTES} bytes")
    x = _check_words(x, profile.p)
    t = profile.t
    out = np.empty_like(x)
    for j in range(-(-x.size // t)):
        chunk = x[j * t:(j + 1) * t]
        out[j * t:(j + 1) * t] = (chunk + keystream(key, nonce, j, profile)[: chunk.size]) % profile.p
    return SymCiphertext(profile, bytes(nonce), out)


def ske_dec(key: SymKey, c: SymCiphertext) -> np.ndarray:
    t = c.profile.t
    out = np.empty_like(c.words)
    for j in range(c.block_count):
        chunk = c.block(j)
        out[j * t:(j + 1) * t] = (chunk - keystream(key, c.nonce, j, c.profile)[: chunk.size]) % c.profile.p
    return out


# -- wire format -------------------------------------------------------------

_HEAD = struct.Struct("<4sHH16sQ")


def serialize_sym(c: SymCiphertext) -> bytes:
    return _HEAD.pack(SYM_MAGIC, SYM_VERSION, c.profile.wire_id, c.nonce, c.count) + \
        np.ascontiguousarray(c.words, dtype="<u8").tobytes()


def sym_header_size() -> int:
    return _HEAD.size


def deserialize_sym(blob: bytes) -> SymCiphertext:
    if len(blob) < _HEAD.size:
        raise SerializationError("blob too short")
    magic, version, wire_id, nonce, count = _HEAD.unpack_from(blob)
    if magic != SYM_MAGIC:
        raise SerializationError("bad magic")
    if version != SYM_VERSION:
        raise SerializationError(f"unsupported format version {version}")
    profile = next((p for p in CIPHER_PROFILES.values() if p.wire_id == wire_id), None)
    if profile is None:
        raise SerializationError(f"unknown cipher profile id {wire_id}")
    if len(blob) != _HEAD.size + 8 * count:
        raise SerializationError("length does not match word count")
    words = np.frombuffer(blob, dtype="<u8", offset=_HEAD.size).astype(np.int64)
    if np.any(words >= profile.p):
        raise SerializationError("word out of range")
    return SymCiphertext(profile, nonce, words)
