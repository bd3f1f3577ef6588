"""Deterministic expansion of seeds into uniform integers.

Everything random in the package (key material, noise, affine layers) is
drawn through :class:`Xof`, a SHAKE-256 stream keyed by a seed and a
domain-separation tag, so runs are reproducible from a single seed.
"""

from __future__ import annotations

import hashlib
import os
import struct

import numpy as np


def encode_part(part) -> bytes:
    """Length-prefixed, type-tagged encoding of one tag component."""
    if isinstance(part, bytes):
        body, kind = part, b"b"
    elif isinstance(part, str):
        body, kind = part.encode(), b"s"
    elif isinstance(part, (int, np.integer)):
        body, kind = int(part).to_bytes(16, "little", signed=True), b"i"
    else:
        raise TypeError(f"unsupported tag component {type(part).__name__}")
    return kind + struct.pack("<I", len(body)) + body


def derive_seed(seed: bytes, *parts) -> bytes:
    """32-byte child seed bound to ``parts``."""
    h = hashlib.sha3_256(b"HHEML-SEED")
    h.update(encode_part(seed))
    for part in parts:
        h.update(encode_part(part))
    return h.digest()


def as_seed(seed) -> bytes:
    """Normalise an int/bytes/str/None seed to 32 bytes (None draws fresh entropy)."""
    if seed is None:
        return os.urandom(32)
    if isinstance(seed, bytes) and len(seed) == 32:
        return seed
    return derive_seed(b"root", seed)


class Xof:
    """SHAKE-256 stream over ``tag_parts``; reads are sequential."""

    def __init__(self, *tag_parts):
        self._tag = b"".join(encode_part(p) for p in tag_parts)
        self._pos = 0
        self._buf = b""

    def read(self, n: int) -> bytes:
        need = self._pos + n
        if need > len(self._buf):
            size = max(need, 2 * len(self._buf), 4096)
            self._buf = hashlib.shake_256(self._tag).digest(size)
        out = self._buf[self._pos:need]
        self._pos = need
        return out

    def words(self, count: int, nbytes: int) -> np.ndarray:
        """``count`` little-endian unsigned integers of ``nbytes`` bytes each."""
        raw = np.frombuffer(self.read(count * nbytes), dtype=np.uint8).reshape(count, nbytes)
        out = np.zeros(count, dtype=np.uint64)
        for i in range(nbytes):
            out |= raw[:, i].astype(np.uint64) << np.uint64(8 * i)
        return out

    def uniform_mod(self, modulus: int, count: int) -> np.ndarray:
        """``count`` exactly uniform values in ``[0, modulus)`` by rejection."""
        bits = int(modulus - 1).bit_length()
        nbytes = (bits + 7) // 8
        mask = np.uint64((1 << bits) - 1)
        out = np.empty(count, dtype=np.int64)
        filled = 0
        while filled < count:
            want = count - filled
            # acceptance probability is at least 1/2
            draw = self.words(2 * want + 16, nbytes) & mask
            good = draw[draw < np.uint64(modulus)][:want]
            out[filled:filled + good.size] = good.astype(np.int64)
            filled += good.size
        return out
