"""SIMD batching: slot vectors over F_p <-> plaintext polynomials.

Slots form a 2 x N/2 matrix (row 0 first).  Slot ``i`` of row 0 is the
evaluation at ``psi ** (5**i)`` and of row 1 at ``psi ** (-(5**i))``, so a
rotation by ``k`` is the automorphism ``X -> X**(5**k)``.

Vectors that repeat with period ``w`` (``w`` dividing N/2, same in both rows)
are exactly polynomials in ``X**(N / 2w)``.  :class:`PeriodicEncoder` encodes
them through a transform of length ``2w`` instead of ``N``.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels as K
from ..errors import DomainError, ParameterError
from ..ring import NttTables, bit_reverse_table
from .params import HeParams


class BatchedPlaintext:
    """Plaintext polynomial with coefficients in [0, p).

    ``stride > 1`` records that only coefficients at multiples of ``stride``
    can be nonzero, which lets the NTT over the ciphertext limbs run on the
    short transform.
    """

    __slots__ = ("params", "coeffs", "stride")

    def __init__(self, params: HeParams, coeffs: np.ndarray, stride: int = 1):
        coeffs = np.ascontiguousarray(coeffs, dtype=np.int64)
        if coeffs.shape != (params.degree,):
            raise ParameterError(f"plaintext needs {params.degree} coefficients")
        coeffs.setflags(write=False)
        self.params = params
        self.coeffs = coeffs
        self.stride = int(stride)

    def __eq__(self, other) -> bool:
        return (isinstance(other, BatchedPlaintext) and other.params is self.params
                and np.array_equal(other.coeffs, self.coeffs))

    def __hash__(self):
        return hash(self.coeffs.tobytes())


def slot_exponents(n_slots_row: int, two_m: int) -> np.ndarray:
    """Odd exponents mod ``two_m`` of the 2 x ``n_slots_row`` slot matrix."""
    pw = np.ones(n_slots_row, dtype=np.int64)
    acc = 1
    for j in range(n_slots_row):
        pw[j] = acc
        acc = acc * 5 % two_m
    return np.concatenate([pw, (two_m - pw) % two_m])


def exponent_to_index(e: np.ndarray, n: int) -> np.ndarray:
    """NTT output position holding the evaluation at psi**e (e odd)."""
    return bit_reverse_table(n)[(e - 1) // 2]


class BatchEncoder:
    """Full-length encoder for arbitrary slot vectors."""

    def __init__(self, params: HeParams):
        self.params = params
        n = params.degree
        self.slot_count = n
        self.row_size = n // 2
        self.slot_to_ntt = exponent_to_index(slot_exponents(n // 2, 2 * n), n)
        self._ptix = np.array([params.p_tix], dtype=np.int64)

    def encode(self, values) -> BatchedPlaintext:
        p = self.params.p
        v = np.asarray(values, dtype=np.int64).ravel()
        if v.size > self.slot_count:
            raise ParameterError(f"at most {self.slot_count} slots")
        if np.any(v < 0) or np.any(v >= p):
            raise DomainError(f"slot values must lie in [0, {p})")
        ev = np.zeros((1, self.slot_count), dtype=np.int64)
        ev[0, self.slot_to_ntt[: v.size]] = v
        self.params.tables.inverse(ev, self._ptix)
        return BatchedPlaintext(self.params, ev[0])

    def decode(self, pt: BatchedPlaintext) -> np.ndarray:
        ev = pt.coeffs.reshape(1, -1).copy()
        self.params.tables.forward(ev, self._ptix)
        return ev[0, self.slot_to_ntt]

    def decode_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        return self.decode(BatchedPlaintext(self.params, coeffs))

    # -- lifts into the ciphertext limbs (NTT domain) ------------------------

    def lift_mul(self, pt: BatchedPlaintext, level: int) -> np.ndarray:
        """Centred lift of the plaintext into limbs q_0..q_level, NTT form."""
        if pt.stride > 1:
            return self.periodic(pt.stride).lift_mul(pt, level)
        lt = self.params.level(level)
        t = self.params.tables
        a = K.lift_centered_rows(pt.coeffs, self.params.p, lt.tix_q, t.qs)
        t.forward(a, lt.tix_q)
        return a

    def lift_scaled(self, pt: BatchedPlaintext, level: int) -> np.ndarray:
        """round(Q_level * m / p) in limbs q_0..q_level, NTT form."""
        if pt.stride > 1:
            return self.periodic(pt.stride).lift_scaled(pt, level)
        a = scale_rows(self.params, pt.coeffs, level)
        self.params.tables.forward(a, self.params.level(level).tix_q)
        return a

    def periodic(self, stride: int) -> "PeriodicEncoder":
        cache = self.__dict__.setdefault("_periodic", {})
        if stride not in cache:
            cache[stride] = PeriodicEncoder(self.params, self.params.degree // stride // 2)
        return cache[stride]


def scale_rows(params: HeParams, coeffs: np.ndarray, level: int) -> np.ndarray:
    """Per-limb ``delta * m + [m > p/2]`` for m in [0, p) (coefficient form)."""
    lt = params.level(level)
    t = params.tables
    bump = (coeffs > params.p // 2).astype(np.int64)
    rows = K.scalar_mul_rows(np.tile(coeffs, (level + 1, 1)), lt.delta_mod_q, lt.tix_q, t.qs, t.qf)
    return K.add_rows(rows, np.tile(bump, (level + 1, 1)), lt.tix_q, t.qs)


class PeriodicEncoder:
    """Encoder for slot vectors of period ``width`` (shared by both rows)."""

    def __init__(self, params: HeParams, width: int):
        n = params.degree
        if width < 1 or (n // 2) % width:
            raise ParameterError(f"period {width} must divide {n // 2}")
        self.params = params
        self.width = width
        self.m = 2 * width               # short transform length
        self.stride = n // self.m
        primes = params.q_primes + (params.p,)
        big = params.tables
        roots = [pow(big.roots[big.index_of([q])[0]], self.stride, q) for q in primes]
        self.small = NttTables(self.m, primes, roots=roots)
        self._ptix = np.array([len(primes) - 1], dtype=np.int64)
        # short slot map for one period in each row
        exps = slot_exponents(width, 2 * self.m)
        self.slot_to_small = exponent_to_index(exps, self.m)
        # full NTT position j -> short NTT position
        full_exp = 2 * bit_reverse_table(n).astype(np.int64) + 1
        self.full_to_small = exponent_to_index(full_exp % (2 * self.m), self.m)

    def encode(self, values) -> BatchedPlaintext:
        v = self.encode_small(np.asarray(values, dtype=np.int64).reshape(1, -1))[0]
        coeffs = np.zeros(self.params.degree, dtype=np.int64)
        coeffs[:: self.stride] = v
        return BatchedPlaintext(self.params, coeffs, stride=self.stride)

    def encode_small(self, vectors: np.ndarray) -> np.ndarray:
        """Short coefficient vectors (rows) for a batch of period vectors."""
        p = self.params.p
        vectors = np.asarray(vectors, dtype=np.int64)
        if vectors.ndim != 2 or vectors.shape[1] != self.width:
            raise ParameterError(f"expected rows of length {self.width}")
        if np.any(vectors < 0) or np.any(vectors >= p):
            raise DomainError(f"slot values must lie in [0, {p})")
        ev = np.empty((vectors.shape[0], self.m), dtype=np.int64)
        ev[:, self.slot_to_small] = np.concatenate([vectors, vectors], axis=1)
        self.small.inverse(ev, np.full(ev.shape[0], self._ptix[0], dtype=np.int64))
        return ev

    def _expand(self, small_rows: np.ndarray, level: int, scaled: bool) -> np.ndarray:
        """Short coefficient rows mod p -> full NTT rows over q_0..q_level.

        Returns shape (batch, level+1, N).
        """
        b = small_rows.shape[0]
        k = level + 1
        flat = small_rows.reshape(-1)
        tix = np.tile(np.arange(k, dtype=np.int64), b)
        if scaled:
            lt = self.params.level(level)
            bump = (flat > self.params.p // 2).astype(np.int64)
            rows = np.repeat(small_rows, k, axis=0)
            mult = np.tile(lt.delta_mod_q, b)
            t = self.small
            rows = K.scalar_mul_rows(rows, mult, tix, t.qs, t.qf)
            rows = K.add_rows(rows, np.repeat(bump.reshape(b, -1), k, axis=0), tix, t.qs)
        else:
            rows = np.empty((b * k, self.m), dtype=np.int64)
            for i in range(b):
                rows[i * k:(i + 1) * k] = K.lift_centered_rows(
                    small_rows[i], self.params.p, tix[:k], self.small.qs)
        self.small.forward(rows, tix)
        full = K.gather_rows(rows, self.full_to_small)
        return full.reshape(b, k, self.params.degree)

    def lift_mul_batch(self, vectors: np.ndarray, level: int) -> np.ndarray:
        return self._expand(self.encode_small(vectors), level, scaled=False)

    def lift_scaled_batch(self, vectors: np.ndarray, level: int) -> np.ndarray:
        return self._expand(self.encode_small(vectors), level, scaled=True)

    def lift_mul(self, pt: BatchedPlaintext, level: int) -> np.ndarray:
        return self._expand(pt.coeffs[:: self.stride].reshape(1, -1), level, False)[0]

    def lift_scaled(self, pt: BatchedPlaintext, level: int) -> np.ndarray:
        return self._expand(pt.coeffs[:: self.stride].reshape(1, -1), level, True)[0]
