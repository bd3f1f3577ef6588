"""BFV parameter profiles and per-level precomputation.

Moduli layout (all primes lie in ``(2**49, 2**50)``):

* ciphertext chain ``q_0 .. q_{L-1}``, each ``= 1 mod 2N*p`` so that every
  partial product is ``= 1 mod p``;
* one special prime ``P`` used by hybrid key switching (one digit per limb);
* an auxiliary basis ``b_0 .. b_L`` for the scale-and-round multiplication.

All of them plus ``p`` share one stacked twiddle table; ``tix`` arrays index
into it.  A ciphertext at level ``l`` uses limbs ``q_0 .. q_l``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import prod

import numpy as np

from ..errors import ParameterError
from ..ring import NttTables, PrimeField, RingParams, find_ntt_primes

PLAIN_MODULUS = 65537
LIMB_BITS = 50
FORMAT_VERSION = 1

# (degree, chain length, claimed 128-bit security for log2(QP))
PROFILES: dict[str, tuple[int, int, bool]] = {
    "test-8192": (8192, 6, False),
    "paper-16384": (16384, 7, True),
}

# homomorphic-standard upper bounds on log2(QP) for 128-bit classical security
SECURITY_BOUNDS_128 = {1024: 27, 2048: 54, 4096: 109, 8192: 218, 16384: 438, 32768: 881}


@dataclass(frozen=True)
class LevelTables:
    """Constants for one modulus level (limbs ``q_0 .. q_level``)."""

    level: int
    tix_q: np.ndarray
    tix_b: np.ndarray
    tix_ext: np.ndarray          # q_0..q_level, P
    kmap: np.ndarray             # key limb index of every extended limb
    # decryption
    qhat_inv: np.ndarray
    p_over_q: np.ndarray
    # plaintext scaling: round(Q*m/p) = delta*m + [m > p/2]
    delta_mod_q: np.ndarray
    # key switching mod-down by P
    p_inv_mod_q: np.ndarray
    p_mod_q: np.ndarray
    # rescale by the last limb
    last_inv_mod_q: np.ndarray
    # Q -> B conversion
    q_hat_inv: np.ndarray
    q_hat_mod_b: np.ndarray
    q_mod_b: np.ndarray
    # scale by p/Q into B
    dhat_inv_q: np.ndarray
    dhat_inv_b: np.ndarray
    omega: np.ndarray
    theta: np.ndarray
    own_b: np.ndarray
    # B -> Q conversion
    b_hat_inv: np.ndarray
    b_hat_mod_q: np.ndarray
    b_mod_q: np.ndarray


class HeParams:
    """A named BFV parameter set."""

    def __init__(self, name: str, degree: int, chain_length: int,
                 plain_modulus: int = PLAIN_MODULUS, claims_128_bit: bool = False):
        if chain_length < 1:
            raise ParameterError("chain length must be at least 1")
        self.name = name
        self.degree = int(degree)
        self.plain = PrimeField(plain_modulus)
        p = self.plain.modulus
        n = self.degree
        if (p - 1) % (2 * n):
            raise ParameterError(f"plain modulus {p} does not support batching at N={n}")
        self.q_primes = tuple(find_ntt_primes(chain_length, LIMB_BITS, 2 * n * p))
        rest = find_ntt_primes(chain_length + 2, LIMB_BITS, 2 * n, exclude=self.q_primes)
        self.special_prime = rest[0]
        self.aux_primes = tuple(rest[1:])
        for q in self.q_primes + tuple(rest):
            if not (1 << (LIMB_BITS - 1)) < q < (1 << LIMB_BITS):
                raise ParameterError("limb primes must lie in (2**49, 2**50)")
        self.claims_128_bit = claims_128_bit
        self.ring = RingParams(n, self.q_primes, self.plain)
        self._levels: dict[int, LevelTables] = {}

    def __repr__(self) -> str:
        return f"HeParams({self.name!r}, N={self.degree}, limbs={len(self.q_primes)})"

    @property
    def p(self) -> int:
        return self.plain.modulus

    @property
    def max_level(self) -> int:
        return len(self.q_primes) - 1

    @property
    def L(self) -> int:
        return len(self.q_primes)

    @property
    def p_tix(self) -> int:
        return 2 * self.L + 2

    @property
    def special_tix(self) -> int:
        return self.L

    @cached_property
    def all_primes(self) -> tuple[int, ...]:
        return self.q_primes + (self.special_prime,) + self.aux_primes + (self.p,)

    @cached_property
    def tables(self) -> NttTables:
        return NttTables(self.degree, self.all_primes)

    @property
    def log2_qp(self) -> float:
        return float(np.log2(float(prod(self.q_primes)))) + float(np.log2(float(self.special_prime)))

    def security_ok(self) -> bool:
        """Whether log2(QP) stays within the 128-bit bound for this degree."""
        return self.log2_qp <= SECURITY_BOUNDS_128.get(self.degree, 0)

    @cached_property
    def params_hash(self) -> bytes:
        h = hashlib.sha256(b"HHE-PARAMS")
        h.update(FORMAT_VERSION.to_bytes(2, "little"))
        h.update(self.degree.to_bytes(4, "little"))
        for q in self.all_primes:
            h.update(q.to_bytes(8, "little"))
        return h.digest()

    def modulus_at(self, level: int) -> int:
        return prod(self.q_primes[: level + 1])

    def check_level(self, level: int) -> None:
        if not 0 <= level <= self.max_level:
            raise ParameterError(f"level {level} outside [0, {self.max_level}]")

    def level(self, level: int) -> LevelTables:
        self.check_level(level)
        lt = self._levels.get(level)
        if lt is None:
            lt = self._build_level(level)
            self._levels[level] = lt
        return lt

    def _build_level(self, level: int) -> LevelTables:
        L = self.L
        p = self.p
        qs = list(self.q_primes[: level + 1])
        bs = list(self.aux_primes[: level + 2])
        big_q = prod(qs)
        big_b = prod(bs)
        big_d = big_q * big_b
        P = self.special_prime
        arr = lambda xs: np.array([int(x) for x in xs], dtype=np.int64)  # noqa: E731

        q_hat_inv = arr(pow(big_q // q, -1, q) for q in qs)
        omega = np.array([[((p * big_b) // q) % b for b in bs] for q in qs], dtype=np.int64)
        theta = np.array([float(Fraction((p * big_b) % q, q)) for q in qs], dtype=np.float64)
        return LevelTables(
            level=level,
            tix_q=np.arange(level + 1, dtype=np.int64),
            tix_b=np.arange(L + 1, L + 1 + level + 2, dtype=np.int64),
            tix_ext=np.append(np.arange(level + 1), L).astype(np.int64),
            kmap=np.append(np.arange(level + 1), L).astype(np.int64),
            qhat_inv=q_hat_inv,
            p_over_q=np.array([p / q for q in qs], dtype=np.float64),
            delta_mod_q=arr(((big_q - 1) // p) % q for q in qs),
            p_inv_mod_q=arr(pow(P, -1, q) for q in qs),
            p_mod_q=arr(P % q for q in qs),
            last_inv_mod_q=arr(pow(qs[-1], -1, q) for q in qs[:-1]),
            q_hat_inv=q_hat_inv,
            q_hat_mod_b=np.array([[(big_q // q) % b for b in bs] for q in qs], dtype=np.int64),
            q_mod_b=arr(big_q % b for b in bs),
            dhat_inv_q=arr(pow(big_d // q, -1, q) for q in qs),
            dhat_inv_b=arr(pow(big_d // b, -1, b) for b in bs),
            omega=omega,
            theta=theta,
            own_b=arr((p * big_b // b) % b for b in bs),
            b_hat_inv=arr(pow(big_b // b, -1, b) for b in bs),
            b_hat_mod_q=np.array([[(big_b // b) % q for q in qs] for b in bs], dtype=np.int64),
            b_mod_q=arr(big_b % q for q in qs),
        )


_CACHE: dict[str, HeParams] = {}


def get_profile(name: str) -> HeParams:
    """Shared, lazily built parameter set for a named profile."""
    if name not in PROFILES:
        raise ParameterError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    if name not in _CACHE:
        n, chain, secure = PROFILES[name]
        _CACHE[name] = HeParams(name, n, chain, claims_128_bit=secure)
    return _CACHE[name]
