"""Prime fields and the RNS polynomial ring Z_q[X]/(X^N + 1).

Polynomials are stored limb-major as ``(limbs, N)`` int64 arrays with every
residue in ``[0, q_i)``.  The NTT is negacyclic: after ``ntt_forward`` index
``j`` of a limb holds the evaluation at ``psi ** (2 * bitrev(j) + 1)`` where
``psi`` is the primitive 2N-th root chosen for that prime.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import prod
from typing import Iterable, Sequence

import numpy as np
from sympy import isprime

from . import _kernels as K
from .errors import DomainError, ParameterError
from .xof import Xof, as_seed

GAUSSIAN_SIGMA = 3.2
GAUSSIAN_BOUND = 19  # about 6 sigma


class PrimeField:
    """Arithmetic in Z_p for a prime ``p`` below 2**62."""

    __slots__ = ("modulus",)

    def __init__(self, modulus: int):
        modulus = int(modulus)
        if modulus < 2 or modulus >= 1 << 62 or not isprime(modulus):
            raise ParameterError(f"field modulus {modulus} is not a prime below 2**62")
        self.modulus = modulus

    def __repr__(self) -> str:
        return f"PrimeField({self.modulus})"

    def __eq__(self, other) -> bool:
        return isinstance(other, PrimeField) and other.modulus == self.modulus

    def __hash__(self) -> int:
        return hash(("PrimeField", self.modulus))

    def _check(self, *xs: int) -> None:
        for x in xs:
            if not 0 <= x < self.modulus:
                raise DomainError(f"{x} is not a reduced element of Z_{self.modulus}")

    def add(self, a: int, b: int) -> int:
        self._check(a, b)
        return (a + b) % self.modulus

    def sub(self, a: int, b: int) -> int:
        self._check(a, b)
        return (a - b) % self.modulus

    def neg(self, a: int) -> int:
        self._check(a)
        return -a % self.modulus

    def mul(self, a: int, b: int) -> int:
        self._check(a, b)
        return a * b % self.modulus

    def pow(self, a: int, e: int) -> int:
        self._check(a)
        if e < 0:
            return pow(self.inv(a), -e, self.modulus)
        return pow(a, e, self.modulus)

    def inv(self, a: int) -> int:
        self._check(a)
        if a == 0:
            raise DomainError("zero has no multiplicative inverse")
        return pow(a, self.modulus - 2, self.modulus)

    def lift_signed(self, a):
        """Representative in (-p/2, p/2]; works on ints and int64 arrays."""
        p = self.modulus
        if isinstance(a, np.ndarray):
            a = np.asarray(a, dtype=np.int64) % p
            return np.where(a > p // 2, a - p, a)
        a %= p
        return a - p if a > p // 2 else a


def bit_reverse(i: int, bits: int) -> int:
    return int(format(i, f"0{bits}b")[::-1], 2) if bits else 0


@lru_cache(maxsize=None)
def bit_reverse_table(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n, dtype=np.int64)
    out = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        out |= ((idx >> b) & 1) << (bits - 1 - b)
    return out


def find_ntt_primes(count: int, bits: int, step: int, exclude: Iterable[int] = ()) -> list[int]:
    """The ``count`` largest primes below ``2**bits`` congruent to 1 mod ``step``."""
    if bits > K.MAX_MODULUS_BITS:
        raise ParameterError(f"limb primes must stay below 2**{K.MAX_MODULUS_BITS}")
    skip = set(exclude)
    found: list[int] = []
    cand = ((1 << bits) - 1) // step * step + 1
    while len(found) < count:
        if cand <= step:
            raise ParameterError("ran out of candidate primes")
        if cand not in skip and isprime(cand):
            found.append(cand)
        cand -= step
    return found


def primitive_root_2n(q: int, n: int) -> int:
    """Smallest-generator primitive 2n-th root of unity mod q."""
    if (q - 1) % (2 * n):
        raise ParameterError(f"{q} is not 1 mod {2 * n}")
    e = (q - 1) // (2 * n)
    for g in range(2, 10_000):
        r = pow(g, e, q)
        if pow(r, n, q) == q - 1:
            return r
    raise ParameterError(f"no primitive {2 * n}-th root found mod {q}")


class NttTables:
    """Stacked per-prime twiddle tables for transforms of length ``n``."""

    def __init__(self, n: int, primes: Sequence[int], roots: Sequence[int] | None = None):
        if n < 2 or n & (n - 1):
            raise ParameterError(f"transform length {n} is not a power of two >= 2")
        self.n = n
        self.primes = tuple(int(q) for q in primes)
        k = len(self.primes)
        brv = bit_reverse_table(n)
        self.qs = np.array(self.primes, dtype=np.int64)
        self.qf = 1.0 / self.qs.astype(np.float64)
        self.psi = np.empty((k, n), dtype=np.int64)
        self.ipsi = np.empty((k, n), dtype=np.int64)
        self.ninv = np.empty(k, dtype=np.int64)
        self.roots = []
        for i, q in enumerate(self.primes):
            root = primitive_root_2n(q, n) if roots is None else int(roots[i])
            if pow(root, n, q) != q - 1:
                raise ParameterError(f"{root} is not a primitive {2 * n}-th root mod {q}")
            self.roots.append(root)
            pw = _powers(root, n, q)
            ipw = _powers(pow(root, q - 2, q), n, q)
            self.psi[i] = pw[brv]
            self.ipsi[i] = ipw[brv]
            self.ninv[i] = pow(n, q - 2, q)
        self.psif = self.psi / self.qs[:, None].astype(np.float64)
        self.ipsif = self.ipsi / self.qs[:, None].astype(np.float64)
        self.ninvf = self.ninv / self.qs.astype(np.float64)
        self._index = {q: i for i, q in enumerate(self.primes)}

    def index_of(self, primes: Sequence[int]) -> np.ndarray:
        return np.array([self._index[int(q)] for q in primes], dtype=np.int64)

    def forward(self, a: np.ndarray, tix: np.ndarray) -> None:
        K.ntt_forward(a, tix, self.qs, self.psi, self.psif)

    def inverse(self, a: np.ndarray, tix: np.ndarray) -> None:
        K.ntt_inverse(a, tix, self.qs, self.ipsi, self.ipsif, self.ninv, self.ninvf)


def _powers(base: int, n: int, q: int) -> np.ndarray:
    out = np.empty(n, dtype=np.int64)
    x = 1
    for i in range(n):
        out[i] = x
        x = x * base % q
    return out


@lru_cache(maxsize=32)
def ntt_tables(n: int, primes: tuple[int, ...]) -> NttTables:
    return NttTables(n, primes)


@dataclass(frozen=True)
class RingParams:
    """Ring degree, RNS limb primes and the batching plaintext modulus."""

    degree: int
    limb_primes: tuple[int, ...]
    plain_modulus: PrimeField = field(default_factory=lambda: PrimeField(65537))

    def __post_init__(self):
        n = self.degree
        if n < 2 or n & (n - 1):
            raise ParameterError(f"degree {n} is not a power of two")
        object.__setattr__(self, "limb_primes", tuple(int(q) for q in self.limb_primes))
        if not self.limb_primes:
            raise ParameterError("at least one limb prime is required")
        if len(set(self.limb_primes)) != len(self.limb_primes):
            raise ParameterError("limb primes must be distinct")
        for q in self.limb_primes:
            if q >= 1 << K.MAX_MODULUS_BITS or (q - 1) % (2 * n) or not isprime(q):
                raise ParameterError(f"{q} is not an NTT-friendly prime below 2**50 for N={n}")
        if (self.plain_modulus.modulus - 1) % (2 * n):
            raise ParameterError(f"plain modulus {self.plain_modulus.modulus} is not 1 mod {2 * n}")

    @property
    def modulus(self) -> int:
        return prod(self.limb_primes)

    @property
    def tables(self) -> NttTables:
        return ntt_tables(self.degree, self.limb_primes)

    @property
    def tix(self) -> np.ndarray:
        return np.arange(len(self.limb_primes), dtype=np.int64)


class RnsPoly:
    """Immutable element of R_q held as RNS limbs, in coefficient or NTT domain."""

    __slots__ = ("params", "limbs", "is_ntt")

    def __init__(self, params: RingParams, limbs: np.ndarray, is_ntt: bool = False):
        limbs = np.ascontiguousarray(limbs, dtype=np.int64)
        if limbs.shape != (len(params.limb_primes), params.degree):
            raise ParameterError(f"limb array shape {limbs.shape} does not match params")
        if np.any(limbs < 0) or np.any(limbs >= params.tables.qs[:, None]):
            raise DomainError("residue outside [0, q_i)")
        limbs.setflags(write=False)
        self.params = params
        self.limbs = limbs
        self.is_ntt = bool(is_ntt)

    @classmethod
    def _raw(cls, params: RingParams, limbs: np.ndarray, is_ntt: bool) -> "RnsPoly":
        obj = cls.__new__(cls)
        limbs.setflags(write=False)
        obj.params, obj.limbs, obj.is_ntt = params, limbs, is_ntt
        return obj

    @classmethod
    def from_ints(cls, params: RingParams, coeffs: Sequence[int]) -> "RnsPoly":
        """Coefficient-domain polynomial from (possibly negative) Python ints."""
        if len(coeffs) != params.degree:
            raise ParameterError(f"expected {params.degree} coefficients")
        limbs = np.array([[int(c) % q for c in coeffs] for q in params.limb_primes], dtype=np.int64)
        return cls._raw(params, limbs, False)

    @classmethod
    def zero(cls, params: RingParams, is_ntt: bool = False) -> "RnsPoly":
        return cls._raw(params, np.zeros((len(params.limb_primes), params.degree), np.int64), is_ntt)

    def to_ints(self, centered: bool = False) -> list[int]:
        """CRT reconstruction of every coefficient as a Python int."""
        poly = ntt_inverse(self) if self.is_ntt else self
        qs = self.params.limb_primes
        big = self.params.modulus
        acc = np.zeros(self.params.degree, dtype=object)
        for i, q in enumerate(qs):
            hat = big // q
            y = (poly.limbs[i].astype(object) * pow(hat, -1, q)) % q
            acc = acc + y * hat
        out = [int(v) % big for v in acc]
        if centered:
            out = [v - big if v > big // 2 else v for v in out]
        return out

    def _same(self, other: "RnsPoly") -> None:
        if not isinstance(other, RnsPoly) or other.params != self.params:
            raise ParameterError("polynomials belong to different rings")
        if other.is_ntt != self.is_ntt:
            raise DomainError("operands are in different domains")

    def __add__(self, other: "RnsPoly") -> "RnsPoly":
        self._same(other)
        t = self.params.tables
        return RnsPoly._raw(self.params, K.add_rows(self.limbs, other.limbs, self.params.tix, t.qs), self.is_ntt)

    def __sub__(self, other: "RnsPoly") -> "RnsPoly":
        self._same(other)
        t = self.params.tables
        return RnsPoly._raw(self.params, K.sub_rows(self.limbs, other.limbs, self.params.tix, t.qs), self.is_ntt)

    def __neg__(self) -> "RnsPoly":
        t = self.params.tables
        return RnsPoly._raw(self.params, K.neg_rows(self.limbs, self.params.tix, t.qs), self.is_ntt)

    def __eq__(self, other) -> bool:
        return (isinstance(other, RnsPoly) and other.params == self.params
                and other.is_ntt == self.is_ntt and np.array_equal(other.limbs, self.limbs))

    def __hash__(self):
        return hash((self.params, self.is_ntt, self.limbs.tobytes()))

    def __repr__(self) -> str:
        dom = "ntt" if self.is_ntt else "coef"
        return f"RnsPoly(N={self.params.degree}, limbs={len(self.params.limb_primes)}, {dom})"


def ntt_forward(poly: RnsPoly) -> RnsPoly:
    if poly.is_ntt:
        raise DomainError("polynomial is already in the NTT domain")
    a = poly.limbs.copy()
    poly.params.tables.forward(a, poly.params.tix)
    return RnsPoly._raw(poly.params, a, True)


def ntt_inverse(poly: RnsPoly) -> RnsPoly:
    if not poly.is_ntt:
        raise DomainError("polynomial is already in the coefficient domain")
    a = poly.limbs.copy()
    poly.params.tables.inverse(a, poly.params.tix)
    return RnsPoly._raw(poly.params, a, False)


def poly_mul(a: RnsPoly, b: RnsPoly) -> RnsPoly:
    """Negacyclic product; the result is in the domain of ``a``."""
    if not isinstance(b, RnsPoly) or a.params != b.params:
        raise ParameterError("polynomials belong to different rings")
    an = a if a.is_ntt else ntt_forward(a)
    bn = b if b.is_ntt else ntt_forward(b)
    t = a.params.tables
    prod_ = RnsPoly._raw(a.params, K.mul_rows(an.limbs, bn.limbs, a.params.tix, t.qs, t.qf), True)
    return prod_ if a.is_ntt else ntt_inverse(prod_)


# -- sampling ----------------------------------------------------------------

@lru_cache(maxsize=None)
def _gaussian_thresholds() -> np.ndarray:
    """Integer CDF thresholds (scaled to 2**63) for |x| <= bound, sigma fixed."""
    from fractions import Fraction
    import math

    weights = [math.exp(-(x * x) / (2 * GAUSSIAN_SIGMA ** 2))
               for x in range(-GAUSSIAN_BOUND, GAUSSIAN_BOUND + 1)]
    total = math.fsum(weights)
    cum, out = Fraction(0), []
    for w in weights[:-1]:
        cum += Fraction(w) / Fraction(total)
        out.append(int(cum * (1 << 63)))
    return np.array(out, dtype=np.uint64)


def sample_small(kind: str, n: int, xof: Xof) -> np.ndarray:
    """Signed small coefficients: 'ternary' in {-1,0,1} or bounded 'gaussian'."""
    if kind == "ternary":
        out = np.empty(n, dtype=np.int64)
        filled = 0
        while filled < n:
            raw = np.frombuffer(xof.read(2 * (n - filled) + 16), dtype=np.uint8)
            good = raw[raw < 255][: n - filled]
            out[filled:filled + good.size] = good.astype(np.int64) % 3 - 1
            filled += good.size
        return out
    if kind == "gaussian":
        u = xof.words(n, 8) >> np.uint64(1)
        idx = np.searchsorted(_gaussian_thresholds(), u, side="right")
        return idx.astype(np.int64) - GAUSSIAN_BOUND
    raise ParameterError(f"unknown small distribution {kind!r}")


def sample(kind: str, params: RingParams, seed=None, *tag) -> RnsPoly:
    """Seeded polynomial sample in coefficient domain.

    kind: 'uniform' (independently uniform per limb, i.e. uniform mod q),
    'ternary' or 'gaussian' (signed values lifted into every limb).
    """
    seed = as_seed(seed)
    n = params.degree
    if kind == "uniform":
        xof = Xof("ring-sample", "uniform", seed, *tag)
        limbs = np.stack([xof.uniform_mod(q, n) for q in params.limb_primes])
        return RnsPoly._raw(params, limbs, False)
    small = sample_small(kind, n, Xof("ring-sample", kind, seed, *tag))
    limbs = K.signed_to_rows(small, params.tix, params.tables.qs)
    return RnsPoly._raw(params, limbs, False)
