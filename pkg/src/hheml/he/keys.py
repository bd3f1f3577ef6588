"""BFV key material and key generation.

Key-switching keys use hybrid switching with one digit per ciphertext limb
and a single special prime ``P``.  Digit ``i`` of a key for target secret
``s'`` is ``(-a_i*s + e_i + P*s'*g_i, a_i)`` over limbs ``q_0..q_{L-1}, P``
where ``g_i`` is the CRT idempotent of ``q_i`` (1 mod q_i, 0 elsewhere), so
the gadget term only touches limb ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np

from .. import _kernels as K
from ..errors import ParameterError
from ..ring import bit_reverse_table, sample_small
from ..xof import Xof, as_seed
from .params import HeParams


@dataclass(frozen=True)
class SecretKey:
    params: HeParams
    small: np.ndarray          # signed ternary coefficients, shape (N,)
    ntt: np.ndarray            # NTT form over q_0..q_{L-1}, P; shape (L+1, N)


@dataclass(frozen=True)
class PublicKey:
    params: HeParams
    data: np.ndarray           # (2, L, N): b = -a*s + e, a


@dataclass(frozen=True)
class KeySwitchKey:
    params: HeParams
    data: np.ndarray           # (L, 2, L+1, N)
    galois_elt: int = 0        # 0 for relinearisation


@dataclass(frozen=True)
class GaloisKeys:
    params: HeParams
    keys: dict[int, KeySwitchKey]          # galois element -> key

    def steps(self) -> list[int]:
        return sorted(step_of(self.params, g) for g in self.keys)


@dataclass(frozen=True)
class EvaluationKey:
    """Public material for server-side evaluation (no secret component)."""

    relin: KeySwitchKey
    galois: GaloisKeys

    @property
    def params(self) -> HeParams:
        return self.relin.params


@dataclass(frozen=True)
class HeKeys:
    secret_key: SecretKey
    public_key: PublicKey
    relin_key: KeySwitchKey
    galois_keys: GaloisKeys
    rotation_steps: tuple[int, ...] = field(default=())

    @property
    def evk(self) -> EvaluationKey:
        return EvaluationKey(self.relin_key, self.galois_keys)


def galois_element(params: HeParams, step: int) -> int:
    """Automorphism exponent rotating both slot rows left by ``step``."""
    half = params.degree // 2
    return pow(5, step % half, 2 * params.degree)


@lru_cache(maxsize=None)
def _steps_by_element(n: int) -> dict[int, int]:
    half = n // 2
    out, g = {}, 1
    for k in range(half):
        out[g] = k
        g = g * 5 % (2 * n)
    return out


def step_of(params: HeParams, g: int) -> int:
    """Normalised step in (-N/4, N/4] for a galois element."""
    k = _steps_by_element(params.degree)[g]
    half = params.degree // 2
    return k - half if k > half // 2 else k


@lru_cache(maxsize=None)
def ntt_permutation(n: int, g: int) -> np.ndarray:
    """perm with (sigma_g a)[j] = a[perm[j]] for NTT-domain vectors."""
    brv = bit_reverse_table(n)
    e = 2 * brv + 1
    return brv[((e * g) % (2 * n) - 1) // 2]


def _gaussian_ntt(params: HeParams, xof: Xof, tix: np.ndarray) -> np.ndarray:
    t = params.tables
    rows = K.signed_to_rows(sample_small("gaussian", params.degree, xof), tix, t.qs)
    t.forward(rows, tix)
    return rows


def _ksk(params: HeParams, sk: SecretKey, target: np.ndarray, seed: bytes, label) -> np.ndarray:
    """Raw key-switching key from secret ``sk`` to ``target`` (NTT over ext limbs)."""
    L = params.L
    n = params.degree
    t = params.tables
    lt = params.level(params.max_level)
    tix = lt.tix_ext
    ext_primes = [t.primes[i] for i in tix]
    out = np.empty((L, 2, L + 1, n), dtype=np.int64)
    for i in range(L):
        xa = Xof("bfv-ksk-a", seed, label, i)
        a = np.stack([xa.uniform_mod(q, n) for q in ext_primes])
        e = _gaussian_ntt(params, Xof("bfv-ksk-e", seed, label, i), tix)
        b = K.neg_rows(K.mul_rows(a, sk.ntt, tix, t.qs, t.qf), tix, t.qs)
        b = K.add_rows(b, e, tix, t.qs)
        gadget = K.scalar_mul_rows(target[i:i + 1], lt.p_mod_q[i:i + 1], tix[i:i + 1], t.qs, t.qf)
        b[i] = K.add_rows(b[i:i + 1], gadget, tix[i:i + 1], t.qs)[0]
        out[i, 0] = b
        out[i, 1] = a
    return out


def keygen(params: HeParams, rotation_steps: Iterable[int] = (), seed=None) -> HeKeys:
    """Secret, public, relinearisation and Galois keys; deterministic under ``seed``."""
    seed = as_seed(seed)
    n = params.degree
    half = n // 2
    steps = sorted({int(s) for s in rotation_steps})
    for s in steps:
        if not -half < s < half:
            raise ParameterError(f"rotation step {s} outside (-N/2, N/2)")
    t = params.tables
    lt = params.level(params.max_level)
    tix = lt.tix_ext

    small = sample_small("ternary", n, Xof("bfv-secret", seed))
    s_ntt = K.signed_to_rows(small, tix, t.qs)
    t.forward(s_ntt, tix)
    sk = SecretKey(params, small, s_ntt)

    q_tix = lt.tix_q
    xa = Xof("bfv-pk-a", seed)
    a = np.stack([xa.uniform_mod(q, n) for q in params.q_primes])
    e = _gaussian_ntt(params, Xof("bfv-pk-e", seed), q_tix)
    b = K.add_rows(K.neg_rows(K.mul_rows(a, s_ntt[:-1], q_tix, t.qs, t.qf), q_tix, t.qs), e, q_tix, t.qs)
    pk = PublicKey(params, np.stack([b, a]))

    s2 = K.mul_rows(s_ntt, s_ntt, tix, t.qs, t.qf)
    relin = KeySwitchKey(params, _ksk(params, sk, s2, seed, "relin"), 0)

    keys: dict[int, KeySwitchKey] = {}
    for s in steps:
        g = galois_element(params, s)
        if g == 1 or g in keys:
            continue
        target = s_ntt[:, ntt_permutation(n, g)]
        raw = _ksk(params, sk, target, seed, f"galois-{g}")
        ginv = pow(g, -1, 2 * n)
        # stored pre-permuted so rotations can decompose the unpermuted input
        keys[g] = KeySwitchKey(params, np.ascontiguousarray(raw[..., ntt_permutation(n, ginv)]), g)
    return HeKeys(sk, pk, relin, GaloisKeys(params, keys), tuple(steps))
