"""BFV encryption, decryption and homomorphic operations.

Ciphertext components are kept in NTT form over the limbs of their level.
Level policy: a ciphertext-ciphertext product is relinearised and then
rescaled by its last limb, so it lands one level lower; additions, plaintext
products and rotations keep the level.  Products are computed with the
scale-and-round tensoring over an auxiliary RNS basis.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from math import floor, log2
from typing import Iterable, Sequence

import numpy as np

from .. import _kernels as K
from ..errors import (DepthExhaustedError, LevelError, MissingKeyError,
                      NoiseBudgetError, ParameterError)
from ..ring import sample_small
from ..xof import Xof, as_seed
from .encoder import BatchedPlaintext, BatchEncoder
from .keys import (EvaluationKey, GaloisKeys, KeySwitchKey, PublicKey,
                   SecretKey, galois_element, ntt_permutation)
from .params import HeParams


class Ciphertext:
    """Two or three NTT-form components over limbs ``q_0 .. q_level``."""

    __slots__ = ("params", "data", "level")

    def __init__(self, params: HeParams, data: np.ndarray, level: int):
        if data.ndim != 3 or data.shape[0] not in (2, 3) or data.shape[1:] != (level + 1, params.degree):
            raise ParameterError(f"ciphertext array shape {data.shape} inconsistent with level {level}")
        data.setflags(write=False)
        self.params = params
        self.data = data
        self.level = level

    @property
    def size(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        return f"Ciphertext(size={self.size}, level={self.level}, N={self.params.degree})"


@dataclass
class OpCounter:
    """Homomorphic operation tallies."""

    ct_ct_mul: int = 0
    ct_pt_mul: int = 0
    rotations: int = 0
    key_switches: int = 0
    additions: int = 0
    plain_additions: int = 0
    mod_switches: int = 0

    def snapshot(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def reset(self) -> None:
        for f in fields(self):
            setattr(self, f.name, 0)


def diff_counts(after: dict[str, int], before: dict[str, int]) -> dict[str, int]:
    return {k: after[k] - before.get(k, 0) for k in after}


class Evaluator:
    """Stateless-by-value BFV operations over one parameter set.

    Only operation counters are mutated; keys are passed explicitly so the
    same evaluator can serve any key holder.
    """

    def __init__(self, params: HeParams):
        self.params = params
        self.encoder = BatchEncoder(params)
        self.counter = OpCounter()

    # -- helpers -------------------------------------------------------------

    @property
    def _t(self):
        return self.params.tables

    def _check(self, *cts: Ciphertext) -> None:
        level = cts[0].level
        for ct in cts:
            if ct.params is not self.params:
                raise ParameterError("ciphertext belongs to a different parameter set")
            if ct.level != level:
                raise LevelError(f"level mismatch: {ct.level} vs {level}")

    def _rows(self, ct: Ciphertext):
        """Flattened (size*(level+1), N) view plus a matching tix."""
        k = ct.level + 1
        return ct.data.reshape(-1, self.params.degree), np.tile(np.arange(k, dtype=np.int64), ct.size)

    def _wrap(self, arr: np.ndarray, level: int) -> Ciphertext:
        return Ciphertext(self.params, arr.reshape(-1, level + 1, self.params.degree), level)

    # -- encryption ----------------------------------------------------------

    def encrypt(self, pk: PublicKey, pt: BatchedPlaintext, seed=None) -> Ciphertext:
        """Public-key encryption at the top level; ``seed`` fixes the randomness."""
        if pk.params is not self.params or pt.params is not self.params:
            raise ParameterError("key or plaintext belongs to a different parameter set")
        seed = as_seed(seed)
        top = self.params.max_level
        lt = self.params.level(top)
        t = self._t
        n = self.params.degree
        u = K.signed_to_rows(sample_small("ternary", n, Xof("bfv-enc-u", seed)), lt.tix_q, t.qs)
        e0 = K.signed_to_rows(sample_small("gaussian", n, Xof("bfv-enc-e0", seed)), lt.tix_q, t.qs)
        e1 = K.signed_to_rows(sample_small("gaussian", n, Xof("bfv-enc-e1", seed)), lt.tix_q, t.qs)
        t.forward(u, lt.tix_q)
        t.forward(e0, lt.tix_q)
        t.forward(e1, lt.tix_q)
        c0 = K.add_rows(K.mul_rows(pk.data[0], u, lt.tix_q, t.qs, t.qf), e0, lt.tix_q, t.qs)
        c0 = K.add_rows(c0, self.encoder.lift_scaled(pt, top), lt.tix_q, t.qs)
        c1 = K.add_rows(K.mul_rows(pk.data[1], u, lt.tix_q, t.qs, t.qf), e1, lt.tix_q, t.qs)
        return Ciphertext(self.params, np.stack([c0, c1]), top)

    def encrypt_values(self, pk: PublicKey, values, seed=None) -> Ciphertext:
        return self.encrypt(pk, self.encoder.encode(values), seed)

    def trivial(self, pt: BatchedPlaintext, level: int) -> Ciphertext:
        """Noiseless encryption (c0 = scaled message, c1 = 0); public data only."""
        c0 = self.encoder.lift_scaled(pt, level)
        return Ciphertext(self.params, np.stack([c0, np.zeros_like(c0)]), level)

    def _phase(self, sk: SecretKey, ct: Ciphertext) -> np.ndarray:
        """c0 + c1*s (+ c2*s^2) in coefficient form over the ciphertext limbs."""
        lt = self.params.level(ct.level)
        t = self._t
        s = np.ascontiguousarray(sk.ntt[: ct.level + 1])
        acc = ct.data[0].copy()
        spow = s
        for i in range(1, ct.size):
            K.mul_rows_acc(acc, ct.data[i], spow, lt.tix_q, t.qs, t.qf)
            if i + 1 < ct.size:
                spow = K.mul_rows(spow, s, lt.tix_q, t.qs, t.qf)
        t.inverse(acc, lt.tix_q)
        return acc

    def decrypt(self, sk: SecretKey, ct: Ciphertext, strict: bool = False) -> BatchedPlaintext:
        """Plaintext polynomial; with ``strict`` an exhausted budget raises."""
        self._check(ct)
        lt = self.params.level(ct.level)
        t = self._t
        phase = self._phase(sk, ct)
        coeffs, worst = K.scale_round_to_plain(phase, lt.tix_q, t.qs, t.qf, lt.qhat_inv, lt.p_over_q, self.params.p)
        if strict and worst >= 0.25:
            raise NoiseBudgetError("noise budget exhausted; decryption is unreliable")
        return BatchedPlaintext(self.params, coeffs)

    def decrypt_values(self, sk: SecretKey, ct: Ciphertext, strict: bool = False) -> np.ndarray:
        return self.encoder.decode(self.decrypt(sk, ct, strict))

    def noise_budget(self, sk: SecretKey, ct: Ciphertext) -> int:
        """Whole bits of log2(Q) - log2(max |[p * phase]_Q|) - 1, clamped at 0."""
        self._check(ct)
        lt = self.params.level(ct.level)
        phase = self._phase(sk, ct)
        qs = self.params.q_primes[: ct.level + 1]
        big = self.params.modulus_at(ct.level)
        acc = np.zeros(self.params.degree, dtype=object)
        for i, q in enumerate(qs):
            hat = big // q
            acc = acc + ((phase[i].astype(object) * int(lt.qhat_inv[i])) % q) * hat
        p = self.params.p
        worst = 0
        for v in acc:
            w = (int(v) * p) % big
            w = min(w, big - w)
            if w > worst:
                worst = w
        if worst == 0:
            return int(floor(log2(big))) - 1
        return max(0, int(floor(log2(big) - log2(worst) - 1)))

    # -- linear operations ---------------------------------------------------

    def _binary(self, a: Ciphertext, b: Ciphertext, kernel) -> Ciphertext:
        self._check(a, b)
        size = max(a.size, b.size)
        n = self.params.degree
        k = a.level + 1
        out = np.zeros((size, k, n), dtype=np.int64)
        tix = np.arange(k, dtype=np.int64)
        for i in range(size):
            if i < a.size and i < b.size:
                out[i] = kernel(a.data[i], b.data[i], tix, self._t.qs)
            elif i < a.size:
                out[i] = a.data[i]
            else:
                out[i] = kernel(np.zeros_like(b.data[i]), b.data[i], tix, self._t.qs)
        self.counter.additions += 1
        return Ciphertext(self.params, out, a.level)

    def add(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        return self._binary(a, b, K.add_rows)

    def sub(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        return self._binary(a, b, K.sub_rows)

    def add_many(self, cts: Sequence[Ciphertext]) -> Ciphertext:
        out = cts[0]
        for ct in cts[1:]:
            out = self.add(out, ct)
        return out

    def negate(self, a: Ciphertext) -> Ciphertext:
        self._check(a)
        rows, tix = self._rows(a)
        return self._wrap(K.neg_rows(rows, tix, self._t.qs), a.level)

    def add_plain_lifted(self, a: Ciphertext, scaled: np.ndarray) -> Ciphertext:
        self._check(a)
        tix = np.arange(a.level + 1, dtype=np.int64)
        out = a.data.copy()
        out[0] = K.add_rows(a.data[0], scaled, tix, self._t.qs)
        self.counter.plain_additions += 1
        return Ciphertext(self.params, out, a.level)

    def add_plain(self, a: Ciphertext, pt: BatchedPlaintext) -> Ciphertext:
        return self.add_plain_lifted(a, self.encoder.lift_scaled(pt, a.level))

    def sub_plain(self, a: Ciphertext, pt: BatchedPlaintext) -> Ciphertext:
        tix = np.arange(a.level + 1, dtype=np.int64)
        neg = K.neg_rows(self.encoder.lift_scaled(pt, a.level), tix, self._t.qs)
        return self.add_plain_lifted(a, neg)

    def mul_plain_lifted(self, a: Ciphertext, lifted: np.ndarray) -> Ciphertext:
        self._check(a)
        k = a.level + 1
        tix = np.arange(k, dtype=np.int64)
        out = np.empty_like(a.data)
        for i in range(a.size):
            out[i] = K.mul_rows(a.data[i], lifted, tix, self._t.qs, self._t.qf)
        self.counter.ct_pt_mul += 1
        return Ciphertext(self.params, out, a.level)

    def mul_plain(self, a: Ciphertext, pt: BatchedPlaintext) -> Ciphertext:
        return self.mul_plain_lifted(a, self.encoder.lift_mul(pt, a.level))

    def mul_plain_acc(self, acc: np.ndarray | None, a: Ciphertext, lifted: np.ndarray) -> np.ndarray:
        """acc + a * lifted as a raw (size, k, N) array (for inner products)."""
        k = a.level + 1
        tix = np.arange(k, dtype=np.int64)
        if acc is None:
            acc = np.zeros_like(a.data)
        for i in range(a.size):
            K.mul_rows_acc(acc[i], a.data[i], lifted, tix, self._t.qs, self._t.qf)
        self.counter.ct_pt_mul += 1
        return acc

    # -- modulus switching ---------------------------------------------------

    def _drop_last(self, data: np.ndarray, level: int) -> np.ndarray:
        """Rounded division of every component by q_level."""
        t = self._t
        lt = self.params.level(level)
        q_last = self.params.q_primes[level]
        keep = lt.tix_q[:-1]
        out = np.empty((data.shape[0], level, self.params.degree), dtype=np.int64)
        one = np.array([level], dtype=np.int64)
        for c in range(data.shape[0]):
            last = data[c, level:level + 1].copy()
            t.inverse(last, one)
            lifted = K.lift_centered_rows(last[0], q_last, keep, t.qs)
            t.forward(lifted, keep)
            out[c] = K.divide_round_last(data[c, :level], lifted, keep, t.qs, t.qf, lt.last_inv_mod_q)
        return out

    def mod_switch(self, a: Ciphertext) -> Ciphertext:
        """Drop the last limb (level - 1), preserving the message."""
        self._check(a)
        if a.level == 0:
            raise DepthExhaustedError("cannot switch below level 0")
        self.counter.mod_switches += 1
        return Ciphertext(self.params, self._drop_last(a.data, a.level), a.level - 1)

    def mod_switch_to(self, a: Ciphertext, level: int) -> Ciphertext:
        if level > a.level:
            raise LevelError(f"cannot raise level {a.level} to {level}")
        while a.level > level:
            a = self.mod_switch(a)
        return a

    def match_levels(self, *cts: Ciphertext) -> list[Ciphertext]:
        low = min(c.level for c in cts)
        return [self.mod_switch_to(c, low) for c in cts]

    # -- key switching -------------------------------------------------------

    def _decompose(self, c_ntt: np.ndarray, level: int, coef: np.ndarray | None = None) -> np.ndarray:
        """Digits of a polynomial, each in NTT form over q_0..q_level, P."""
        t = self._t
        lt = self.params.level(level)
        if coef is None:
            coef = c_ntt.copy()
            t.inverse(coef, lt.tix_q)
        digits = K.decompose_digits(coef, c_ntt, lt.tix_q, lt.tix_ext, t.qs)
        K.ntt_forward_skip_diag(digits, lt.tix_ext, t.qs, t.psi, t.psif)
        return digits

    def _apply_key(self, digits: np.ndarray, key: KeySwitchKey, level: int) -> np.ndarray:
        """Inner product with the key followed by rounded division by P."""
        t = self._t
        lt = self.params.level(level)
        acc = K.keyswitch_mac(digits, key.data, lt.tix_ext, lt.kmap, t.qs, t.qf)
        out = np.empty((2, level + 1, self.params.degree), dtype=np.int64)
        one = np.array([self.params.special_tix], dtype=np.int64)
        for c in range(2):
            last = acc[c, level + 1:level + 2].copy()
            t.inverse(last, one)
            lifted = K.lift_centered_rows(last[0], self.params.special_prime, lt.tix_q, t.qs)
            t.forward(lifted, lt.tix_q)
            out[c] = K.divide_round_last(acc[c, :level + 1], lifted, lt.tix_q, t.qs, t.qf, lt.p_inv_mod_q)
        self.counter.key_switches += 1
        return out

    def relinearize(self, a: Ciphertext, relin: KeySwitchKey, coef2: np.ndarray | None = None) -> Ciphertext:
        self._check(a)
        if a.size == 2:
            return a
        digits = self._decompose(np.ascontiguousarray(a.data[2]), a.level, coef2)
        ks = self._apply_key(digits, relin, a.level)
        tix = np.arange(a.level + 1, dtype=np.int64)
        c0 = K.add_rows(a.data[0], ks[0], tix, self._t.qs)
        c1 = K.add_rows(a.data[1], ks[1], tix, self._t.qs)
        return Ciphertext(self.params, np.stack([c0, c1]), a.level)

    def _galois_key(self, galois: GaloisKeys, step: int) -> KeySwitchKey:
        g = galois_element(self.params, step)
        key = galois.keys.get(g)
        if key is None:
            raise MissingKeyError(f"no Galois key for rotation step {step}")
        return key

    def rotate(self, a: Ciphertext, step: int, galois: GaloisKeys) -> Ciphertext:
        """Rotate both slot rows left by ``step`` (slot i receives slot i+step)."""
        return self.rotate_many(a, [step], galois)[0]

    def rotate_many(self, a: Ciphertext, steps: Iterable[int], galois: GaloisKeys) -> list[Ciphertext]:
        """Several rotations of one ciphertext sharing a single decomposition."""
        self._check(a)
        if a.size != 2:
            raise ParameterError("relinearise before rotating")
        steps = list(steps)
        out: list[Ciphertext | None] = [None] * len(steps)
        todo = []
        for i, s in enumerate(steps):
            if galois_element(self.params, s) == 1:
                out[i] = a
            else:
                todo.append((i, self._galois_key(galois, s)))
        if todo:
            digits = self._decompose(np.ascontiguousarray(a.data[1]), a.level)
            tix = np.arange(a.level + 1, dtype=np.int64)
            n = self.params.degree
            for i, key in todo:
                ks = self._apply_key(digits, key, a.level)
                ks[0] = K.add_rows(ks[0], a.data[0], tix, self._t.qs)
                perm = ntt_permutation(n, key.galois_elt)
                out[i] = Ciphertext(self.params, np.ascontiguousarray(ks[:, :, perm]), a.level)
                self.counter.rotations += 1
        return out  # type: ignore[return-value]

    # -- multiplication ------------------------------------------------------

    def _to_aux(self, coef: np.ndarray, level: int) -> np.ndarray:
        t = self._t
        lt = self.params.level(level)
        out = K.base_convert_exact(coef, lt.tix_q, lt.tix_b, t.qs, t.qf, lt.q_hat_inv, lt.q_hat_mod_b, lt.q_mod_b)
        t.forward(out, lt.tix_b)
        return out

    def mul(self, a: Ciphertext, b: Ciphertext, relin: KeySwitchKey | None) -> Ciphertext:
        """Slotwise product; relinearised (when a key is given) and rescaled."""
        self._check(a, b)
        if a.size != 2 or b.size != 2:
            raise ParameterError("operands must have two components")
        level = a.level
        if level == 0:
            raise DepthExhaustedError("no multiplicative level left")
        t = self._t
        lt = self.params.level(level)
        tq, tb = lt.tix_q, lt.tix_b
        square = a is b

        def lift(ct):
            coef = ct.data.reshape(-1, self.params.degree).copy()
            t.inverse(coef, np.tile(tq, 2))
            coef = coef.reshape(2, level + 1, -1)
            return ct.data, np.stack([self._to_aux(coef[i], level) for i in range(2)])

        aq, ab = lift(a)
        bq, bb = (aq, ab) if square else lift(b)

        def tensor(x, y, tix):
            d0 = K.mul_rows(x[0], y[0], tix, t.qs, t.qf)
            d2 = K.mul_rows(x[1], y[1], tix, t.qs, t.qf)
            if square:
                d1 = K.mul_rows(x[0], y[1], tix, t.qs, t.qf)
                d1 = K.add_rows(d1, d1, tix, t.qs)
            else:
                d1 = K.mul_rows(x[0], y[1], tix, t.qs, t.qf)
                K.mul_rows_acc(d1, x[1], y[0], tix, t.qs, t.qf)
            return [d0, d1, d2]

        dq = tensor(aq, bq, tq)
        db = tensor(ab, bb, tb)
        res_coef = []
        for xq, xb in zip(dq, db):
            t.inverse(xq, tq)
            t.inverse(xb, tb)
            rb = K.scale_round_to_aux(xq, xb, tq, tb, t.qs, t.qf, lt.dhat_inv_q, lt.dhat_inv_b,
                                      lt.omega, lt.theta, lt.own_b)
            res_coef.append(K.base_convert_exact(rb, tb, tq, t.qs, t.qf, lt.b_hat_inv, lt.b_hat_mod_q, lt.b_mod_q))
        res = np.stack(res_coef)
        coef2 = res[2].copy()
        flat = res.reshape(-1, self.params.degree)
        t.forward(flat, np.tile(tq, 3))
        ct3 = Ciphertext(self.params, flat.reshape(3, level + 1, -1), level)
        self.counter.ct_ct_mul += 1
        if relin is None:
            return ct3
        ct2 = self.relinearize(ct3, relin, coef2)
        return self.mod_switch(ct2)

    def square(self, a: Ciphertext, relin: KeySwitchKey | None) -> Ciphertext:
        return self.mul(a, a, relin)


def rotate_plain(values: np.ndarray, step: int) -> np.ndarray:
    """Reference slot rotation: each row of the 2 x N/2 matrix shifts left."""
    v = np.asarray(values)
    half = v.size // 2
    return np.concatenate([np.roll(v[:half], -step), np.roll(v[half:], -step)])


def evaluation_key_of(keys) -> EvaluationKey:
    return keys.evk
