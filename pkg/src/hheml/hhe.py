"""Hybrid encryption: symmetric data, BFV-encrypted key, homomorphic transciphering.

Slot layout.  With cipher width ``t`` every ciphertext handled here holds a
vector of period ``w = 2t`` replicated across all N slots.  A rotation of such
a vector is then a cyclic shift inside each period, which is what the
diagonal method needs.  The encrypted key holds ``K_L || K_R`` in every
period; a transciphered block holds ``x`` in the first ``len`` slots of
every period and zeros in the rest.

Matrix-vector products use baby-step/giant-step diagonals: the ``g - 1``
baby rotations share one key-switching decomposition and each giant step
costs one further rotation.  No step is skipped on data-dependent grounds,
so operation counts depend only on the number of blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DepthExhaustedError, DomainError, ParameterError
from .he.encoder import PeriodicEncoder
from .he.evaluator import Ciphertext, Evaluator
from .he.keys import EvaluationKey, HeKeys, PublicKey, SecretKey, keygen
from .he.params import HeParams, get_profile
from .pasta import (CipherProfile, SymCiphertext, SymKey, fresh_nonce, gen_affine,
                    get_cipher_profile, ske_enc, ske_gen)
from .xof import as_seed, derive_seed


def bsgs_split(width: int) -> tuple[int, int]:
    """(baby, giant) with baby the smallest power of two >= sqrt(2 * width)."""
    g = 1
    while g * g < 2 * width:
        g *= 2
    g = min(g, width)
    return g, width // g


@dataclass(frozen=True)
class HheProfile:
    """A cipher profile paired with BFV parameters."""

    cipher: CipherProfile
    he: HeParams

    def __post_init__(self):
        if self.cipher.p != self.he.p:
            raise ParameterError("cipher prime differs from the HE plaintext modulus")
        if (self.he.degree // 2) % self.width:
            raise ParameterError("period 2t must divide N/2")

    @property
    def width(self) -> int:
        return 2 * self.cipher.t

    @property
    def baby(self) -> int:
        return bsgs_split(self.width)[0]

    @property
    def giant(self) -> int:
        return bsgs_split(self.width)[1]

    @property
    def max_rows(self) -> int:
        """Linear-layer outputs that fit in one ciphertext (one per period)."""
        return self.he.degree // self.width

    def fold_steps(self) -> list[int]:
        steps, s = [], self.width // 2
        while s >= 1:
            steps.append(s)
            s //= 2
        return steps

    def rotation_steps(self) -> list[int]:
        g, h = self.baby, self.giant
        steps = set(range(1, g)) | {g * j for j in range(1, h)} | set(self.fold_steps()) | {-1}
        return sorted(steps)

    def decomp_depth(self) -> int:
        # one square per Feistel round, square + product for the cube
        return (self.cipher.rounds - 1) + 2

    @property
    def name(self) -> str:
        return f"{self.cipher.name}@{self.he.name}"


def make_profile(cipher: str = "test", he: str = "test-8192") -> HheProfile:
    return HheProfile(get_cipher_profile(cipher), get_profile(he))


@dataclass(frozen=True)
class HheKeyBundle:
    he_keys: HeKeys
    profile: HheProfile

    @property
    def evk(self) -> EvaluationKey:
        return self.he_keys.evk

    @property
    def public_key(self) -> PublicKey:
        return self.he_keys.public_key

    @property
    def secret_key(self) -> SecretKey:
        return self.he_keys.secret_key


@dataclass(frozen=True)
class EncryptedSymKey:
    ct: Ciphertext
    cipher: CipherProfile


@dataclass(frozen=True)
class TranscipheredInput:
    ct: Ciphertext
    nonce: bytes
    block: int
    length: int


def periodic_encoder(ev: Evaluator, profile: HheProfile) -> PeriodicEncoder:
    return ev.encoder.periodic(profile.he.degree // (2 * profile.width))


def hhe_keygen(profile: HheProfile, seed=None) -> HheKeyBundle:
    if profile.he.max_level < profile.decomp_depth():
        raise ParameterError("parameter chain too short for transciphering")
    keys = keygen(profile.he, profile.rotation_steps(), seed=derive_seed(as_seed(seed), "hhe-keygen"))
    return HheKeyBundle(keys, profile)


def encrypt_sym_key(ev: Evaluator, pk: PublicKey, key: SymKey, profile: HheProfile, seed=None) -> EncryptedSymKey:
    pt = periodic_encoder(ev, profile).encode(np.asarray(key.words, dtype=np.int64))
    return EncryptedSymKey(ev.encrypt(pk, pt, seed), profile.cipher)


def hhe_enc(ev: Evaluator, pk: PublicKey, profile: HheProfile, x, seed=None
            ) -> tuple[SymCiphertext, EncryptedSymKey]:
    """Fresh symmetric key, symmetric encryption of ``x`` and the HE-encrypted key.

    The symmetric key itself is not returned.
    """
    x = np.asarray(x, dtype=np.int64).ravel()
    if x.size == 0:
        raise DomainError("cannot encrypt an empty vector")
    seed = as_seed(seed)
    key = ske_gen(profile.cipher, derive_seed(seed, "ske-gen"))
    nonce = fresh_nonce(derive_seed(seed, "nonce"))
    c = ske_enc(key, nonce, x, profile.cipher)
    ck = encrypt_sym_key(ev, pk, key, profile, derive_seed(seed, "key-enc"))
    return c, ck


def _mix_affine(profile: HheProfile, nonce: bytes, block: int, rnd: int) -> tuple[np.ndarray, np.ndarray]:
    """Mix composed with the two branch affine layers, as one 2t x 2t map."""
    p = profile.cipher.p
    m0, c0 = gen_affine(profile.cipher, nonce, block, rnd, 0)
    m1, c1 = gen_affine(profile.cipher, nonce, block, rnd, 1)
    top = np.concatenate([2 * m0, m1], axis=1) % p
    bottom = np.concatenate([m0, 2 * m1], axis=1) % p
    mat = np.concatenate([top, bottom], axis=0)
    const = np.concatenate([(2 * c0 + c1) % p, (c0 + 2 * c1) % p])
    return mat, const


def _shift_rows(mat: np.ndarray, t: int) -> np.ndarray:
    """Rows moved down by one inside each branch, first row of each branch zero."""
    out = np.zeros_like(mat)
    for start in (0, t):
        out[start + 1:start + t] = mat[start:start + t - 1]
    return out


@dataclass
class Transcipherer:
    """Server-side transciphering and linear-layer evaluation.

    Holds only public material: the evaluation key and the parameters.
    """

    profile: HheProfile
    evk: EvaluationKey
    ev: Evaluator = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.evk.params is not self.profile.he:
            raise ParameterError("evaluation key does not match the profile")
        if self.ev is None:
            self.ev = Evaluator(self.profile.he)
        self.enc = periodic_encoder(self.ev, self.profile)

    # -- diagonal method -----------------------------------------------------

    def _diagonals(self, mat: np.ndarray, j: int) -> np.ndarray:
        """Pre-rotated diagonals of giant step ``j`` (shape (baby, width))."""
        w = self.profile.width
        g = self.profile.baby
        s = np.arange(w)
        rows = (s - g * j) % w
        return np.stack([mat[rows, (s + i) % w] for i in range(g)])

    def _matvec(self, babies: Sequence[Ciphertext], mats: Sequence[np.ndarray]) -> list[Ciphertext]:
        ev = self.ev
        g, h = self.profile.baby, self.profile.giant
        level = babies[0].level
        outs = []
        for mat in mats:
            total = None
            for j in range(h):
                lifted = self.enc.lift_mul_batch(self._diagonals(mat, j), level)
                acc = None
                for i in range(g):
                    acc = ev.mul_plain_acc(acc, babies[i], lifted[i])
                inner = Ciphertext(self.profile.he, acc, level)
                if j:
                    inner = ev.rotate(inner, g * j, self.evk.galois)
                total = inner if total is None else ev.add(total, inner)
            outs.append(total)
        return outs

    def _babies(self, ct: Ciphertext) -> list[Ciphertext]:
        return self.ev.rotate_many(ct, range(self.profile.baby), self.evk.galois)

    def _add_const(self, ct: Ciphertext, vec: np.ndarray) -> Ciphertext:
        lifted = self.enc.lift_scaled_batch(vec.reshape(1, -1), ct.level)[0]
        return self.ev.add_plain_lifted(ct, lifted)

    # -- transciphering ------------------------------------------------------

    def keystream_ct(self, ck: EncryptedSymKey, nonce: bytes, block: int, length: int | None = None) -> Ciphertext:
        """Homomorphic keystream block; rows at or beyond ``length`` are zeroed."""
        prof = self.profile
        t = prof.cipher.t
        length = t if length is None else length
        if not 1 <= length <= t:
            raise ParameterError(f"block length must lie in [1, {t}]")
        if ck.cipher != prof.cipher:
            raise ParameterError("encrypted key belongs to another cipher profile")
        ev = self.ev
        relin = self.evk.relin
        rounds = prof.cipher.rounds
        if ck.ct.level < prof.decomp_depth():
            raise DepthExhaustedError("encrypted key has too few levels left for transciphering")
        state = ck.ct
        for rnd in range(1, rounds):
            mat, const = _mix_affine(prof, nonce, block, rnd)
            y, ys = self._matvec(self._babies(state), [mat, _shift_rows(mat, t)])
            y = self._add_const(y, const)
            shifted_const = np.zeros_like(const)
            shifted_const[1:t] = const[: t - 1]
            shifted_const[t + 1:] = const[t:-1]
            ys = self._add_const(ys, shifted_const)
            state = ev.add(ev.mod_switch(y), ev.square(ys, relin))
        mat, const = _mix_affine(prof, nonce, block, rounds)
        (y,) = self._matvec(self._babies(state), [mat])
        y = self._add_const(y, const)
        state = ev.mul(ev.square(y, relin), ev.mod_switch(y), relin)
        mat, const = _mix_affine(prof, nonce, block, rounds + 1)
        keep = np.zeros(prof.width, dtype=bool)
        keep[:length] = True
        mat = np.where(keep[:, None], mat, 0)
        const = np.where(keep, const, 0)
        (z,) = self._matvec(self._babies(state), [mat])
        return self._add_const(z, const)

    def decomp_block(self, c: SymCiphertext, ck: EncryptedSymKey, block: int) -> TranscipheredInput:
        words = c.block(block)
        z = self.keystream_ct(ck, c.nonce, block, words.size)
        padded = np.zeros(self.profile.width, dtype=np.int64)
        padded[: words.size] = words
        out = self._add_const(self.ev.negate(z), padded)
        return TranscipheredInput(out, c.nonce, block, int(words.size))

    def decomp(self, c: SymCiphertext, ck: EncryptedSymKey) -> list[TranscipheredInput]:
        """One BFV ciphertext per symmetric block, each decrypting to that block."""
        if c.profile != self.profile.cipher:
            raise ParameterError("symmetric ciphertext belongs to another cipher profile")
        return [self.decomp_block(c, ck, j) for j in range(c.block_count)]

    # -- linear layer --------------------------------------------------------

    def eval_linear(self, model: "ModelCiphertexts", inputs: Sequence[TranscipheredInput]) -> Ciphertext:
        """Score of output row r lands in slot r * 2t of the result."""
        ev = self.ev
        if len(model.c_w) != len(inputs):
            raise ParameterError(f"model expects {len(model.c_w)} blocks, got {len(inputs)}")
        if not inputs:
            raise ParameterError("no inputs")
        level = inputs[0].ct.level
        for x in inputs:
            if x.ct.level != level:
                raise ParameterError("input blocks at different levels")
        if level == 0:
            raise DepthExhaustedError("inputs have no multiplicative level left")
        acc = None
        for cw, x in zip(model.c_w, inputs):
            prod = ev.mul(ev.mod_switch_to(cw, level), x.ct, self.evk.relin)
            acc = prod if acc is None else ev.add(acc, prod)
        for step in self.profile.fold_steps():
            acc = ev.add(acc, ev.rotate(acc, step, self.evk.galois))
        return ev.add(acc, ev.mod_switch_to(model.c_b, acc.level))


@dataclass(frozen=True)
class LinearLayerCircuit:
    """Integer fully connected layer ``scores = W x + b`` evaluated mod p."""

    weights: np.ndarray   # (out_dim, in_dim)
    bias: np.ndarray      # (out_dim,)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.int64)
        b = np.asarray(self.bias, dtype=np.int64).ravel()
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ParameterError("weights must be (out, in) and bias (out,)")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class ModelCiphertexts:
    """Encrypted weights (one ciphertext per input block) and bias."""

    c_w: list[Ciphertext]
    c_b: Ciphertext


def model_layout(circuit: LinearLayerCircuit, profile: HheProfile) -> tuple[list[np.ndarray], np.ndarray]:
    """Slot vectors for the weight ciphertexts and the bias ciphertext."""
    p = profile.he.p
    t, w, n = profile.cipher.t, profile.width, profile.he.degree
    if circuit.out_dim > profile.max_rows:
        raise ParameterError(f"at most {profile.max_rows} output rows fit")
    blocks = -(-circuit.in_dim // t)
    weight_vecs = []
    for j in range(blocks):
        v = np.zeros(n, dtype=np.int64)
        cols = circuit.weights[:, j * t:(j + 1) * t] % p
        for r in range(circuit.out_dim):
            v[r * w:r * w + cols.shape[1]] = cols[r]
        weight_vecs.append(v)
    b = np.zeros(n, dtype=np.int64)
    b[np.arange(circuit.out_dim) * w] = circuit.bias % p
    return weight_vecs, b


def encrypt_model(ev: Evaluator, pk: PublicKey, circuit: LinearLayerCircuit, profile: HheProfile,
                  seed=None) -> ModelCiphertexts:
    seed = as_seed(seed)
    weight_vecs, b = model_layout(circuit, profile)
    c_w = [ev.encrypt_values(pk, v, derive_seed(seed, "w", j)) for j, v in enumerate(weight_vecs)]
    return ModelCiphertexts(c_w, ev.encrypt_values(pk, b, derive_seed(seed, "b")))


def hhe_dec(ev: Evaluator, sk: SecretKey, ct: Ciphertext) -> np.ndarray:
    """All slots; raises when the noise budget is exhausted."""
    return ev.decrypt_values(sk, ct, strict=True)


def block_values(slots: np.ndarray, length: int) -> np.ndarray:
    return slots[:length]


def scores_from_slots(slots: np.ndarray, out_dim: int, profile: HheProfile) -> np.ndarray:
    return slots[np.arange(out_dim) * profile.width]


def hhe_decomp(profile: HheProfile, evk: EvaluationKey, c: SymCiphertext, ck: EncryptedSymKey,
               ev: Evaluator | None = None) -> list[TranscipheredInput]:
    return Transcipherer(profile, evk, ev).decomp(c, ck)


def hhe_eval(profile: HheProfile, evk: EvaluationKey, model: ModelCiphertexts,
             inputs: Sequence[TranscipheredInput], ev: Evaluator | None = None) -> Ciphertext:
    return Transcipherer(profile, evk, ev).eval_linear(model, inputs)
