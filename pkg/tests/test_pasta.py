import struct

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from hheml.errors import DomainError, ParameterError, SerializationError
from hheml.pasta import (CIPHER_PROFILES, NONCE_BYTES, draw_words, fresh_nonce, gen_affine,
                         get_cipher_profile, keystream, rank_mod_p, serialize_sym,
                         deserialize_sym, ske_dec, ske_enc, ske_gen, sym_header_size)
from hheml.xof import Xof

P = 65537
TEST = get_cipher_profile("test")


def interpreted_keystream(key_words, nonce, block, profile):
    """Pure-Python interpreter of the round structure, list arithmetic only."""
    p, t = profile.p, profile.t
    left = [int(v) for v in key_words[:t]]
    right = [int(v) for v in key_words[t:]]

    def affine(state, rnd, branch):
        mat, const = gen_affine(profile, nonce, block, rnd, branch)
        return [(sum(int(mat[i][j]) * state[j] for j in range(t)) + int(const[i])) % p for i in range(t)]

    for rnd in range(1, profile.rounds + 2):
        left, right = affine(left, rnd, 0), affine(right, rnd, 1)
        left, right = ([(2 * a + b) % p for a, b in zip(left, right)],
                       [(a + 2 * b) % p for a, b in zip(left, right)])
        if rnd == profile.rounds + 1:
            break
        if rnd < profile.rounds:
            left = [left[0]] + [(left[j] + left[j - 1] ** 2) % p for j in range(1, t)]
            right = [right[0]] + [(right[j] + right[j - 1] ** 2) % p for j in range(1, t)]
        else:
            left = [v ** 3 % p for v in left]
            right = [v ** 3 % p for v in right]
    return left


@pytest.mark.parametrize("name", sorted(CIPHER_PROFILES))
def test_keystream_matches_interpreter(name):
    prof = get_cipher_profile(name)
    key = ske_gen(prof, seed=3)
    nonce = fresh_nonce(4)
    for block in (0, 1):
        assert keystream(key, nonce, block, prof).tolist() == interpreted_keystream(key.words, nonce, block, prof)


@settings(max_examples=25)
@given(st.lists(st.integers(0, P - 1), min_size=1, max_size=100), st.integers(0, 2**32))
def test_encrypt_decrypt_round_trip(words, seed):
    key = ske_gen(TEST, seed)
    c = ske_enc(key, fresh_nonce(seed), words, TEST)
    assert c.count == len(words)
    assert c.block_count == -(-len(words) // TEST.t)
    assert ske_dec(key, c).tolist() == words


def test_keystream_depends_on_every_input():
    key = ske_gen(TEST, 1)
    n1, n2 = fresh_nonce(1), fresh_nonce(2)
    base = keystream(key, n1, 0, TEST)
    assert not np.array_equal(base, keystream(key, n2, 0, TEST))
    assert not np.array_equal(base, keystream(key, n1, 1, TEST))
    assert not np.array_equal(base, keystream(ske_gen(TEST, 2), n1, 0, TEST))


def test_keystream_words_look_uniform():
    key = ske_gen(TEST, 5)
    nonce = fresh_nonce(5)
    words = np.concatenate([keystream(key, nonce, j, TEST) for j in range(400)])
    counts = np.bincount(words * 16 // P, minlength=16)
    expected = words.size / 16
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 37.7   # 15 degrees of freedom, p = 0.001


def test_drawn_words_are_uniform_field_elements():
    w = draw_words(Xof("draw-test"), 50000, P)
    assert w.min() >= 0 and w.max() < P
    counts = np.bincount(w * 10 // P, minlength=10)
    chi2 = ((counts - w.size / 10) ** 2 / (w.size / 10)).sum()
    assert chi2 < 27.9   # 9 degrees of freedom, p = 0.001


def test_affine_layers_are_invertible_and_deterministic():
    nonce = fresh_nonce(9)
    m, c = gen_affine(TEST, nonce, 0, 1, 0)
    m2, c2 = gen_affine(TEST, nonce, 0, 1, 0)
    assert np.array_equal(m, m2) and np.array_equal(c, c2)
    assert sympy.Matrix(m.tolist()).det() % P != 0
    other, _ = gen_affine(TEST, nonce, 0, 1, 1)
    assert not np.array_equal(m, other)


@settings(max_examples=30)
@given(st.integers(2, 6), st.data())
def test_rank_matches_determinant_oracle(n, data):
    rows = data.draw(st.lists(st.lists(st.integers(0, 6), min_size=n, max_size=n), min_size=n, max_size=n))
    mat = np.array(rows)
    full = sympy.Matrix(rows).det() % 7 != 0
    assert (rank_mod_p(mat, 7) == n) == full


def test_rank_of_constructed_deficient_matrix():
    rng = np.random.default_rng(0)
    a = rng.integers(0, P, (5, 8))
    mat = np.vstack([a, (a[0] + 3 * a[1]) % P, (2 * a[2]) % P])
    assert rank_mod_p(mat, P) == 5
    assert rank_mod_p(np.zeros((3, 3), dtype=np.int64), P) == 0


def test_wire_format():
    key = ske_gen(TEST, 1)
    c = ske_enc(key, fresh_nonce(1), [1, 2, 3, 4], TEST)
    blob = serialize_sym(c)
    assert len(blob) == sym_header_size() + 8 * 4 == 64
    back = deserialize_sym(blob)
    assert back.nonce == c.nonce and np.array_equal(back.words, c.words) and back.profile == TEST
    with pytest.raises(SerializationError):
        deserialize_sym(b"XXXX" + blob[4:])
    with pytest.raises(SerializationError, match="version"):
        deserialize_sym(blob[:4] + struct.pack("<H", 7) + blob[6:])
    with pytest.raises(SerializationError):
        deserialize_sym(blob[:6] + struct.pack("<H", 99) + blob[8:])
    with pytest.raises(SerializationError):
        deserialize_sym(blob[:-1])
    with pytest.raises(SerializationError):
        deserialize_sym(blob[:-8] + struct.pack("<Q", P))


def test_input_validation():
    key = ske_gen(TEST, 1)
    with pytest.raises(DomainError):
        ske_enc(key, fresh_nonce(1), [P], TEST)
    with pytest.raises(ParameterError):
        ske_enc(key, b"short", [1], TEST)
    with pytest.raises(ParameterError):
        keystream(ske_gen(get_cipher_profile("pasta3-like"), 1), bytes(NONCE_BYTES), 0, TEST)
    with pytest.raises(ParameterError):
        get_cipher_profile("nope")
