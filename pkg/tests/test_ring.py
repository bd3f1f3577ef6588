import numpy as np
import pytest
from hypothesis import given, strategies as st

from hheml import _kernels as K
from hheml.errors import DomainError, ParameterError
from hheml.ring import (GAUSSIAN_BOUND, GAUSSIAN_SIGMA, PrimeField, RingParams, RnsPoly,
                        bit_reverse, find_ntt_primes, ntt_forward, ntt_inverse, poly_mul,
                        primitive_root_2n, sample, sample_small)
from hheml.xof import Xof
from sympy import isprime

SMALL_N = 16
SMALL_PRIMES = tuple(find_ntt_primes(2, 30, 2 * SMALL_N))
SMALL = RingParams(SMALL_N, SMALL_PRIMES)
F = PrimeField(65537)


def egcd_inverse(a, m):
    old_r, r, old_s, s = a, m, 1, 0
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
    assert old_r == 1
    return old_s % m


def naive_negacyclic(a, b, q):
    n = len(a)
    out = [0] * n
    for i in range(n):
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += a[i] * b[j]
            else:
                out[k - n] -= a[i] * b[j]
    return [v % q for v in out]


# -- prime field -------------------------------------------------------------

@given(st.integers(1, 65536))
def test_field_inverse_matches_extended_euclid(a):
    assert F.inv(a) == egcd_inverse(a, 65537)
    assert F.mul(a, F.inv(a)) == 1


@given(st.integers(0, 65536), st.integers(0, 65536))
def test_field_ring_laws(a, b):
    assert F.add(a, b) == (a + b) % 65537
    assert F.sub(F.add(a, b), b) == a
    assert F.add(a, F.neg(a)) == 0


def test_field_errors():
    with pytest.raises(DomainError):
        F.inv(0)
    with pytest.raises(DomainError):
        F.add(65537, 1)
    with pytest.raises(ParameterError):
        PrimeField(65536)


@given(st.integers(-10**6, 10**6))
def test_signed_lift_range(a):
    v = F.lift_signed(a)
    assert -65537 // 2 < v <= 65537 // 2
    assert (v - a) % 65537 == 0


# -- primes and roots --------------------------------------------------------

def test_ntt_primes_properties():
    primes = find_ntt_primes(4, 50, 2 * 8192)
    assert primes == sorted(primes, reverse=True)
    for q in primes:
        assert isprime(q) and q % (2 * 8192) == 1 and q < 2 ** 50
        psi = primitive_root_2n(q, 8192)
        assert pow(psi, 8192, q) == q - 1
    with pytest.raises(ParameterError):
        find_ntt_primes(1, 51, 16)


# -- NTT ---------------------------------------------------------------------

@given(st.lists(st.integers(0, 2**29), min_size=SMALL_N, max_size=SMALL_N))
def test_ntt_matches_naive_evaluation(coeffs):
    poly = RnsPoly.from_ints(SMALL, coeffs)
    out = ntt_forward(poly)
    bits = SMALL_N.bit_length() - 1
    for limb, q in enumerate(SMALL_PRIMES):
        root = int(SMALL.tables.roots[limb])
        assert pow(root, SMALL_N, q) == q - 1
        for j in range(SMALL_N):
            point = pow(root, 2 * bit_reverse(j, bits) + 1, q)
            expect = sum(c * pow(point, i, q) for i, c in enumerate(coeffs)) % q
            assert int(out.limbs[limb, j]) == expect


@given(st.lists(st.integers(-2**40, 2**40), min_size=SMALL_N, max_size=SMALL_N))
def test_ntt_round_trip(coeffs):
    poly = RnsPoly.from_ints(SMALL, coeffs)
    assert ntt_inverse(ntt_forward(poly)) == poly


@given(st.integers(2, 5), st.data())
def test_poly_mul_matches_schoolbook(log_n, data):
    n = 1 << log_n
    primes = tuple(find_ntt_primes(2, 40, 2 * n))
    params = RingParams(n, primes)
    a = data.draw(st.lists(st.integers(-2**35, 2**35), min_size=n, max_size=n))
    b = data.draw(st.lists(st.integers(-2**35, 2**35), min_size=n, max_size=n))
    got = poly_mul(RnsPoly.from_ints(params, a), RnsPoly.from_ints(params, b))
    big = params.modulus
    assert got.to_ints() == naive_negacyclic(a, b, big)


def test_crt_round_trip_centered():
    rng = np.random.default_rng(3)
    big = SMALL.modulus
    coeffs = [int(v) for v in rng.integers(-2**58, 2**58, SMALL_N)]
    coeffs[0] = big // 2
    coeffs[1] = -(big // 2)
    assert RnsPoly.from_ints(SMALL, coeffs).to_ints(centered=True) == coeffs


def test_domain_and_shape_errors():
    poly = RnsPoly.from_ints(SMALL, list(range(SMALL_N)))
    with pytest.raises(DomainError):
        ntt_inverse(poly)
    with pytest.raises(DomainError):
        ntt_forward(ntt_forward(poly))
    with pytest.raises(DomainError):
        poly + ntt_forward(poly)
    with pytest.raises(ParameterError):
        RnsPoly(SMALL, np.zeros((1, SMALL_N), dtype=np.int64))
    with pytest.raises(DomainError):
        RnsPoly(SMALL, np.full((2, SMALL_N), SMALL_PRIMES[0], dtype=np.int64))
    with pytest.raises(ParameterError):
        RingParams(12, SMALL_PRIMES)


@given(st.data())
def test_kernel_mulmod_exact_for_50_bit_primes(data):
    primes = find_ntt_primes(3, 50, 2 * 8192)
    q = primes[data.draw(st.integers(0, 2))]
    edge = st.sampled_from([0, 1, q - 1, q - 2, q // 2])
    a = np.array(data.draw(st.lists(st.integers(0, q - 1) | edge, min_size=8, max_size=8)), dtype=np.int64)
    b = np.array(data.draw(st.lists(st.integers(0, q - 1) | edge, min_size=8, max_size=8)), dtype=np.int64)
    qs = np.array([q], dtype=np.int64)
    qf = np.array([1.0 / q])
    tix = np.zeros(1, dtype=np.int64)
    got = K.mul_rows(a[None], b[None], tix, qs, qf)[0]
    assert [int(x) for x in got] == [int(x) * int(y) % q for x, y in zip(a, b)]


# -- sampling ----------------------------------------------------------------

def test_sampling_is_deterministic():
    for kind in ("uniform", "ternary", "gaussian"):
        assert sample(kind, SMALL, 5) == sample(kind, SMALL, 5)
        assert sample(kind, SMALL, 5) != sample(kind, SMALL, 6)


def test_ternary_support_and_uniformity():
    v = sample_small("ternary", 60000, Xof("test", "ternary"))
    counts = np.array([(v == k).sum() for k in (-1, 0, 1)])
    assert set(np.unique(v)) == {-1, 0, 1}
    expected = v.size / 3
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 13.8   # 2 degrees of freedom, p = 0.001


def test_gaussian_support_and_spread():
    v = sample_small("gaussian", 200000, Xof("test", "gaussian"))
    assert np.abs(v).max() <= GAUSSIAN_BOUND
    assert abs(v.mean()) < 0.05
    assert abs(v.std() - GAUSSIAN_SIGMA) < 0.05


def test_uniform_sample_is_reduced_and_spread():
    params = RingParams(1024, tuple(find_ntt_primes(2, 50, 2048)))
    poly = sample("uniform", params, 9)
    for limb, q in zip(poly.limbs, params.limb_primes):
        assert limb.max() < q
        assert abs(limb.mean() / q - 0.5) < 0.05


def test_unknown_distribution():
    with pytest.raises(ParameterError):
        sample_small("laplace", 4, Xof("x"))
