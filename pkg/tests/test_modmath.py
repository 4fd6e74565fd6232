import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heinfer.ckks import preset
from heinfer.modmath import (
    Domain,
    DomainError,
    ModulusError,
    NoNttRootError,
    PrimeModulus,
    RingElement,
    RnsBasis,
    barrett_reduce_64,
    barrett_reduce_128,
    find_ntt_root,
    mod_add,
    mod_mul,
    mod_sub,
    ntt_forward,
    ntt_inverse,
    ring_add,
    ring_mul,
)

WIDE = PrimeModulus.create(2**61 - 1)  # Mersenne prime, 61 bits
NARROW = PrimeModulus.create(4294967291)  # largest 32-bit prime
MODULI = [WIDE, NARROW, PrimeModulus.create(17), PrimeModulus.create(1099511922689)]


def schoolbook(a, b, q):
    n = len(a)
    out = [0] * n
    for i in range(n):
        for j in range(n):
            k = i + j
            v = a[i] * b[j]
            if k >= n:
                out[k - n] -= v
            else:
                out[k] += v
    return [c % q for c in out]


class TestPrimeModulus:
    def test_ratios_match_floor_division(self):
        for q in MODULI:
            assert q.barrett_ratio_128 == (1 << 128) // q.value
            assert q.barrett_ratio_64 == (1 << 64) // q.value
            lo, hi = q.ratio_words
            assert lo + (hi << 64) == q.barrett_ratio_128

    def test_rejects_composite(self):
        with pytest.raises(ModulusError):
            PrimeModulus.create(2**61 + 1)

    def test_rejects_too_wide(self):
        with pytest.raises(ModulusError):
            PrimeModulus.create((1 << 63) - 25)

    def test_rejects_non_ntt_friendly_for_degree(self):
        with pytest.raises(NoNttRootError):
            PrimeModulus.create(19, degree=8)

    def test_root_has_exact_order(self):
        q, n = 17, 8
        w = find_ntt_root(q, n)
        assert pow(w, n, q) == q - 1
        assert pow(w, 2 * n, q) == 1


@settings(max_examples=300, deadline=None)
@given(st.integers(0, (1 << 128) - 1), st.sampled_from(MODULI))
def test_barrett128_any_word_pair(z, q):
    assert barrett_reduce_128(z, q) == z % q.value


@settings(max_examples=300, deadline=None)
@given(st.integers(0, (1 << 64) - 1))
def test_barrett64_any_word(z):
    assert barrett_reduce_64(z, NARROW) == z % NARROW.value


def test_barrett64_refuses_wide_modulus():
    with pytest.raises(ModulusError):
        barrett_reduce_64(5, WIDE)


def test_barrett_rejects_out_of_range_input():
    with pytest.raises(ValueError):
        barrett_reduce_128(1 << 128, WIDE)
    with pytest.raises(ValueError):
        barrett_reduce_64(1 << 64, NARROW)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_mod_ops(data):
    q = data.draw(st.sampled_from(MODULI))
    a = data.draw(st.integers(0, q.value - 1))
    b = data.draw(st.integers(0, q.value - 1))
    assert mod_add(a, b, q) == (a + b) % q.value
    assert mod_sub(a, b, q) == (a - b) % q.value
    assert mod_mul(a, b, q) == a * b % q.value


@pytest.mark.parametrize("n", [4, 8, 16])
def test_ntt_product_matches_schoolbook(n, rng):
    q = 17 if n <= 8 else 97
    moduli = (q,)
    for _ in range(50):
        a = [int(v) for v in rng.integers(0, q, n)]
        b = [int(v) for v in rng.integers(0, q, n)]
        pa = ntt_forward(RingElement.from_integers(a, moduli))
        pb = ntt_forward(RingElement.from_integers(b, moduli))
        prod = ntt_inverse(ring_mul(pa, pb))
        assert [int(v) for v in prod.coeffs[0]] == schoolbook(a, b, q)


def test_ntt_known_value():
    # (1 + x) * (1 + x^7) = 1 + x + x^7 + x^8 = x + x^7 + (1 - 1) over x^8 + 1
    q = (17,)
    a = ntt_forward(RingElement.from_integers([1, 1, 0, 0, 0, 0, 0, 0], q))
    b = ntt_forward(RingElement.from_integers([1, 0, 0, 0, 0, 0, 0, 1], q))
    out = ntt_inverse(ring_mul(a, b)).coeffs[0]
    assert list(out) == [0, 1, 0, 0, 0, 0, 0, 1]


def test_ntt_round_trip_preset(preset_name, rng):
    p = preset(preset_name)
    moduli = tuple(m.value for m in p.basis.all_moduli)
    rows = np.stack([rng.integers(0, q, p.poly_degree, dtype=np.uint64) for q in moduli])
    x = RingElement(rows, moduli, Domain.COEFFICIENT)
    back = ntt_inverse(ntt_forward(x))
    assert back == x


def test_domain_flag_is_enforced():
    x = RingElement.from_integers([1, 2, 3, 4], (17,))
    with pytest.raises(DomainError):
        ntt_inverse(x)
    with pytest.raises(DomainError):
        ring_mul(x, x)
    y = ntt_forward(x)
    with pytest.raises(DomainError):
        ntt_forward(y)
    with pytest.raises(DomainError):
        ring_add(x, y)


def test_basis_rejects_duplicates_and_bad_primes():
    with pytest.raises(ModulusError):
        RnsBasis.from_values(8, [17, 17])
    with pytest.raises((ModulusError, NoNttRootError)):
        RnsBasis.from_values(8, [19])
