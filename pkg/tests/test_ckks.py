import numpy as np
import pytest

from conftest import keys_for
from heinfer.ckks import (
    EncodingOverflowError,
    KeyMaterialError,
    LevelMismatchError,
    Packing,
    PackingError,
    ParameterError,
    ScaleMismatchError,
    SerializationError,
    add,
    add_ct_pt_scalar,
    add_ct_pt_vector,
    decode,
    decrypt,
    decrypt_values,
    deserialize_ciphertext,
    deserialize_relin_key,
    deserialize_secret_key,
    encode_scalar,
    encode_vector,
    encrypt,
    encrypt_values,
    keygen,
    mod_drop,
    mul_ct_ct,
    mul_ct_pt_general,
    mul_ct_pt_scalar,
    negate,
    pack_complex,
    preset,
    relinearize,
    rescale,
    serialize_ciphertext,
    serialize_relin_key,
    serialize_secret_key,
    square,
    sub,
    unpack_complex,
)


class TestPresets:
    @pytest.mark.parametrize(
        "name,degree,levels,special",
        [("P11", 2**11, 1, False), ("P12", 2**12, 3, True), ("P13", 2**13, 6, True), ("P14", 2**14, 8, True)],
    )
    def test_shapes(self, name, degree, levels, special):
        p = preset(name)
        assert p.poly_degree == degree
        assert p.max_level == levels
        assert (p.special is not None) is special

    def test_p11_single_54_bit_prime(self):
        p = preset("P11")
        assert [m.bit_width for m in p.basis.moduli] == [54]

    def test_p12_limbs_fit_one_word_reduction(self):
        assert all(m.bit_width <= 32 for m in preset("P12").basis.all_moduli)

    def test_unknown(self):
        with pytest.raises(ParameterError):
            preset("P10")

    def test_case_insensitive(self):
        assert preset("p13") is preset("P13")


class TestEncoding:
    def test_round_trip(self, p12, rng):
        params, _, _ = p12
        z = rng.normal(size=params.slots) + 1j * rng.normal(size=params.slots)
        assert np.abs(decode(encode_vector(params, z)) - z).max() < 1e-6

    def test_too_many_values(self, p12):
        params, _, _ = p12
        with pytest.raises(ValueError):
            encode_vector(params, np.zeros(params.slots + 1))

    def test_scalar_stores_one_word_per_limb(self, preset_name):
        p = preset(preset_name)
        pt = encode_scalar(p, 0.25)
        assert pt.memory_words == p.max_level
        assert encode_vector(p, np.full(p.slots, 0.25)).memory_words == p.poly_degree * p.max_level

    def test_scalar_negative_wraps(self):
        p = preset("P12")
        pt = encode_scalar(p, -1.0)
        for r, q in zip(pt.residues, pt.moduli):
            assert int(r) == q - int(p.default_scale) % q

    def test_scalar_overflow(self):
        p = preset("P11")
        with pytest.raises(EncodingOverflowError):
            encode_scalar(p, 2.0**40)

    def test_complex_pack_roundtrip(self):
        x = np.arange(10.0)
        z = pack_complex(x)
        assert z.size == 5
        assert np.array_equal(unpack_complex(z), x)


class TestKeys:
    def test_seed_determinism(self):
        p = preset("P12")
        a, ra = keygen(p, seed=3)
        b, rb = keygen(p, seed=3)
        c, _ = keygen(p, seed=4)
        assert a.poly == b.poly and np.array_equal(ra.data, rb.data)
        assert a.poly != c.poly

    def test_p11_has_no_relin_key(self):
        _, rk = keygen(preset("P11"), seed=0)
        assert rk is None

    def test_p11_relin_request_fails(self):
        with pytest.raises(KeyMaterialError):
            keygen(preset("P11"), seed=0, relin=True)

    def test_key_serialization(self, p12):
        params, sk, rk = p12
        assert deserialize_secret_key(serialize_secret_key(sk), params).poly == sk.poly
        assert np.array_equal(deserialize_relin_key(serialize_relin_key(rk), params).data, rk.data)
        with pytest.raises(SerializationError):
            deserialize_secret_key(serialize_secret_key(sk), preset("P13"))


class TestEncryption:
    def test_round_trip_p13(self, p13, rng):
        params, sk, _ = p13
        m = rng.uniform(-10, 10, params.slots)
        ct = encrypt_values(params, m, sk, seed=1)
        assert np.abs(decrypt_values(ct, sk) - m).max() < 1e-6

    def test_deterministic_under_seed(self, p12):
        params, sk, _ = p12
        a = encrypt_values(params, [1.0, 2.0], sk, seed=5)
        b = encrypt_values(params, [1.0, 2.0], sk, seed=5)
        c = encrypt_values(params, [1.0, 2.0], sk, seed=6)
        assert a == b and a != c

    def test_zero_message(self, p12):
        params, sk, _ = p12
        ct = encrypt_values(params, np.zeros(4), sk, seed=1)
        assert np.abs(decrypt_values(ct, sk, 4)).max() < 1e-4

    def test_complex_capacity(self, p11):
        params, sk, _ = p11
        x = np.linspace(-1, 1, params.poly_degree)
        ct = encrypt_values(params, x, sk, seed=2, packing="complex")
        assert ct.packing is Packing.COMPLEX
        assert np.abs(decrypt_values(ct, sk, x.size) - x).max() < 1e-3
        with pytest.raises(ValueError):
            encrypt_values(params, np.zeros(params.poly_degree + 1), sk, seed=2, packing="complex")
        with pytest.raises(ValueError):
            encrypt_values(params, np.zeros(params.slots + 1), sk, seed=2)


class TestArithmetic:
    def test_add_sub_negate(self, p12, rng):
        params, sk, _ = p12
        a, b = rng.uniform(-1, 1, (2, 64))
        ca = encrypt_values(params, a, sk, seed=1)
        cb = encrypt_values(params, b, sk, seed=2)
        assert np.abs(decrypt_values(add(ca, cb), sk, 64) - (a + b)).max() < 1e-3
        assert np.abs(decrypt_values(sub(ca, cb), sk, 64) - (a - b)).max() < 1e-3
        assert np.abs(decrypt_values(negate(ca), sk, 64) + a).max() < 1e-3

    def test_scalar_zero_add_is_identity(self, p13):
        params, sk, _ = p13
        ct = encrypt_values(params, [1.0, 2.0], sk, seed=1)
        assert add_ct_pt_scalar(ct, encode_scalar(params, 0.0)) == ct

    def test_scalar_one_times_doubles_scale(self, p13):
        params, sk, _ = p13
        ct = encrypt_values(params, [1.5, -2.0], sk, seed=1)
        out = mul_ct_pt_scalar(ct, encode_scalar(params, 1.0))
        assert out.scale == ct.scale * params.default_scale
        assert np.abs(decrypt_values(out, sk, 2) - [1.5, -2.0]).max() < 1e-6

    def test_rescale_reduces_level_and_scale(self, p13):
        params, sk, _ = p13
        ct = encrypt_values(params, [0.5, -0.25], sk, seed=1)
        w = encode_scalar(params, 3.0, scale=params.top_prime(params.max_level))
        out = rescale(mul_ct_pt_scalar(ct, w))
        assert out.level == params.max_level - 1
        assert out.scale == pytest.approx(ct.scale, rel=1e-12)
        assert np.abs(decrypt_values(out, sk, 2) - [1.5, -0.75]).max() < 1e-6

    def test_rescale_below_one_fails(self, p11):
        params, sk, _ = p11
        ct = encrypt_values(params, [1.0], sk, seed=1)
        with pytest.raises(LevelMismatchError):
            rescale(ct)

    def test_mismatches(self, p13):
        params, sk, _ = p13
        ct = encrypt_values(params, [1.0], sk, seed=1)
        low = mod_drop(ct, params.max_level - 1)
        with pytest.raises(LevelMismatchError):
            add(ct, low)
        with pytest.raises(ScaleMismatchError):
            add(ct, mul_ct_pt_scalar(ct, encode_scalar(params, 1.0)))
        with pytest.raises(LevelMismatchError):
            add_ct_pt_scalar(ct, encode_scalar(params, 1.0, level=params.max_level - 1))

    def test_mod_drop_keeps_value(self, p13):
        params, sk, _ = p13
        ct = encrypt_values(params, [0.75], sk, seed=1)
        assert np.abs(decrypt_values(mod_drop(ct, 2), sk, 1) - 0.75).max() < 1e-6

    def test_square_relinearize_rescale(self, p13, rng):
        params, sk, rk = p13
        x = rng.uniform(-1, 1, 32)
        ct = encrypt_values(params, x, sk, seed=1)
        sq = square(ct)
        assert sq.size == 3
        assert np.abs(decrypt_values(sq, sk, 32) - x * x).max() < 1e-6
        out = rescale(relinearize(sq, rk))
        assert out.size == 2 and out.level == params.max_level - 1
        assert np.abs(decrypt_values(out, sk, 32) - x * x).max() < 1e-6

    def test_relinearize_needs_key(self, p13):
        params, sk, _ = p13
        ct = encrypt_values(params, [1.0], sk, seed=1)
        with pytest.raises(KeyMaterialError):
            relinearize(square(ct), None)

    def test_complex_rejects_cipher_product(self, p11):
        params, sk, _ = p11
        ct = encrypt_values(params, [1.0, 2.0], sk, seed=1, packing="complex")
        with pytest.raises(PackingError):
            square(ct)
        with pytest.raises(PackingError):
            mul_ct_ct(ct, ct)

    def test_complex_scalar_ops_reach_both_halves(self, p13, rng):
        params, sk, _ = p13
        x = rng.uniform(-1, 1, params.poly_degree)
        ct = encrypt_values(params, x, sk, seed=3, packing="complex")
        added = decrypt_values(add_ct_pt_scalar(ct, encode_scalar(params, 0.75)), sk, x.size)
        assert np.abs(added - (x + 0.75)).max() < 1e-6
        scaled = decrypt_values(mul_ct_pt_scalar(ct, encode_scalar(params, -0.5)), sk, x.size)
        assert np.abs(scaled - (-0.5 * x)).max() < 1e-6

    def test_mixed_packing_rejected(self, p11):
        params, sk, _ = p11
        a = encrypt_values(params, [1.0], sk, seed=1, packing="complex")
        b = encrypt_values(params, [1.0], sk, seed=2)
        with pytest.raises(PackingError):
            add(a, b)

    def test_vector_paths(self, p13, rng):
        params, sk, _ = p13
        x, w = rng.uniform(-1, 1, (2, 16))
        ct = encrypt_values(params, x, sk, seed=1)
        pw = encode_vector(params, w)
        assert np.abs(decrypt_values(add_ct_pt_vector(ct, pw), sk, 16) - (x + w)).max() < 1e-6
        assert np.abs(decrypt_values(mul_ct_pt_general(ct, pw), sk, 16) - x * w).max() < 1e-6


class TestSerialization:
    def test_byte_identical_round_trip(self, p13, rng):
        params, sk, rk = p13
        ct = encrypt_values(params, rng.normal(size=8), sk, seed=1)
        stages = [ct, square(ct), rescale(relinearize(square(ct), rk)), mod_drop(ct, 1)]
        for c in stages:
            blob = serialize_ciphertext(c)
            back = deserialize_ciphertext(blob)
            assert back == c
            assert serialize_ciphertext(back) == blob

    def test_rejects_garbage(self, p12):
        params, sk, _ = p12
        blob = bytearray(serialize_ciphertext(encrypt_values(params, [1.0], sk, seed=1)))
        with pytest.raises(SerializationError):
            deserialize_ciphertext(bytes(blob[:-1]))
        bad = bytearray(blob)
        bad[:4] = b"XXXX"
        with pytest.raises(SerializationError):
            deserialize_ciphertext(bytes(bad))
        bad = bytearray(blob)
        bad[-8:] = (2**64 - 1).to_bytes(8, "little")
        with pytest.raises(SerializationError):
            deserialize_ciphertext(bytes(bad))

    def test_decrypt_is_plaintext_of_encrypt(self, p12):
        params, sk, _ = p12
        pt = encode_vector(params, [0.5, 0.25])
        back = decode(decrypt(encrypt(params, pt, sk, seed=1), sk))
        assert abs(back[0] - 0.5) < 1e-3 and abs(back[1] - 0.25) < 1e-3
