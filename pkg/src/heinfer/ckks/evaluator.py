"""Encryption, decryption and homomorphic evaluation.

All functions are pure: they read their operands and return new objects.
Ciphertexts stay in the NTT domain except inside rescale and relinearize,
which leave it briefly for the rounding step.
"""

from __future__ import annotations

import numpy as np

from ..modmath import Domain, RingElement, limb_tables
from ..modmath import kernels as K
from .ciphertext import (
    Ciphertext,
    LevelMismatchError,
    Packing,
    PackingError,
    ScaleMismatchError,
)
from .encoding import (
    PackedPlaintext,
    ScalarPlaintext,
    decode,
    encode_scalar_moduli,
    encode_vector,
    imaginary_unit,
    pack_complex,
    unpack_complex,
)
from .keys import KeyMaterialError, RelinKey, Sampler, SecretKey, as_sampler, small_to_ntt
from .params import EncryptionParameters

SCALE_RTOL = 2.0**-40


class EvaluationSizeError(ValueError):
    pass


# ---------------------------------------------------------------- checks


def _same_level(a_moduli, b_moduli) -> None:
    if tuple(a_moduli) != tuple(b_moduli):
        raise LevelMismatchError(f"operands at levels {len(a_moduli)} and {len(b_moduli)}")


def _same_scale(a: float, b: float) -> None:
    if abs(a - b) > SCALE_RTOL * max(abs(a), abs(b)):
        raise ScaleMismatchError(f"scales {a!r} and {b!r} differ")


def _same_packing(a: Ciphertext, b: Ciphertext) -> None:
    if a.packing is not b.packing:
        raise PackingError("operands use different packings")


# ---------------------------------------------------------------- encrypt / decrypt


def encrypt(
    params: EncryptionParameters,
    pt: PackedPlaintext,
    sk: SecretKey,
    seed=None,
    packing: Packing = Packing.REAL,
) -> Ciphertext:
    """Symmetric RLWE encryption: ``c0 = -a s + e + m``, ``c1 = a``."""
    rng = as_sampler(seed, "encrypt")
    moduli = pt.moduli
    n = params.poly_degree
    t = limb_tables(moduli, n)
    a = rng.uniform(moduli, n)
    e = small_to_ntt(rng.gaussian(n), moduli)
    s = sk.rows(len(moduli))
    c0 = K.mul_pointwise(a, s, t.qs, t.r0s, t.r1s, t.r64s)
    c0 = K.sub_blocks(e[None], c0[None], t.qs)[0]
    c0 = K.add_plain_vector(c0, pt.poly.coeffs, t.qs)
    return Ciphertext(np.stack([c0, a]), moduli, pt.scale, Packing.parse(packing))


def encrypt_values(
    params: EncryptionParameters,
    values,
    sk: SecretKey,
    seed=None,
    packing: Packing = Packing.REAL,
    level: int | None = None,
    scale: float | None = None,
) -> Ciphertext:
    """Encode a batch of reals (complex-packed when asked) and encrypt it."""
    packing = Packing.parse(packing)
    vals = np.asarray(values, dtype=np.float64).ravel()
    if packing is Packing.COMPLEX:
        if vals.size > params.poly_degree:
            raise ValueError(f"{vals.size} samples exceed complex capacity {params.poly_degree}")
        slots = pack_complex(_pad_even_halves(vals, params.slots), params.slots)
    else:
        if vals.size > params.slots:
            raise ValueError(f"{vals.size} samples exceed real capacity {params.slots}")
        slots = vals
    pt = encode_vector(params, slots, level=level, scale=scale)
    return encrypt(params, pt, sk, seed, packing)


def _pad_even_halves(vals: np.ndarray, slots: int) -> np.ndarray:
    # first half of a full-capacity batch goes to the real parts, second to imaginary
    out = np.zeros(2 * slots)
    out[: vals.size] = vals
    return out


def decrypt(ct: Ciphertext, sk: SecretKey) -> PackedPlaintext:
    """``c0 + c1 s (+ c2 s^2)`` at the ciphertext's level."""
    t = ct.tables
    lvl = ct.level
    s = sk.rows(lvl)
    acc = ct.data[0].copy()
    K.mul_acc_pointwise(acc, ct.data[1], s, t.qs, t.r0s, t.r1s, t.r64s)
    if ct.size == 3:
        K.mul_acc_pointwise(acc, ct.data[2], sk.squared_rows(lvl), t.qs, t.r0s, t.r1s, t.r64s)
    return PackedPlaintext(RingElement(acc, ct.moduli, Domain.NTT), ct.scale)


def decrypt_values(ct: Ciphertext, sk: SecretKey, count: int | None = None) -> np.ndarray:
    """Decrypt and decode to reals, unpacking complex slots when needed."""
    slots = decode(decrypt(ct, sk))
    if ct.packing is Packing.COMPLEX:
        return unpack_complex(slots, count)
    out = slots.real
    return out if count is None else out[:count]


# ---------------------------------------------------------------- additive


def add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _same_level(a.moduli, b.moduli)
    _same_scale(a.scale, b.scale)
    _same_packing(a, b)
    if a.size != b.size:
        small, big = (a, b) if a.size < b.size else (b, a)
        padded = np.concatenate([small.data, np.zeros_like(big.data[2:])])
        return a.with_data(K.add_blocks(padded, big.data, a.tables.qs))
    return a.with_data(K.add_blocks(a.data, b.data, a.tables.qs))


def sub(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _same_level(a.moduli, b.moduli)
    _same_scale(a.scale, b.scale)
    _same_packing(a, b)
    if a.size != b.size:
        raise EvaluationSizeError("subtract operands must have equal size")
    return a.with_data(K.sub_blocks(a.data, b.data, a.tables.qs))


def negate(a: Ciphertext) -> Ciphertext:
    return a.with_data(K.neg_blocks(a.data, a.tables.qs))


def add_ct_pt_vector(ct: Ciphertext, pt: PackedPlaintext) -> Ciphertext:
    """Add a full plaintext; only ``c0`` changes."""
    _same_level(ct.moduli, pt.moduli)
    _same_scale(ct.scale, pt.scale)
    data = ct.data.copy()
    data[0] = K.add_plain_vector(ct.data[0], pt.poly.coeffs, ct.tables.qs)
    return ct.with_data(data)


def add_ct_pt_scalar(ct: Ciphertext, pt: ScalarPlaintext) -> Ciphertext:
    """Add a scalar plaintext: one word per limb, broadcast over the limb.

    Complex-packed ciphertexts carry samples in both halves of each slot, so
    the constant is added as ``c + ci``.
    """
    _same_level(ct.moduli, pt.moduli)
    _same_scale(ct.scale, pt.scale)
    if ct.packing is Packing.COMPLEX:
        t = ct.tables
        unit = imaginary_unit(ct.moduli, ct.degree)
        data = K.add_scalar_rows_complex(ct.data[None], pt.residues[None], unit, t.qs, t.r0s, t.r1s, t.r64s)[0]
        return ct.with_data(data)
    data = ct.data.copy()
    data[0] = K.add_plain_scalar(ct.data[0], pt.residues, ct.tables.qs)
    return ct.with_data(data)


# ---------------------------------------------------------------- multiplicative


def mul_ct_pt_general(ct: Ciphertext, pt: PackedPlaintext) -> Ciphertext:
    """Limb-wise product with a full plaintext.  No rescale."""
    _same_level(ct.moduli, pt.moduli)
    t = ct.tables
    out = K.mul_plain_vector(ct.data, pt.poly.coeffs, t.qs, t.r0s, t.r1s)
    return ct.with_data(out, scale=ct.scale * pt.scale)


def mul_ct_pt_scalar(ct: Ciphertext, pt: ScalarPlaintext) -> Ciphertext:
    """Product with a scalar plaintext.

    32-bit limbs use the one-word Barrett reduction; wider limbs use a Shoup
    quotient computed once per limb.
    """
    _same_level(ct.moduli, pt.moduli)
    t = ct.tables
    shoup = np.array([(int(w) << 64) // q for w, q in zip(pt.residues, ct.moduli)], dtype=np.uint64)
    out = K.mul_plain_scalar_shoup(ct.data, pt.residues, shoup, t.qs, t.r64s)
    return ct.with_data(out, scale=ct.scale * pt.scale)


def broadcast_weight_for_complex(
    w: float, moduli: tuple[int, ...], scale: float
) -> ScalarPlaintext:
    """Encoding of a real weight for multiplying complex-packed data.

    A real scalar times ``a + bi`` scales both parts, so the ordinary scalar
    encoding already equals the broadcast ``(f, 0, f, 0)`` formulation.
    """
    return encode_scalar_moduli(w, moduli, scale)


def _check_cipher_product(a: Ciphertext, b: Ciphertext) -> None:
    if a.packing is Packing.COMPLEX or b.packing is Packing.COMPLEX:
        raise PackingError("cipher-cipher multiply is undefined under complex packing")
    if a.size != 2 or b.size != 2:
        raise ValueError("relinearize before multiplying again")
    _same_level(a.moduli, b.moduli)


def mul_ct_ct(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Tensor product; returns a size-3 ciphertext at scale ``a.scale * b.scale``."""
    _check_cipher_product(a, b)
    t = a.tables
    out = K.tensor_product(a.data, b.data, t.qs, t.r0s, t.r1s, t.r64s)
    return a.with_data(out, scale=a.scale * b.scale)


def square(a: Ciphertext) -> Ciphertext:
    _check_cipher_product(a, a)
    t = a.tables
    out = K.tensor_square(a.data, t.qs, t.r0s, t.r1s, t.r64s)
    return a.with_data(out, scale=a.scale * a.scale)


# ---------------------------------------------------------------- modulus switching


def _divide_round_top(block: np.ndarray, moduli: tuple[int, ...]) -> np.ndarray:
    """Divide an NTT-domain (polys, limbs, N) block by its last prime, rounding.

    The top limb goes to coefficient form, is read as a centered integer,
    lifted into every remaining prime and subtracted; the difference is then
    exactly divisible by the top prime.
    """
    n = block.shape[2]
    p = moduli[-1]
    rest = moduli[:-1]
    top_t = limb_tables((p,), n)
    rest_t = limb_tables(rest, n)
    top = np.ascontiguousarray(block[:, -1, :])
    for row in top:
        K.ntt_inverse_inplace(row, top_t.ipsi[0], top_t.ipsi_shoup[0], top_t.ninv[0], top_t.ninv_shoup[0], top_t.qs[0])
    lifted = K.lift_rows(top, np.uint64(p), rest_t.qs)
    for i in range(lifted.shape[0]):
        lifted[i] = K.ntt_forward_block(lifted[i], rest_t.psi, rest_t.psi_shoup, rest_t.qs)
    inv = np.array([pow(p, -1, q) for q in rest], dtype=np.uint64)
    return K.sub_mul_block(
        np.ascontiguousarray(block[:, :-1, :]), lifted, inv, rest_t.qs, rest_t.r0s, rest_t.r1s, rest_t.r64s
    )


def rescale(ct: Ciphertext, target_level: int | None = None) -> Ciphertext:
    """Drop top limbs one at a time with rounded division; divide the scale to match."""
    target = ct.level - 1 if target_level is None else target_level
    if target < 1:
        raise LevelMismatchError("cannot rescale below level 1")
    if target >= ct.level:
        raise LevelMismatchError(f"rescale target {target} is not below level {ct.level}")
    data, moduli, scale = ct.data, ct.moduli, ct.scale
    while len(moduli) > target:
        data = _divide_round_top(data, moduli)
        scale /= moduli[-1]
        moduli = moduli[:-1]
    return ct.with_data(data, scale=scale, moduli=moduli)


def mod_drop(ct: Ciphertext, target_level: int) -> Ciphertext:
    """Discard top limbs without dividing (scale unchanged)."""
    if not 1 <= target_level <= ct.level:
        raise LevelMismatchError(f"cannot drop level {ct.level} to {target_level}")
    if target_level == ct.level:
        return ct
    data = np.ascontiguousarray(ct.data[:, :target_level, :])
    return ct.with_data(data, moduli=ct.moduli[:target_level])


# ---------------------------------------------------------------- relinearization


def relinearize(ct: Ciphertext, rk: RelinKey | None) -> Ciphertext:
    """Switch a size-3 ciphertext back to size 2 through the special prime."""
    if ct.size != 3:
        raise ValueError("only size-3 ciphertexts need relinearization")
    return ct.with_data(relinearize_block(ct.data[None], ct.moduli, rk)[0])


def relinearize_block(data: np.ndarray, moduli: tuple[int, ...], rk: RelinKey | None) -> np.ndarray:
    """Relinearize a stack of size-3 ciphertexts, shape (E, 3, level, N)."""
    if rk is None:
        raise KeyMaterialError("relinearization key required")
    if data.shape[1] != 3:
        raise ValueError("only size-3 ciphertexts need relinearization")
    params = rk.params
    lvl = len(moduli)
    count, _, _, n = data.shape
    if tuple(moduli) != params.moduli(lvl):
        raise LevelMismatchError("ciphertext basis does not match the key's chain")
    t = limb_tables(tuple(moduli), n)
    ext = params.basis.extended_tables(lvl)
    key = rk.limbs_for(lvl)
    c2 = _ntt_rows(data[:, 2], t, inverse=True)
    acc = np.zeros((count, 2, lvl + 1, n), dtype=np.uint64)
    for i in range(lvl):
        digit = np.empty((count, lvl + 1, n), dtype=np.uint64)
        for j in range(lvl + 1):
            for e in range(count):
                digit[e, j] = c2[e, i] if j == i else K.reduce_unsigned(c2[e, i], ext.qs[j])
        digit = _ntt_rows(digit, ext)
        for e in range(count):
            K.mul_acc_pointwise(acc[e, 0], digit[e], key[i, 0], ext.qs, ext.r0s, ext.r1s, ext.r64s)
            K.mul_acc_pointwise(acc[e, 1], digit[e], key[i, 1], ext.qs, ext.r0s, ext.r1s, ext.r64s)
    switched = _divide_round_top(acc.reshape(count * 2, lvl + 1, n), ext.values)
    base = np.ascontiguousarray(data[:, :2]).reshape(count * 2, lvl, n)
    return K.add_blocks(base, switched, t.qs).reshape(count, 2, lvl, n)


def _ntt_rows(block: np.ndarray, t, inverse: bool = False) -> np.ndarray:
    """NTT every (limbs, N) slab of an (E, limbs, N) block."""
    count, limbs, n = block.shape
    flat = np.ascontiguousarray(block).reshape(count * limbs, n)
    tile = lambda a: np.tile(a, (count,) + (1,) * (a.ndim - 1))  # noqa: E731
    if inverse:
        out = K.ntt_inverse_block(flat, tile(t.ipsi), tile(t.ipsi_shoup), tile(t.ninv), tile(t.ninv_shoup), tile(t.qs))
    else:
        out = K.ntt_forward_block(flat, tile(t.psi), tile(t.psi_shoup), tile(t.qs))
    return out.reshape(count, limbs, n)


def rescale_block(data: np.ndarray, moduli: tuple[int, ...], target_level: int, scale: float):
    """Rescale a stack (E, polys, level, N); returns (data, moduli, scale)."""
    if target_level < 1:
        raise LevelMismatchError("cannot rescale below level 1")
    if target_level >= len(moduli):
        raise LevelMismatchError(f"rescale target {target_level} is not below level {len(moduli)}")
    count, polys, _, n = data.shape
    moduli = tuple(moduli)
    while len(moduli) > target_level:
        flat = data.reshape(count * polys, len(moduli), n)
        data = _divide_round_top(flat, moduli).reshape(count, polys, len(moduli) - 1, n)
        scale /= moduli[-1]
        moduli = moduli[:-1]
    return data, moduli, scale


__all__ = [
    "Sampler",
    "add",
    "add_ct_pt_scalar",
    "add_ct_pt_vector",
    "broadcast_weight_for_complex",
    "decrypt",
    "decrypt_values",
    "encrypt",
    "encrypt_values",
    "mod_drop",
    "mul_ct_ct",
    "mul_ct_pt_general",
    "mul_ct_pt_scalar",
    "negate",
    "relinearize",
    "relinearize_block",
    "rescale_block",
    "rescale",
    "square",
    "sub",
]
