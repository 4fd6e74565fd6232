"""Plaintext encodings: general (full polynomial) and scalar (one word per limb)."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..modmath import Domain, RingElement, ntt_forward, ntt_inverse
from ..modmath import kernels as K
from .params import EncryptionParameters

_INT64_SAFE = float(1 << 62)


class EncodingOverflowError(ValueError):
    """The scaled message does not fit in the target modulus."""


@dataclass(frozen=True)
class PackedPlaintext:
    """A full double-CRT plaintext: ``level * N`` words."""

    poly: RingElement
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("plaintext scale must be positive")

    @property
    def level(self) -> int:
        return self.poly.level

    @property
    def moduli(self) -> tuple[int, ...]:
        return self.poly.moduli

    @property
    def memory_words(self) -> int:
        return self.poly.coeffs.size


@dataclass(frozen=True)
class ScalarPlaintext:
    """A plaintext holding the same real value in every slot.

    Stores exactly one residue per limb, ``[round(c * scale)]_{p_i}``.
    """

    residues: np.ndarray
    moduli: tuple[int, ...]
    scale: float
    value: float = float("nan")

    def __post_init__(self):
        if self.residues.shape != (len(self.moduli),):
            raise ValueError("one residue per modulus")

    @property
    def level(self) -> int:
        return len(self.moduli)

    @property
    def memory_words(self) -> int:
        return self.residues.size

    def expand(self, degree: int) -> PackedPlaintext:
        """The equivalent general plaintext: each limb's residue in all N positions."""
        rows = np.repeat(self.residues[:, None], degree, axis=1)
        return PackedPlaintext(RingElement(rows, self.moduli, Domain.NTT), self.scale)


# ---------------------------------------------------------------- embedding


@lru_cache(maxsize=None)
def _embedding(degree: int):
    """Slot positions and twist factors for the negacyclic canonical embedding.

    Slot j evaluates the polynomial at zeta^(5^j) with zeta = exp(i pi / N);
    the odd exponent 2t+1 lives at index t of a length-N DFT of the twisted
    coefficients m_k zeta^k.
    """
    n = degree
    slots = n // 2
    m = 2 * n
    exps = np.empty(slots, dtype=np.int64)
    e = 1
    for j in range(slots):
        exps[j] = e
        e = e * 5 % m
    pos = (exps - 1) // 2
    conj_pos = (m - exps - 1) // 2
    k = np.arange(n)
    twist = np.exp(1j * np.pi * k / n)
    return pos, conj_pos, twist, np.conj(twist)


def slots_to_coefficients(values: np.ndarray, degree: int) -> np.ndarray:
    """Inverse embedding: slot vector (already scaled) to real coefficients."""
    pos, conj_pos, _, untwist = _embedding(degree)
    full = np.zeros(degree, dtype=np.complex128)
    full[pos] = values
    full[conj_pos] = np.conj(values)
    return (np.fft.fft(full) / degree * untwist).real


def coefficients_to_slots(coeffs: np.ndarray, degree: int) -> np.ndarray:
    pos, _, twist, _ = _embedding(degree)
    full = np.fft.ifft(coeffs * twist) * degree
    return full[pos]


# ---------------------------------------------------------------- encode


def _round_to_rns(coeffs: np.ndarray, moduli: tuple[int, ...], bound: int) -> np.ndarray:
    rounded = np.rint(coeffs)
    peak = float(np.max(np.abs(rounded))) if rounded.size else 0.0
    if peak >= bound / 2:
        raise EncodingOverflowError(f"scaled coefficient {peak:.3e} exceeds half the modulus")
    rows = np.empty((len(moduli), rounded.size), dtype=np.uint64)
    if peak < _INT64_SAFE:
        ints = rounded.astype(np.int64)
        for i, q in enumerate(moduli):
            rows[i] = np.mod(ints, np.int64(q)).astype(np.uint64)
    else:
        big = [int(v) for v in rounded]
        for i, q in enumerate(moduli):
            rows[i] = np.array([v % q for v in big], dtype=np.uint64)
    return rows


def encode_vector(
    params: EncryptionParameters, values, level: int | None = None, scale: float | None = None
) -> PackedPlaintext:
    """Encode up to N/2 complex slot values into a full NTT-domain plaintext.

    Conjugate-extends the slots, scales, applies the inverse embedding,
    rounds, reduces per modulus and transforms with the negacyclic NTT.
    """
    level = params.max_level if level is None else level
    scale = params.default_scale if scale is None else float(scale)
    n = params.poly_degree
    z = np.zeros(n // 2, dtype=np.complex128)
    vals = np.asarray(values, dtype=np.complex128).ravel()
    if vals.size > n // 2:
        raise ValueError(f"{vals.size} values exceed the {n // 2} available slots")
    z[: vals.size] = vals
    moduli = params.moduli(level)
    coeffs = slots_to_coefficients(z * scale, n)
    rows = _round_to_rns(coeffs, moduli, params.basis.product(level))
    poly = ntt_forward(RingElement(rows, moduli, Domain.COEFFICIENT))
    return PackedPlaintext(poly, scale)


def encode_scalar(
    params: EncryptionParameters, value: float, level: int | None = None, scale: float | None = None
) -> ScalarPlaintext:
    """Encode one real number for every slot using ``level`` words."""
    level = params.max_level if level is None else level
    scale = params.default_scale if scale is None else float(scale)
    moduli = params.moduli(level)
    return encode_scalar_moduli(value, moduli, scale)


def encode_scalar_moduli(value: float, moduli: tuple[int, ...], scale: float) -> ScalarPlaintext:
    scaled = np.rint(float(value) * scale)
    v = int(scaled)
    q = 1
    for p in moduli:
        q *= p
    if 2 * abs(v) >= q:
        raise EncodingOverflowError(f"round({value} * {scale}) does not fit modulus")
    # negative values wrap to p_i - |v| mod p_i
    res = np.array([v % p for p in moduli], dtype=np.uint64)
    return ScalarPlaintext(res, tuple(moduli), scale, float(value))


# ---------------------------------------------------------------- decode


def crt_centered(poly: RingElement) -> list[int]:
    """Recombine residues into signed integers in (-q/2, q/2]."""
    if poly.domain is Domain.NTT:
        poly = ntt_inverse(poly)
    moduli = poly.moduli
    if len(moduli) == 1:
        q = moduli[0]
        c = poly.coeffs[0].astype(object)
        return [int(v) - q if v > q // 2 else int(v) for v in c]
    q = 1
    for p in moduli:
        q *= p
    total = np.zeros(poly.degree, dtype=object)
    for i, p in enumerate(moduli):
        qi = q // p
        inv = pow(qi % p, -1, p)
        y = _mulmod_row(poly.coeffs[i], inv, p)
        total = total + y.astype(object) * qi
    half = q // 2
    return [int(v % q) - q if v % q > half else int(v % q) for v in total]


def _mulmod_row(row: np.ndarray, s: int, p: int) -> np.ndarray:
    r = (1 << 128) // p
    return K.mul_plain_scalar(
        row[None, None, :],
        np.array([s], dtype=np.uint64),
        np.array([p], dtype=np.uint64),
        np.array([r & ((1 << 64) - 1)], dtype=np.uint64),
        np.array([r >> 64], dtype=np.uint64),
        np.array([(1 << 64) // p], dtype=np.uint64),
    )[0, 0]


def decode(pt: PackedPlaintext) -> np.ndarray:
    """Slot values (complex) of a plaintext, divided by its scale."""
    ints = crt_centered(pt.poly)
    coeffs = np.array([float(v) for v in ints]) / pt.scale
    return coefficients_to_slots(coeffs, pt.poly.degree)


# ---------------------------------------------------------------- complex packing


@lru_cache(maxsize=None)
def imaginary_unit(moduli: tuple[int, ...], degree: int) -> np.ndarray:
    """NTT rows of ``X^(N/2)``, which holds ``i`` in every slot."""
    coeffs = [0] * degree
    coeffs[degree // 2] = 1
    rows = ntt_forward(RingElement.from_integers(coeffs, moduli)).coeffs
    rows.setflags(write=False)
    return rows


def pack_complex(values, slots: int | None = None) -> np.ndarray:
    """Pack 2k reals into k complex slots: first half real, second half imaginary."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size % 2:
        x = np.append(x, 0.0)
    k = x.size // 2
    if slots is not None and k > slots:
        raise ValueError(f"{x.size} reals need {k} slots, only {slots} available")
    return x[:k] + 1j * x[k:]


def unpack_complex(slots: np.ndarray, count: int | None = None) -> np.ndarray:
    z = np.asarray(slots, dtype=np.complex128).ravel()
    out = np.concatenate([z.real, z.imag])
    return out if count is None else out[:count]
