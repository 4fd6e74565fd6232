"""Word-sized prime moduli and Barrett-reduced modular arithmetic."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels as K

MAX_MODULUS_BITS = 62
WORD = 1 << 64
WORD_MASK = WORD - 1


class ModulusError(ValueError):
    """A modulus violates a structural requirement (size, primality, NTT-friendliness)."""


@lru_cache(maxsize=None)
def _is_prime(value: int) -> bool:
    from sympy import isprime

    return bool(isprime(value))


@dataclass(frozen=True)
class PrimeModulus:
    """A word-sized prime with its precomputed Barrett ratios.

    ``barrett_ratio_128`` is ``floor(2^128 / value)`` (a two-word number) and
    ``barrett_ratio_64`` is ``floor(2^64 / value)``.  ``ntt_root`` is filled in
    once the modulus is bound to a ring degree.
    """

    value: int
    bit_width: int
    barrett_ratio_128: int
    barrett_ratio_64: int
    ntt_root: int | None = None

    @classmethod
    def create(cls, value: int, degree: int | None = None) -> "PrimeModulus":
        value = int(value)
        bits = value.bit_length()
        if not 2 <= bits <= MAX_MODULUS_BITS:
            raise ModulusError(f"modulus {value} has {bits} bits; need 2..{MAX_MODULUS_BITS}")
        if not _is_prime(value):
            raise ModulusError(f"modulus {value} is not prime")
        root = None
        if degree is not None:
            from .ntt import find_ntt_root

            root = find_ntt_root(value, degree)
        return cls(value, bits, (1 << 128) // value, WORD // value, root)

    @property
    def ratio_words(self) -> tuple[int, int]:
        """The 128-bit ratio as (low word, high word)."""
        r = self.barrett_ratio_128
        return r & WORD_MASK, r >> 64

    def __int__(self) -> int:
        return self.value


def _as_modulus(q: PrimeModulus | int) -> PrimeModulus:
    if isinstance(q, PrimeModulus):
        return q
    return PrimeModulus.create(q)


def barrett_reduce_128(z: int, q: PrimeModulus | int) -> int:
    """Reduce a 128-bit ``z`` modulo ``q`` (at most 62 bits).

    ``z`` is split into its low and high words and reduced with a single
    conditional subtraction.
    """
    q = _as_modulus(q)
    if not 0 <= z < 1 << 128:
        raise ValueError("z must be an unsigned 128-bit integer")
    r0, r1 = q.ratio_words
    return int(
        K.barrett128(
            np.uint64(z & WORD_MASK), np.uint64(z >> 64), np.uint64(q.value), np.uint64(r0), np.uint64(r1)
        )
    )


def barrett_reduce_64(z: int, q: PrimeModulus | int) -> int:
    """Reduce a 64-bit ``z`` modulo a modulus of at most 32 bits."""
    q = _as_modulus(q)
    if q.bit_width > 32:
        raise ModulusError(
            f"{q.bit_width}-bit modulus is too wide for the single-word reduction; use barrett_reduce_128"
        )
    if not 0 <= z < WORD:
        raise ValueError("z must be an unsigned 64-bit integer")
    return int(K.barrett64(np.uint64(z), np.uint64(q.value), np.uint64(q.barrett_ratio_64)))


def barrett_reduce_128_array(z_lo: np.ndarray, z_hi: np.ndarray, q: PrimeModulus) -> np.ndarray:
    r0, r1 = q.ratio_words
    return K.barrett128_array(
        np.ascontiguousarray(z_lo, dtype=np.uint64),
        np.ascontiguousarray(z_hi, dtype=np.uint64),
        np.uint64(q.value),
        np.uint64(r0),
        np.uint64(r1),
    )


def barrett_reduce_64_array(z: np.ndarray, q: PrimeModulus) -> np.ndarray:
    if q.bit_width > 32:
        raise ModulusError("single-word reduction needs a modulus of at most 32 bits")
    return K.barrett64_array(
        np.ascontiguousarray(z, dtype=np.uint64), np.uint64(q.value), np.uint64(q.barrett_ratio_64)
    )


def mod_add(a: int, b: int, q: PrimeModulus | int) -> int:
    return int(K.addmod(np.uint64(a), np.uint64(b), np.uint64(int(q))))


def mod_sub(a: int, b: int, q: PrimeModulus | int) -> int:
    return int(K.submod(np.uint64(a), np.uint64(b), np.uint64(int(q))))


def mod_mul(a: int, b: int, q: PrimeModulus | int) -> int:
    """``a * b mod q``; single-word Barrett when ``q`` fits 32 bits, else 128-bit."""
    q = _as_modulus(q)
    if q.bit_width <= 32:
        return barrett_reduce_64(a * b, q)
    return barrett_reduce_128(a * b, q)
