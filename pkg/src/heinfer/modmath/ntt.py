"""Negacyclic number-theoretic transform over word-sized primes."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class NoNttRootError(ValueError):
    """No primitive 2N-th root of unity exists modulo the given value."""


def find_ntt_root(q: int, degree: int) -> int:
    """Smallest primitive ``2*degree``-th root of unity modulo prime ``q``."""
    q = int(q)
    m = 2 * degree
    if degree < 1 or degree & (degree - 1):
        raise ValueError(f"degree must be a power of two, got {degree}")
    if q < 3 or (q - 1) % m:
        raise NoNttRootError(f"{q} is not 1 mod {m}")
    exponent = (q - 1) // m
    for g in range(2, min(q, 1 << 16)):
        x = pow(g, exponent, q)
        # x^degree == -1 pins the order at exactly 2*degree
        if pow(x, degree, q) == q - 1:
            break
    else:
        raise NoNttRootError(f"no primitive {m}-th root found modulo {q}")
    best = x
    x2 = x * x % q
    cur = x
    for _ in range(degree - 1):
        cur = cur * x2 % q
        if cur < best:
            best = cur
    return best


def bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n, dtype=np.int64)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _powers(base: int, n: int, q: int) -> list[int]:
    out = [1] * n
    for i in range(1, n):
        out[i] = out[i - 1] * base % q
    return out


@dataclass(frozen=True)
class NttTable:
    """Bit-reversed twiddle powers for one prime, with Shoup companions."""

    q: int
    degree: int
    root: int
    psi: np.ndarray
    psi_shoup: np.ndarray
    ipsi: np.ndarray
    ipsi_shoup: np.ndarray
    ninv: int
    ninv_shoup: int


def _shoup(values: list[int], q: int) -> np.ndarray:
    return np.array([(v << 64) // q for v in values], dtype=np.uint64)


@lru_cache(maxsize=None)
def ntt_table(q: int, degree: int) -> NttTable:
    root = find_ntt_root(q, degree)
    rev = bit_reverse_indices(degree)
    fwd = _powers(root, degree, q)
    inv = _powers(pow(root, -1, q), degree, q)
    psi = [fwd[i] for i in rev]
    ipsi = [inv[i] for i in rev]
    ninv = pow(degree, -1, q)
    return NttTable(
        q=q,
        degree=degree,
        root=root,
        psi=np.array(psi, dtype=np.uint64),
        psi_shoup=_shoup(psi, q),
        ipsi=np.array(ipsi, dtype=np.uint64),
        ipsi_shoup=_shoup(ipsi, q),
        ninv=ninv,
        ninv_shoup=(ninv << 64) // q,
    )
