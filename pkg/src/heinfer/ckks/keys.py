"""Randomness, secret keys and relinearization keys."""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass

import numpy as np

from ..modmath import Domain, RingElement, limb_tables
from ..modmath import kernels as K
from .params import EncryptionParameters

NOISE_STDDEV = 3.2
NOISE_BOUND = 19  # ~6 sigma tail cut


class KeyMaterialError(ValueError):
    """Key material missing or incompatible with the requested operation."""


class Sampler:
    """Seeded randomness for keys, masks and noise.

    The user seed and a purpose label are hashed with SHAKE-256 into a Philox
    key, so independent streams (keys vs. encryption) never overlap.  Without
    a seed the key comes from the OS CSPRNG.
    """

    def __init__(self, seed: int | bytes | None = None, label: str = ""):
        if seed is None:
            material = secrets.token_bytes(32)
        elif isinstance(seed, bytes):
            material = seed
        else:
            material = int(seed).to_bytes(16, "little", signed=True)
        digest = hashlib.shake_256(material + b"|" + label.encode()).digest(16)
        key = int.from_bytes(digest, "little")
        self._rng = np.random.Generator(np.random.Philox(key=key))

    def uniform(self, moduli: tuple[int, ...], degree: int) -> np.ndarray:
        return np.stack([self._rng.integers(0, q, size=degree, dtype=np.uint64) for q in moduli])

    def ternary(self, degree: int) -> np.ndarray:
        return self._rng.integers(-1, 2, size=degree, dtype=np.int64)

    def gaussian(self, degree: int) -> np.ndarray:
        e = np.rint(self._rng.normal(0.0, NOISE_STDDEV, size=degree)).astype(np.int64)
        return np.clip(e, -NOISE_BOUND, NOISE_BOUND)


def as_sampler(seed, label: str) -> Sampler:
    if isinstance(seed, Sampler):
        return seed
    return Sampler(seed, label)


def small_to_ntt(values: np.ndarray, moduli: tuple[int, ...]) -> np.ndarray:
    """Signed small integers to an NTT-domain (limbs, N) block."""
    degree = values.shape[0]
    rows = np.empty((len(moduli), degree), dtype=np.uint64)
    for i, q in enumerate(moduli):
        rows[i] = np.where(values < 0, values + q, values).astype(np.uint64)
    t = limb_tables(moduli, degree)
    return K.ntt_forward_block(rows, t.psi, t.psi_shoup, t.qs)


@dataclass(frozen=True)
class SecretKey:
    """Ternary secret in NTT form over every prime, special one included."""

    poly: RingElement
    params: EncryptionParameters

    def rows(self, level: int) -> np.ndarray:
        return self.poly.coeffs[:level]

    def squared_rows(self, level: int) -> np.ndarray:
        t = limb_tables(self.poly.moduli[:level], self.poly.degree)
        s = self.rows(level)
        return K.mul_pointwise(s, s, t.qs, t.r0s, t.r1s, t.r64s)


@dataclass(frozen=True)
class RelinKey:
    """Key-switching key from s^2 to s, one pair per chain prime.

    ``data[i]`` is ``(b_i, a_i)`` over the full basis (chain primes then the
    special prime) with ``b_i + a_i s = e_i + P s^2`` on limb ``i`` and
    ``e_i`` on every other limb.
    """

    data: np.ndarray  # (L, 2, L + 1, N)
    params: EncryptionParameters

    def limbs_for(self, level: int) -> np.ndarray:
        """Key restricted to the first ``level`` primes plus the special prime."""
        L = self.params.max_level
        idx = list(range(level)) + [L]
        return self.data[:level][:, :, idx, :]


def keygen(
    params: EncryptionParameters, seed=None, relin: bool | None = None
) -> tuple[SecretKey, RelinKey | None]:
    """Generate a secret key and, when the basis has a special prime, a relin key.

    ``relin=True`` demands a relinearization key and fails without a special
    prime; ``relin=None`` builds one whenever possible.
    """
    if relin and params.special is None:
        raise KeyMaterialError(f"{params.name}: relinearization needs a special prime")
    rng = as_sampler(seed, "keygen")
    n = params.poly_degree
    full = tuple(m.value for m in params.basis.all_moduli)
    s_small = rng.ternary(n)
    sk = SecretKey(RingElement(small_to_ntt(s_small, full), full, Domain.NTT), params)
    if relin is False or params.special is None:
        return sk, None
    return sk, _relin_key(params, sk, rng)


def _relin_key(params: EncryptionParameters, sk: SecretKey, rng: Sampler) -> RelinKey:
    n = params.poly_degree
    L = params.max_level
    full = sk.poly.moduli
    t = limb_tables(full, n)
    s = sk.poly.coeffs
    s2 = K.mul_pointwise(s, s, t.qs, t.r0s, t.r1s, t.r64s)
    special = params.special.value
    out = np.empty((L, 2, L + 1, n), dtype=np.uint64)
    for i in range(L):
        a = rng.uniform(full, n)
        e = small_to_ntt(rng.gaussian(n), full)
        b = K.neg_blocks(K.mul_pointwise(a, s, t.qs, t.r0s, t.r1s, t.r64s)[None], t.qs)[0]
        b = K.add_blocks(b[None], e[None], t.qs)[0]
        q_i = full[i]
        p_mod = np.uint64(special % q_i)
        bump = K.mul_plain_scalar(
            s2[i][None, None], np.array([p_mod]), t.qs[i : i + 1], t.r0s[i : i + 1], t.r1s[i : i + 1], t.r64s[i : i + 1]
        )[0, 0]
        b[i] = K.add_plain_vector(b[i][None], bump[None], t.qs[i : i + 1])[0]
        out[i, 0] = b
        out[i, 1] = a
    return RelinKey(out, params)
