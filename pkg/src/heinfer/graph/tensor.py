"""Tensors of ciphertexts with the batch packed into slots."""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np

from ..ckks import (
    Ciphertext,
    EncryptionParameters,
    Packing,
    SecretKey,
    decrypt_values,
    encrypt_values,
)
from ..ckks.keys import as_sampler


@dataclass(frozen=True)
class CipherTensor:
    """One ciphertext per non-batch element, all sharing level, scale and packing.

    ``data`` is a single (elements, polys, level, N) block so that whole-layer
    operations run as one kernel call.
    """

    data: np.ndarray
    shape: tuple[int, ...]
    moduli: tuple[int, ...]
    scale: float
    packing: Packing = Packing.REAL

    def __post_init__(self):
        if self.data.ndim != 4 or self.data.dtype != np.uint64:
            raise ValueError("tensor data must be (elements, polys, level, N) uint64")
        if self.data.shape[0] != prod(self.shape):
            raise ValueError(f"{self.data.shape[0]} ciphertexts for shape {self.shape}")
        if self.data.shape[2] != len(self.moduli):
            raise ValueError("one limb per modulus required")

    @property
    def level(self) -> int:
        return len(self.moduli)

    @property
    def size(self) -> int:
        return self.data.shape[0]

    @property
    def degree(self) -> int:
        return self.data.shape[3]

    def element(self, i: int) -> Ciphertext:
        return Ciphertext(self.data[i], self.moduli, self.scale, self.packing)

    def elements(self) -> list[Ciphertext]:
        return [self.element(i) for i in range(self.size)]

    def replace(self, data=None, shape=None, moduli=None, scale=None) -> "CipherTensor":
        return CipherTensor(
            self.data if data is None else data,
            self.shape if shape is None else tuple(shape),
            self.moduli if moduli is None else tuple(moduli),
            self.scale if scale is None else scale,
            self.packing,
        )

    def reshape(self, shape) -> "CipherTensor":
        """Metadata-only: the ciphertext block is shared, not copied."""
        return self.replace(shape=shape)

    @classmethod
    def from_ciphertexts(cls, cts: list[Ciphertext], shape) -> "CipherTensor":
        if not cts:
            raise ValueError("empty ciphertext list")
        first = cts[0]
        for c in cts[1:]:
            if c.moduli != first.moduli or c.scale != first.scale or c.packing != first.packing:
                raise ValueError("ciphertexts differ in level, scale or packing")
        return cls(np.stack([c.data for c in cts]), tuple(shape), first.moduli, first.scale, first.packing)


def batch_capacity(params: EncryptionParameters, packing) -> int:
    return params.slots * (2 if Packing.parse(packing) is Packing.COMPLEX else 1)


def encrypt_tensor(
    params: EncryptionParameters, batch: np.ndarray, sk: SecretKey, seed=None, packing="real"
) -> CipherTensor:
    """Encrypt a (S, *shape) batch: ciphertext e holds element e of every sample."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim < 2 or batch.shape[0] == 0:
        raise ValueError("batch must be (samples, *shape) with at least one sample")
    packing = Packing.parse(packing)
    if batch.shape[0] > batch_capacity(params, packing):
        raise ValueError(
            f"batch of {batch.shape[0]} exceeds {packing.name.lower()} capacity {batch_capacity(params, packing)}"
        )
    rng = as_sampler(seed, "encrypt")
    flat = batch.reshape(batch.shape[0], -1)
    cts = [encrypt_values(params, flat[:, e], sk, rng, packing) for e in range(flat.shape[1])]
    return CipherTensor.from_ciphertexts(cts, batch.shape[1:])


def decrypt_tensor(t: CipherTensor, sk: SecretKey, samples: int) -> np.ndarray:
    """Inverse of :func:`encrypt_tensor`; returns (samples, *shape)."""
    cols = [decrypt_values(t.element(i), sk, samples) for i in range(t.size)]
    return np.stack(cols, axis=1).reshape((samples,) + tuple(t.shape))
