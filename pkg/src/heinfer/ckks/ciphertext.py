"""The ciphertext container and the errors raised by evaluation."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..modmath import LimbTables, limb_tables


class Packing(enum.IntEnum):
    REAL = 0
    COMPLEX = 1

    @classmethod
    def parse(cls, value) -> "Packing":
        if isinstance(value, Packing):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ValueError(f"unknown packing {value!r}; use 'real' or 'complex'") from None


class EvaluationError(ValueError):
    """Base class for operand mismatches."""


class LevelMismatchError(EvaluationError):
    pass


class ScaleMismatchError(EvaluationError):
    pass


class PackingError(EvaluationError):
    pass


@dataclass(frozen=True)
class Ciphertext:
    """Two (or, right after a cipher-cipher product, three) NTT-domain polynomials.

    ``data`` has shape ``(size, level, N)``.  Instances are treated as
    immutable; every operation returns a fresh one.
    """

    data: np.ndarray
    moduli: tuple[int, ...]
    scale: float
    packing: Packing = Packing.REAL

    def __post_init__(self):
        if self.data.dtype != np.uint64 or self.data.ndim != 3:
            raise ValueError("ciphertext data must be a (size, level, N) uint64 array")
        if self.data.shape[0] not in (2, 3):
            raise ValueError("ciphertext must hold 2 or 3 polynomials")
        if self.data.shape[1] != len(self.moduli):
            raise ValueError("one limb per modulus required")

    @property
    def size(self) -> int:
        return self.data.shape[0]

    @property
    def level(self) -> int:
        return len(self.moduli)

    @property
    def degree(self) -> int:
        return self.data.shape[2]

    @property
    def slots(self) -> int:
        return self.degree // 2

    @property
    def capacity(self) -> int:
        """Real samples this ciphertext can carry under its packing."""
        return self.slots * (2 if self.packing is Packing.COMPLEX else 1)

    @property
    def tables(self) -> LimbTables:
        return limb_tables(self.moduli, self.degree)

    def with_data(self, data: np.ndarray, scale: float | None = None, moduli=None) -> "Ciphertext":
        return Ciphertext(
            data,
            self.moduli if moduli is None else tuple(moduli),
            self.scale if scale is None else scale,
            self.packing,
        )

    def __eq__(self, other):
        if not isinstance(other, Ciphertext):
            return NotImplemented
        return (
            self.moduli == other.moduli
            and self.scale == other.scale
            and self.packing == other.packing
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None
