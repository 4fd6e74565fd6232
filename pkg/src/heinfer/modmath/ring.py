"""RNS bases and polynomials in double-CRT form."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels as K
from .arith import ModulusError, PrimeModulus
from .ntt import ntt_table


class Domain(enum.Enum):
    COEFFICIENT = "coefficient"
    NTT = "ntt"


class DomainError(ValueError):
    """An operation received a polynomial in the wrong representation."""


@dataclass(frozen=True)
class LimbTables:
    """Per-limb constant vectors laid out for the compiled kernels."""

    values: tuple[int, ...]
    degree: int
    qs: np.ndarray
    r0s: np.ndarray
    r1s: np.ndarray
    r64s: np.ndarray
    psi: np.ndarray
    psi_shoup: np.ndarray
    ipsi: np.ndarray
    ipsi_shoup: np.ndarray
    ninv: np.ndarray
    ninv_shoup: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def prefix(self, count: int) -> "LimbTables":
        return limb_tables(self.values[:count], self.degree)


@lru_cache(maxsize=None)
def limb_tables(values: tuple[int, ...], degree: int) -> LimbTables:
    tables = [ntt_table(q, degree) for q in values]
    ratios = [(1 << 128) // q for q in values]
    u64 = lambda xs: np.array(xs, dtype=np.uint64)  # noqa: E731
    return LimbTables(
        values=values,
        degree=degree,
        qs=u64(values),
        r0s=u64([r & ((1 << 64) - 1) for r in ratios]),
        r1s=u64([r >> 64 for r in ratios]),
        r64s=u64([(1 << 64) // q for q in values]),
        psi=np.stack([t.psi for t in tables]),
        psi_shoup=np.stack([t.psi_shoup for t in tables]),
        ipsi=np.stack([t.ipsi for t in tables]),
        ipsi_shoup=np.stack([t.ipsi_shoup for t in tables]),
        ninv=u64([t.ninv for t in tables]),
        ninv_shoup=u64([t.ninv_shoup for t in tables]),
    )


@dataclass(frozen=True)
class RnsBasis:
    """The modulus ladder ``p_1 .. p_L`` plus an optional key-switching prime."""

    degree: int
    moduli: tuple[PrimeModulus, ...]
    special: PrimeModulus | None = None

    def __post_init__(self):
        if self.degree < 2 or self.degree & (self.degree - 1):
            raise ModulusError(f"ring degree {self.degree} is not a power of two")
        values = [m.value for m in self.all_moduli]
        if len(set(values)) != len(values):
            raise ModulusError("RNS moduli must be pairwise distinct")
        for m in self.all_moduli:
            if (m.value - 1) % (2 * self.degree):
                raise ModulusError(f"{m.value} is not 1 mod {2 * self.degree}")

    @classmethod
    def from_values(cls, degree: int, values, special: int | None = None) -> "RnsBasis":
        mods = tuple(PrimeModulus.create(v, degree) for v in values)
        sp = PrimeModulus.create(special, degree) if special is not None else None
        return cls(degree, mods, sp)

    @property
    def max_level(self) -> int:
        return len(self.moduli)

    @property
    def all_moduli(self) -> tuple[PrimeModulus, ...]:
        return self.moduli + ((self.special,) if self.special is not None else ())

    def level_values(self, level: int) -> tuple[int, ...]:
        if not 1 <= level <= self.max_level:
            raise ValueError(f"level {level} outside 1..{self.max_level}")
        return tuple(m.value for m in self.moduli[:level])

    def product(self, level: int) -> int:
        out = 1
        for v in self.level_values(level):
            out *= v
        return out

    def tables(self, level: int) -> LimbTables:
        return limb_tables(self.level_values(level), self.degree)

    def extended_tables(self, level: int) -> LimbTables:
        """First ``level`` primes followed by the special prime."""
        if self.special is None:
            raise ModulusError("basis has no special prime")
        return limb_tables(self.level_values(level) + (self.special.value,), self.degree)


@dataclass(frozen=True)
class RingElement:
    """A polynomial of ``R_q`` stored limb by limb.

    ``coeffs`` has shape ``(level, degree)``; row ``i`` holds residues modulo
    ``moduli[i]``.  ``domain`` says whether rows hold coefficients or NTT
    evaluations.
    """

    coeffs: np.ndarray
    moduli: tuple[int, ...]
    domain: Domain

    def __post_init__(self):
        if self.coeffs.dtype != np.uint64 or self.coeffs.ndim != 2:
            raise ValueError("coeffs must be a 2-D uint64 array")
        if self.coeffs.shape[0] != len(self.moduli):
            raise ValueError("one residue row per modulus required")

    @property
    def level(self) -> int:
        return len(self.moduli)

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1]

    @property
    def tables(self) -> LimbTables:
        return limb_tables(tuple(self.moduli), self.degree)

    @classmethod
    def from_integers(cls, coeffs, moduli) -> "RingElement":
        """Reduce signed integer coefficients into every modulus (coefficient domain)."""
        moduli = tuple(int(m) for m in moduli)
        ints = [int(c) for c in coeffs]
        rows = np.array([[c % q for c in ints] for q in moduli], dtype=np.uint64)
        return cls(rows, moduli, Domain.COEFFICIENT)

    @classmethod
    def zero(cls, degree: int, moduli, domain: Domain = Domain.NTT) -> "RingElement":
        moduli = tuple(int(m) for m in moduli)
        return cls(np.zeros((len(moduli), degree), dtype=np.uint64), moduli, domain)

    def __eq__(self, other):
        if not isinstance(other, RingElement):
            return NotImplemented
        return (
            self.moduli == other.moduli
            and self.domain == other.domain
            and np.array_equal(self.coeffs, other.coeffs)
        )

    __hash__ = None


def ntt_forward(x: RingElement) -> RingElement:
    if x.domain is not Domain.COEFFICIENT:
        raise DomainError("forward NTT expects a coefficient-domain polynomial")
    t = x.tables
    return RingElement(K.ntt_forward_block(x.coeffs, t.psi, t.psi_shoup, t.qs), x.moduli, Domain.NTT)


def ntt_inverse(x: RingElement) -> RingElement:
    if x.domain is not Domain.NTT:
        raise DomainError("inverse NTT expects an NTT-domain polynomial")
    t = x.tables
    out = K.ntt_inverse_block(x.coeffs, t.ipsi, t.ipsi_shoup, t.ninv, t.ninv_shoup, t.qs)
    return RingElement(out, x.moduli, Domain.COEFFICIENT)


def ring_add(a: RingElement, b: RingElement) -> RingElement:
    _check_pair(a, b)
    t = a.tables
    out = K.add_blocks(a.coeffs[None], b.coeffs[None], t.qs)[0]
    return RingElement(out, a.moduli, a.domain)


def ring_mul(a: RingElement, b: RingElement) -> RingElement:
    """Pointwise product; both operands must be in the NTT domain."""
    _check_pair(a, b)
    if a.domain is not Domain.NTT:
        raise DomainError("ring multiplication is pointwise in the NTT domain")
    t = a.tables
    return RingElement(K.mul_pointwise(a.coeffs, b.coeffs, t.qs, t.r0s, t.r1s, t.r64s), a.moduli, Domain.NTT)


def _check_pair(a: RingElement, b: RingElement) -> None:
    if a.moduli != b.moduli:
        raise ValueError("operands live over different RNS bases")
    if a.domain is not b.domain:
        raise DomainError("operands are in different domains")
