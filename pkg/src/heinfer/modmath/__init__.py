"""Modular arithmetic, Barrett reduction and the negacyclic NTT."""

from .arith import (
    MAX_MODULUS_BITS,
    ModulusError,
    PrimeModulus,
    barrett_reduce_64,
    barrett_reduce_64_array,
    barrett_reduce_128,
    barrett_reduce_128_array,
    mod_add,
    mod_mul,
    mod_sub,
)
from .ntt import NoNttRootError, find_ntt_root, ntt_table
from .ring import (
    Domain,
    DomainError,
    LimbTables,
    RingElement,
    RnsBasis,
    limb_tables,
    ntt_forward,
    ntt_inverse,
    ring_add,
    ring_mul,
)

__all__ = [
    "MAX_MODULUS_BITS",
    "Domain",
    "DomainError",
    "LimbTables",
    "ModulusError",
    "NoNttRootError",
    "PrimeModulus",
    "RingElement",
    "RnsBasis",
    "barrett_reduce_128",
    "barrett_reduce_128_array",
    "barrett_reduce_64",
    "barrett_reduce_64_array",
    "find_ntt_root",
    "limb_tables",
    "mod_add",
    "mod_mul",
    "mod_sub",
    "ntt_forward",
    "ntt_inverse",
    "ntt_table",
    "ring_add",
    "ring_mul",
]
