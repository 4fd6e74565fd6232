"""Binary wire format for ciphertexts and key material.

Layout (all little-endian)::

    magic "NGH2" | version u8 | N u32 | level u8 | packing u8 | scale f64
    | poly_count u8 | level x modulus u64 | poly_count x level x N residues u64

Residues are NTT-domain words, polynomial-major, then modulus, then
coefficient index.
"""

from __future__ import annotations

import struct

import numpy as np

from ..modmath import Domain, RingElement
from .ciphertext import Ciphertext, Packing
from .keys import RelinKey, SecretKey
from .params import EncryptionParameters

MAGIC = b"NGH2"
VERSION = 1
_HEADER = struct.Struct("<4sBIBBdB")


class SerializationError(ValueError):
    pass


def pack_polys(data: np.ndarray, moduli, scale: float, packing: int = 0) -> bytes:
    polys, level, n = data.shape
    if level != len(moduli):
        raise SerializationError("modulus count does not match limb count")
    header = _HEADER.pack(MAGIC, VERSION, n, level, int(packing), float(scale), polys)
    mods = np.asarray(moduli, dtype="<u8").tobytes()
    return header + mods + np.ascontiguousarray(data, dtype="<u8").tobytes()


def unpack_polys(blob: bytes) -> tuple[np.ndarray, tuple[int, ...], float, int]:
    if len(blob) < _HEADER.size:
        raise SerializationError("truncated header")
    magic, version, n, level, packing, scale, polys = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise SerializationError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SerializationError(f"unsupported version {version}")
    if n == 0 or n & (n - 1):
        raise SerializationError(f"ring degree {n} is not a power of two")
    off = _HEADER.size
    need = off + 8 * level + 8 * polys * level * n
    if len(blob) != need:
        raise SerializationError(f"expected {need} bytes, got {len(blob)}")
    moduli = tuple(int(m) for m in np.frombuffer(blob, dtype="<u8", count=level, offset=off))
    off += 8 * level
    data = np.frombuffer(blob, dtype="<u8", count=polys * level * n, offset=off)
    data = data.astype(np.uint64).reshape(polys, level, n)
    for i, q in enumerate(moduli):
        if level and data[:, i, :].size and int(data[:, i, :].max()) >= q:
            raise SerializationError(f"residue out of range for modulus {q}")
    return data, moduli, scale, packing


def serialize_ciphertext(ct: Ciphertext) -> bytes:
    return pack_polys(ct.data, ct.moduli, ct.scale, int(ct.packing))


def deserialize_ciphertext(blob: bytes) -> Ciphertext:
    data, moduli, scale, packing = unpack_polys(blob)
    if data.shape[0] not in (2, 3):
        raise SerializationError(f"ciphertext with {data.shape[0]} polynomials")
    if packing not in (0, 1):
        raise SerializationError(f"unknown packing code {packing}")
    return Ciphertext(data, moduli, scale, Packing(packing))


def serialize_secret_key(sk: SecretKey) -> bytes:
    return pack_polys(sk.poly.coeffs[None], sk.poly.moduli, 1.0)


def deserialize_secret_key(blob: bytes, params: EncryptionParameters) -> SecretKey:
    data, moduli, _, _ = unpack_polys(blob)
    full = tuple(m.value for m in params.basis.all_moduli)
    if moduli != full or data.shape != (1, len(full), params.poly_degree):
        raise SerializationError(f"secret key does not match preset {params.name}")
    return SecretKey(RingElement(data[0], moduli, Domain.NTT), params)


def serialize_relin_key(rk: RelinKey) -> bytes:
    L = rk.params.max_level
    full = tuple(m.value for m in rk.params.basis.all_moduli)
    return pack_polys(rk.data.reshape(2 * L, L + 1, -1), full, 1.0)


def deserialize_relin_key(blob: bytes, params: EncryptionParameters) -> RelinKey:
    data, moduli, _, _ = unpack_polys(blob)
    L, n = params.max_level, params.poly_degree
    full = tuple(m.value for m in params.basis.all_moduli)
    if params.special is None or moduli != full or data.shape != (2 * L, L + 1, n):
        raise SerializationError(f"relinearization key does not match preset {params.name}")
    return RelinKey(data.reshape(L, 2, L + 1, n), params)
