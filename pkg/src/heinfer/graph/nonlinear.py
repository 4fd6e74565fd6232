"""Non-polynomial activations evaluated by the key holder."""

from __future__ import annotations

from typing import Protocol

import numpy as np

from ..ckks import EncryptionParameters, Packing, SecretKey, decode, decrypt, encrypt, encode_vector
from ..ckks import pack_complex, unpack_complex
from ..ckks.keys import Sampler, as_sampler
from .tensor import CipherTensor

KINDS = ("Relu", "MaxPool")


class NonlinearityError(ValueError):
    pass


class NonlinearityProvider(Protocol):
    def evaluate(self, kind: str, layer: str, x: CipherTensor, attrs: dict) -> CipherTensor: ...


def apply_cleartext(kind: str, values: np.ndarray, shape: tuple[int, ...], attrs: dict) -> tuple[np.ndarray, tuple]:
    """Apply an activation to (elements, samples) values laid out as ``shape``."""
    if kind == "Relu":
        return np.maximum(values, 0.0), tuple(shape)
    if kind == "MaxPool":
        C, H, W = shape
        kh, kw = _pair(attrs["window"])
        sh, sw = _pair(attrs.get("stride", [kh, kw]))
        Ho, Wo = (H - kh) // sh + 1, (W - kw) // sw + 1
        grid = values.reshape(C, H, W, -1)
        out = np.full((C, Ho, Wo, grid.shape[-1]), -np.inf)
        for dy in range(kh):
            for dx in range(kw):
                out = np.maximum(out, grid[:, dy : dy + sh * (Ho - 1) + 1 : sh, dx : dx + sw * (Wo - 1) + 1 : sw])
        return out.reshape(C * Ho * Wo, -1), (C, Ho, Wo)
    raise NonlinearityError(f"unknown nonlinearity {kind!r}")


def _pair(v):
    return (int(v), int(v)) if isinstance(v, int) else (int(v[0]), int(v[1]))


class LocalNonlinearity:
    """Decrypt, apply, re-encrypt fresh at the top level and default scale.

    This is exactly what the remote client does; running it in process gives
    the reference for the two-party protocol.
    """

    def __init__(self, params: EncryptionParameters, sk: SecretKey, seed=None):
        self.params = params
        self.sk = sk
        self.rng: Sampler = as_sampler(seed, "nonlinear")
        self.calls = 0

    def evaluate(self, kind: str, layer: str, x: CipherTensor, attrs: dict) -> CipherTensor:
        self.calls += 1
        return refresh(self.params, self.sk, self.rng, kind, x, attrs)


def refresh(params, sk, rng, kind: str, x: CipherTensor, attrs: dict) -> CipherTensor:
    if kind not in KINDS:
        raise NonlinearityError(f"unknown nonlinearity {kind!r}")
    cols = []
    for ct in x.elements():
        slots = decode(decrypt(ct, sk))
        cols.append(unpack_complex(slots) if x.packing is Packing.COMPLEX else slots.real)
    values, shape = apply_cleartext(kind, np.stack(cols), x.shape, attrs)
    cts = []
    for row in values:
        z = pack_complex(row, params.slots) if x.packing is Packing.COMPLEX else row
        cts.append(encrypt(params, encode_vector(params, z), sk, rng, x.packing))
    return CipherTensor.from_ciphertexts(cts, shape)
