"""Weight encoders: just-in-time with a memo cache, or all up front."""

from __future__ import annotations

import threading

import numpy as np

from ..ckks import ScalarPlaintext, encode_scalar_moduli


def residue_table(values: np.ndarray, moduli: tuple[int, ...], scale: float, lookup) -> np.ndarray:
    """(len(values), level) residues, one ScalarPlaintext per distinct value."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    uniq, inverse = np.unique(flat, return_inverse=True)
    rows = np.empty((uniq.size, len(moduli)), dtype=np.uint64)
    for i, v in enumerate(uniq):
        rows[i] = lookup(float(v), moduli, scale).residues
    return rows[inverse].reshape(np.shape(values) + (len(moduli),))


class JitWeightEncoder:
    """Encodes each weight at the level and scale of the ciphertext it meets.

    Results are memoized per (value, moduli, scale), so a repeated request
    returns the very same ScalarPlaintext object.
    """

    def __init__(self):
        self._cache: dict[tuple, ScalarPlaintext] = {}
        self._lock = threading.Lock()
        self.encodings = 0

    def encode(self, value: float, moduli: tuple[int, ...], scale: float) -> ScalarPlaintext:
        key = (float(value), tuple(moduli), float(scale))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        pt = encode_scalar_moduli(value, moduli, scale)
        with self._lock:
            self.encodings += 1
            return self._cache.setdefault(key, pt)

    def table(self, node_id: str, role: str, values, moduli, scale) -> np.ndarray:
        return residue_table(values, tuple(moduli), scale, self.encode)

    def __len__(self) -> int:
        return len(self._cache)


class PrecompiledWeightEncoder:
    """Every weight table encoded before execution from the plan's annotations."""

    def __init__(self, model, plan, params):
        from .executor import weight_requests

        self._tables: dict[tuple[str, str], tuple[tuple[int, ...], float, np.ndarray]] = {}
        for node_id, role, values, level, scale in weight_requests(model, plan):
            moduli = params.moduli(level)
            table = residue_table(values, moduli, scale, encode_scalar_moduli)
            self._tables[(node_id, role)] = (moduli, scale, table)

    def table(self, node_id: str, role: str, values, moduli, scale) -> np.ndarray:
        key = (node_id, role)
        if key not in self._tables:
            raise KeyError(f"no pre-encoded {role} for node {node_id}")
        m, s, table = self._tables[key]
        if m != tuple(moduli) or s != scale:
            raise ValueError(f"pre-encoded {role} for {node_id} does not match the runtime level/scale")
        return table

    @property
    def memory_words(self) -> int:
        return sum(t.size for _, _, t in self._tables.values())
