"""Encryption parameters and the named presets."""

from __future__ import annotations

from dataclasses import dataclass

from ..modmath import ModulusError, RnsBasis

SUPPORTED_DEGREES = (1 << 11, 1 << 12, 1 << 13, 1 << 14)


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class EncryptionParameters:
    """Ring degree, modulus ladder and default scale.

    ``security_label`` is informational only; nothing here estimates lattice
    security.
    """

    basis: RnsBasis
    default_scale: float
    security_label: int | None = None
    name: str = "custom"

    @property
    def poly_degree(self) -> int:
        return self.basis.degree

    @property
    def slots(self) -> int:
        return self.basis.degree // 2

    @property
    def max_level(self) -> int:
        return self.basis.max_level

    @property
    def special(self):
        return self.basis.special

    def moduli(self, level: int | None = None) -> tuple[int, ...]:
        return self.basis.level_values(self.max_level if level is None else level)

    def top_prime(self, level: int) -> int:
        return self.basis.moduli[level - 1].value

    @classmethod
    def create(
        cls,
        degree: int,
        moduli,
        default_scale: float,
        special: int | None = None,
        security_label: int | None = None,
        name: str = "custom",
        toy: bool = False,
    ) -> "EncryptionParameters":
        """Build and validate a parameter set.

        ``toy=True`` admits ring degrees below 2^11 for tests and oracles.
        """
        if not toy and degree not in SUPPORTED_DEGREES:
            raise ParameterError(f"ring degree {degree} not in {SUPPORTED_DEGREES}")
        try:
            basis = RnsBasis.from_values(degree, moduli, special)
        except ModulusError as exc:
            raise ParameterError(str(exc)) from exc
        if default_scale <= 0:
            raise ParameterError("scale must be positive")
        if default_scale > min(m.value for m in basis.moduli):
            raise ParameterError("default scale exceeds the smallest chain prime")
        return cls(basis, float(default_scale), security_label, name)


# Chains are fixed lists of primes = 1 mod 2N.  Chain primes sit just above the
# scale so that a rescale by p_l leaves a scale-2^k ciphertext at exactly 2^k
# when the weight was encoded at scale p_l.
_PRESETS = {
    "P11": dict(
        degree=1 << 11,
        moduli=(18014398509404161,),
        special=None,
        default_scale=2.0**24,
    ),
    "P12": dict(
        degree=1 << 12,
        moduli=(1073750017, 1073815553, 1073872897),
        special=1073971201,
        default_scale=2.0**30,
    ),
    "P13": dict(
        degree=1 << 13,
        moduli=(
            1125899906629633,
            1099511922689,
            1099512004609,
            1099512266753,
            1099512299521,
            1099512365057,
        ),
        special=1125899906826241,
        default_scale=2.0**40,
    ),
    "P14": dict(
        degree=1 << 14,
        moduli=(
            1125899903991809,
            1099511922689,
            1099512938497,
            1099514314753,
            1099514478593,
            1099515691009,
            1099515789313,
            1099515985921,
        ),
        special=1125899904679937,
        default_scale=2.0**40,
    ),
}

PRESET_NAMES = tuple(_PRESETS)
_cache: dict[str, EncryptionParameters] = {}


def preset(name: str) -> EncryptionParameters:
    """Look up a named preset (``P11`` .. ``P14``)."""
    key = name.upper()
    if key not in _PRESETS:
        raise ParameterError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    if key not in _cache:
        _cache[key] = EncryptionParameters.create(security_label=128, name=key, **_PRESETS[key])
    return _cache[key]
