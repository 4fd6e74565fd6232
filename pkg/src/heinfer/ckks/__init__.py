"""CKKS specialised for batch-axis packing."""

from .ciphertext import (
    Ciphertext,
    EvaluationError,
    LevelMismatchError,
    Packing,
    PackingError,
    ScaleMismatchError,
)
from .encoding import (
    EncodingOverflowError,
    PackedPlaintext,
    ScalarPlaintext,
    crt_centered,
    decode,
    encode_scalar,
    encode_scalar_moduli,
    encode_vector,
    imaginary_unit,
    pack_complex,
    unpack_complex,
)
from .evaluator import (
    add,
    add_ct_pt_scalar,
    add_ct_pt_vector,
    broadcast_weight_for_complex,
    decrypt,
    decrypt_values,
    encrypt,
    encrypt_values,
    mod_drop,
    mul_ct_ct,
    mul_ct_pt_general,
    mul_ct_pt_scalar,
    negate,
    relinearize,
    relinearize_block,
    rescale_block,
    rescale,
    square,
    sub,
)
from .keys import KeyMaterialError
from .keys import RelinKey, Sampler, SecretKey, keygen
from .params import PRESET_NAMES, EncryptionParameters, ParameterError, preset
from .serialize import (
    SerializationError,
    deserialize_ciphertext,
    deserialize_relin_key,
    deserialize_secret_key,
    pack_polys,
    serialize_ciphertext,
    serialize_relin_key,
    serialize_secret_key,
    unpack_polys,
)

__all__ = [name for name in dir() if not name.startswith("_")]
