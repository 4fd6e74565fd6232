"""Tensor dataflow graphs over ciphertexts: loading, planning, execution."""

from .encoder import JitWeightEncoder, PrecompiledWeightEncoder
from .executor import ExecutionError, ExecutionResult, Executor, execute, weight_requests
from .model import (
    MULTIPLY_OPS,
    OPS,
    ModelError,
    Node,
    PlainModel,
    build_model,
    load_model,
    load_model_files,
    save_model_files,
)
from .nonlinear import LocalNonlinearity, NonlinearityError, apply_cleartext, refresh
from .plan import Decision, InfeasibleDepthError, RescalePlan, plan_rescaling
from .reference import forward
from .tensor import CipherTensor, batch_capacity, decrypt_tensor, encrypt_tensor
from .zoo import (
    constant_chain,
    cryptonets,
    cryptonets_mini,
    cryptonets_relu,
    identity_model,
    relu_mlp,
    synthetic_digits,
)

__all__ = [name for name in dir() if not name.startswith("_")]
