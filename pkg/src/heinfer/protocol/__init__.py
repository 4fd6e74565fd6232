"""Client-aided two-party inference over length-prefixed TCP frames."""

from .client import (
    InferenceClient,
    SessionReport,
    local_infer,
    loopback_infer,
    measure_session,
    serve_nonlinearity,
)
from .frames import (
    PROTOCOL_VERSION,
    Channel,
    FrameType,
    ProtocolError,
    RemoteError,
    TransportError,
    decode_payload,
    encode_frame,
    encode_payload,
    timeout_from_env,
)
from .server import InferenceServer
from .state import ClientMachine, ClientState, ServerMachine, ServerState

__all__ = [name for name in dir() if not name.startswith("_")]
