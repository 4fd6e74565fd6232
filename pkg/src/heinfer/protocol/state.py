"""Session state machines for both ends.

These are pure: they only track which frame may legally arrive next.  The
server and client drivers consult them before touching any payload.
"""

from __future__ import annotations

import enum

from .frames import FrameType, ProtocolError


class ServerState(enum.Enum):
    AWAIT_HELLO = "await-hello"
    READY = "ready"
    COMPUTING = "computing"
    AWAIT_NONLIN = "await-nonlin"
    CLOSED = "closed"


class ClientState(enum.Enum):
    START = "start"
    AWAIT_ACK = "await-ack"
    READY = "ready"
    INFERRING = "inferring"
    CLOSED = "closed"


class ServerMachine:
    def __init__(self):
        self.state = ServerState.AWAIT_HELLO

    def receive(self, ftype: int) -> FrameType:
        """Validate an incoming frame type; raises and closes on anything out of order."""
        expected = {
            ServerState.AWAIT_HELLO: FrameType.HELLO,
            ServerState.READY: FrameType.INFER_REQ,
            ServerState.AWAIT_NONLIN: FrameType.NONLIN_RESP,
        }.get(self.state)
        if ftype not in FrameType._value2member_map_:
            self.state = ServerState.CLOSED
            raise ProtocolError(f"unknown frame type {ftype}", "unknown-type")
        ftype = FrameType(ftype)
        if expected is None or ftype is not expected:
            where = self.state.value
            self.state = ServerState.CLOSED
            if ftype is FrameType.HELLO:
                raise ProtocolError("HELLO replayed mid-session", "replay")
            raise ProtocolError(f"{ftype.name} not allowed in state {where}", "order")
        if ftype is FrameType.INFER_REQ or ftype is FrameType.NONLIN_RESP:
            self.state = ServerState.COMPUTING
        return ftype

    # transitions driven by the server's own actions
    def hello_accepted(self):
        self._require(ServerState.AWAIT_HELLO)
        self.state = ServerState.READY

    def nonlin_sent(self):
        self._require(ServerState.COMPUTING)
        self.state = ServerState.AWAIT_NONLIN

    def result_sent(self):
        self._require(ServerState.COMPUTING)
        self.state = ServerState.READY

    def close(self):
        self.state = ServerState.CLOSED

    def _require(self, *states):
        if self.state not in states:
            raise ProtocolError(f"internal transition from {self.state.value}", "internal")


class ClientMachine:
    def __init__(self):
        self.state = ClientState.START

    def hello_sent(self):
        if self.state is not ClientState.START:
            raise ProtocolError("HELLO already sent", "internal")
        self.state = ClientState.AWAIT_ACK

    def infer_sent(self):
        if self.state is not ClientState.READY:
            raise ProtocolError("inference before handshake", "internal")
        self.state = ClientState.INFERRING

    def receive(self, ftype: int) -> FrameType:
        allowed = {
            ClientState.AWAIT_ACK: (FrameType.HELLO_ACK, FrameType.ERROR),
            ClientState.INFERRING: (FrameType.NONLIN_REQ, FrameType.RESULT, FrameType.ERROR),
        }.get(self.state, ())
        if ftype not in FrameType._value2member_map_:
            self.state = ClientState.CLOSED
            raise ProtocolError(f"unknown frame type {ftype}", "unknown-type")
        ftype = FrameType(ftype)
        if ftype not in allowed:
            where = self.state.value
            self.state = ClientState.CLOSED
            raise ProtocolError(f"{ftype.name} not allowed in state {where}", "order")
        if ftype is FrameType.ERROR:
            self.state = ClientState.CLOSED
        elif ftype is FrameType.HELLO_ACK or ftype is FrameType.RESULT:
            self.state = ClientState.READY
        return ftype
