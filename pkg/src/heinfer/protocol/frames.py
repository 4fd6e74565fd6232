"""Length-prefixed frames and their payload codec.

Frame: ``type u8 | length u64 LE | payload``.
Payload: ``u32 header length | JSON header | u32 blob count | (u64 length | bytes)*``.
"""

from __future__ import annotations

import enum
import json
import os
import socket
import struct
import time
from collections import defaultdict
from dataclasses import dataclass, field

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0
MAX_PAYLOAD = 1 << 34

_FRAME = struct.Struct("<BQ")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


class FrameType(enum.IntEnum):
    HELLO = 1
    HELLO_ACK = 2
    INFER_REQ = 3
    NONLIN_REQ = 4
    NONLIN_RESP = 5
    RESULT = 6
    ERROR = 7


INTERACTIVE = (FrameType.NONLIN_REQ, FrameType.NONLIN_RESP)


class ProtocolError(Exception):
    """The peer broke the protocol (bad frame, wrong order, bad payload)."""

    def __init__(self, message: str, code: str = "protocol", layer: str | None = None):
        super().__init__(message)
        self.code = code
        self.layer = layer


class TransportError(ConnectionError):
    """The connection failed or timed out."""

    def __init__(self, message: str, layer: str | None = None):
        super().__init__(message if layer is None else f"{message} (layer {layer})")
        self.layer = layer


class RemoteError(ProtocolError):
    """The peer answered with an ERROR frame."""


def timeout_from_env() -> float:
    raw = os.environ.get("NGHE2_TIMEOUT_SECS")
    if not raw:
        return DEFAULT_TIMEOUT
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"NGHE2_TIMEOUT_SECS={raw!r} is not a number") from None
    if value <= 0:
        raise ValueError("NGHE2_TIMEOUT_SECS must be positive")
    return value


def encode_payload(header: dict, blobs=()) -> bytes:
    h = json.dumps(header, sort_keys=True).encode()
    parts = [_U32.pack(len(h)), h, _U32.pack(len(blobs))]
    for b in blobs:
        parts.append(_U64.pack(len(b)))
        parts.append(bytes(b))
    return b"".join(parts)


def decode_payload(payload: bytes) -> tuple[dict, list[bytes]]:
    try:
        (hlen,) = _U32.unpack_from(payload, 0)
        off = 4
        header = json.loads(payload[off : off + hlen])
        off += hlen
        (count,) = _U32.unpack_from(payload, off)
        off += 4
        blobs = []
        for _ in range(count):
            (n,) = _U64.unpack_from(payload, off)
            off += 8
            if off + n > len(payload):
                raise ProtocolError("blob runs past the payload end", "malformed")
            blobs.append(payload[off : off + n])
            off += n
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"malformed payload: {exc}", "malformed") from exc
    if off != len(payload):
        raise ProtocolError("trailing bytes after payload", "malformed")
    if not isinstance(header, dict):
        raise ProtocolError("payload header must be a JSON object", "malformed")
    return header, blobs


def encode_frame(ftype: int, payload: bytes) -> bytes:
    return _FRAME.pack(int(ftype), len(payload)) + payload


@dataclass
class Traffic:
    sent: dict = field(default_factory=lambda: defaultdict(int))
    received: dict = field(default_factory=lambda: defaultdict(int))

    @property
    def bytes_sent(self) -> int:
        return sum(self.sent.values())

    @property
    def bytes_received(self) -> int:
        return sum(self.received.values())

    @property
    def interactive_bytes(self) -> int:
        return sum(self.sent[t] + self.received[t] for t in INTERACTIVE)


class Channel:
    """Frame I/O over a connected socket, with per-type byte accounting."""

    def __init__(self, sock: socket.socket, timeout: float | None = None):
        self.sock = sock
        self.sock.settimeout(timeout_from_env() if timeout is None else timeout)
        self.traffic = Traffic()
        self.closed = False

    def send(self, ftype: FrameType, header: dict, blobs=()) -> None:
        data = encode_frame(ftype, encode_payload(header, blobs))
        try:
            self.sock.sendall(data)
        except socket.timeout as exc:
            raise TransportError("send timed out") from exc
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc
        self.traffic.sent[FrameType(ftype)] += len(data)

    def recv_raw(self) -> tuple[int, bytes]:
        head = self._exact(_FRAME.size)
        ftype, length = _FRAME.unpack(head)
        if length > MAX_PAYLOAD:
            raise ProtocolError(f"frame length {length} exceeds limit", "oversize")
        payload = self._exact(length)
        if ftype in FrameType._value2member_map_:
            self.traffic.received[FrameType(ftype)] += len(head) + length
        return ftype, payload

    def recv(self) -> tuple[FrameType, dict, list[bytes]]:
        ftype, payload = self.recv_raw()
        if ftype not in FrameType._value2member_map_:
            raise ProtocolError(f"unknown frame type {ftype}", "unknown-type")
        header, blobs = decode_payload(payload)
        return FrameType(ftype), header, blobs

    def _exact(self, n: int) -> bytes:
        buf = bytearray()
        deadline = time.monotonic()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(min(n - len(buf), 1 << 20))
            except socket.timeout as exc:
                raise TransportError(f"receive timed out after {time.monotonic() - deadline:.1f} s") from exc
            except OSError as exc:
                raise TransportError(f"receive failed: {exc}") from exc
            if not chunk:
                raise TransportError("connection closed by peer")
            buf += chunk
        return bytes(buf)

    def send_error(self, message: str, code: str = "protocol", layer: str | None = None) -> None:
        try:
            self.send(FrameType.ERROR, {"code": code, "message": message, "layer": layer})
        except TransportError:
            pass

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            try:
                self.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self.sock.close()
