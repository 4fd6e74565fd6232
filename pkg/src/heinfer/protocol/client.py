"""The data owner's side: encrypts inputs, answers activation requests."""

from __future__ import annotations

import socket
import time
from dataclasses import dataclass, field

import numpy as np

from ..ckks import EncryptionParameters, Packing, RelinKey, SecretKey, serialize_relin_key
from ..ckks.keys import as_sampler
from ..graph import (
    LocalNonlinearity,
    PlainModel,
    batch_capacity,
    decrypt_tensor,
    encrypt_tensor,
    execute,
    plan_rescaling,
    refresh,
)
from .frames import (
    PROTOCOL_VERSION,
    Channel,
    FrameType,
    ProtocolError,
    RemoteError,
    Traffic,
    TransportError,
    decode_payload,
)
from .server import blobs_tensor, tensor_blobs
from .state import ClientMachine


def serve_nonlinearity(header: dict, blobs, params: EncryptionParameters, sk: SecretKey, rng, packing: Packing):
    """Answer one NONLIN_REQ: decrypt, apply, re-encrypt fresh at the top level."""
    kind = header.get("kind")
    if kind not in ("Relu", "MaxPool"):
        raise ProtocolError(f"unknown nonlinearity {kind!r}", "kind", header.get("layer"))
    x = blobs_tensor(blobs, tuple(header.get("shape", ())), params, packing)
    out = refresh(params, sk, rng, kind, x, header.get("attrs", {}))
    return {"layer": header.get("layer"), "shape": list(out.shape)}, tensor_blobs(out)


@dataclass
class SessionReport:
    batch: int
    bytes_sent: int
    bytes_received: int
    interactive_bytes: int
    by_type: dict
    wall_seconds: float
    layer_latency: dict = field(default_factory=dict)

    @property
    def interactive_mb_per_image(self) -> float:
        return self.interactive_bytes / 1e6 / max(self.batch, 1)

    def to_dict(self) -> dict:
        return {
            "batch": self.batch,
            "bytes_sent": self.bytes_sent,
            "bytes_received": self.bytes_received,
            "interactive_bytes": self.interactive_bytes,
            "interactive_mb_per_image": self.interactive_mb_per_image,
            "by_type": self.by_type,
            "wall_seconds": self.wall_seconds,
            "layer_latency": self.layer_latency,
        }


class InferenceClient:
    """Holds the secret key; talks to one server over one connection."""

    def __init__(
        self,
        sock: socket.socket,
        params: EncryptionParameters,
        sk: SecretKey,
        rk: RelinKey | None = None,
        seed=None,
        timeout: float | None = None,
    ):
        self.channel = Channel(sock, timeout)
        self.params = params
        self.sk = sk
        self.rk = rk
        self.machine = ClientMachine()
        self.input_rng = as_sampler(seed, "encrypt")
        self.nonlin_rng = as_sampler(seed, "nonlinear")
        self.config: dict | None = None
        self.layer_in_flight: str | None = None
        self.layer_latency: dict[str, dict] = {}
        self.wall_seconds = 0.0

    @classmethod
    def connect(cls, host: str, port: int, *args, **kwargs) -> "InferenceClient":
        try:
            sock = socket.create_connection((host, port), timeout=kwargs.get("timeout") or 30)
        except OSError as exc:
            raise TransportError(f"cannot reach {host}:{port}: {exc}") from exc
        return cls(sock, *args, **kwargs)

    @property
    def traffic(self) -> Traffic:
        return self.channel.traffic

    def _recv(self):
        try:
            ftype, payload = self.channel.recv_raw()
        except TransportError as exc:
            raise TransportError(str(exc), self.layer_in_flight) from exc
        ftype = self.machine.receive(ftype)
        header, blobs = decode_payload(payload)
        if ftype is FrameType.ERROR:
            raise RemoteError(header.get("message", "server error"), header.get("code", "remote"), header.get("layer"))
        return ftype, header, blobs

    def handshake(self, model: str, packing="real", batch: int = 1, send_relin: bool = True) -> dict:
        packing = Packing.parse(packing)
        header = {
            "version": PROTOCOL_VERSION,
            "preset": self.params.name,
            "packing": packing.name.lower(),
            "model": model,
            "batch": batch,
        }
        blobs = []
        if send_relin and self.rk is not None:
            blobs.append(serialize_relin_key(self.rk))
        self.channel.send(FrameType.HELLO, header, blobs)
        self.machine.hello_sent()
        _, ack, _ = self._recv()
        self.config = ack
        return ack

    def infer(self, batch: np.ndarray) -> np.ndarray:
        """Encrypt ``batch`` (samples, *shape), run the session, return decrypted outputs."""
        if self.config is None:
            raise ProtocolError("handshake first", "order")
        batch = np.asarray(batch, dtype=np.float64)
        packing = Packing.parse(self.config["packing"])
        if batch.ndim < 2 or batch.shape[0] == 0:
            raise ValueError("empty batch")
        if batch.shape[0] > batch_capacity(self.params, packing):
            raise ValueError(f"batch of {batch.shape[0]} exceeds capacity {batch_capacity(self.params, packing)}")
        if batch.shape[0] != self.config["batch"]:
            raise ValueError(f"session was opened for batch {self.config['batch']}, got {batch.shape[0]}")
        t0 = time.perf_counter()
        x = encrypt_tensor(self.params, batch, self.sk, self.input_rng, packing)
        self.channel.send(FrameType.INFER_REQ, {"shape": list(x.shape)}, tensor_blobs(x))
        self.machine.infer_sent()
        self.layer_in_flight = "input"
        mark = time.perf_counter()
        while True:
            ftype, header, blobs = self._recv()
            waited = time.perf_counter() - mark
            if ftype is FrameType.RESULT:
                self.layer_latency["output"] = {"server_seconds": waited}
                out = blobs_tensor(blobs, tuple(header.get("shape", ())), self.params, packing)
                self.layer_in_flight = None
                self.wall_seconds = time.perf_counter() - t0
                return decrypt_tensor(out, self.sk, batch.shape[0])
            layer = header.get("layer")
            self.layer_in_flight = layer
            c0 = time.perf_counter()
            head, out_blobs = serve_nonlinearity(header, blobs, self.params, self.sk, self.nonlin_rng, packing)
            self.channel.send(FrameType.NONLIN_RESP, head, out_blobs)
            mark = time.perf_counter()
            self.layer_latency[layer] = {"server_seconds": waited, "client_seconds": mark - c0}

    def report(self) -> SessionReport:
        return measure_session(self)

    def close(self) -> None:
        self.channel.close()


def measure_session(client: InferenceClient) -> SessionReport:
    """Traffic and timing of a finished session, from the client's side."""
    t = client.traffic
    by_type = {}
    for ft in FrameType:
        if t.sent[ft] or t.received[ft]:
            by_type[ft.name] = {"sent": t.sent[ft], "received": t.received[ft]}
    return SessionReport(
        batch=int(client.config["batch"]) if client.config else 0,
        bytes_sent=t.bytes_sent,
        bytes_received=t.bytes_received,
        interactive_bytes=t.interactive_bytes,
        by_type=by_type,
        wall_seconds=client.wall_seconds,
        layer_latency=dict(client.layer_latency),
    )


def local_infer(
    model: PlainModel,
    params: EncryptionParameters,
    sk: SecretKey,
    batch: np.ndarray,
    rk: RelinKey | None = None,
    seed=None,
    packing="real",
    threads: int = 1,
    mode: str = "lazy",
):
    """Everything in one process; same randomness streams as a client session."""
    packing = Packing.parse(packing)
    model.check_packing(packing.name.lower())
    x = encrypt_tensor(params, batch, sk, as_sampler(seed, "encrypt"), packing)
    plan = plan_rescaling(model, params, mode)
    provider = LocalNonlinearity(params, sk, seed)
    result = execute(model, x, plan, params, provider, rk, threads)
    return decrypt_tensor(result.output, sk, np.asarray(batch).shape[0]), result


def loopback_infer(
    server,
    params: EncryptionParameters,
    sk: SecretKey,
    batch: np.ndarray,
    rk: RelinKey | None = None,
    seed=None,
    packing="real",
):
    """Run a full session against ``server`` over an in-process socket pair."""
    import threading

    a, b = socket.socketpair()
    worker = threading.Thread(target=server.handle, args=(b,), daemon=True)
    worker.start()
    client = InferenceClient(a, params, sk, rk, seed)
    try:
        client.handshake(server.model.name, packing, int(np.asarray(batch).shape[0]))
        out = client.infer(batch)
    finally:
        client.close()
        worker.join()
    return out, measure_session(client)
