"""The model owner's side: evaluates linear layers, delegates activations."""

from __future__ import annotations

import logging
import socket
import threading
import time

import numpy as np

from ..ckks import (
    EncryptionParameters,
    Packing,
    ParameterError,
    SerializationError,
    deserialize_ciphertext,
    deserialize_relin_key,
    preset,
    serialize_ciphertext,
)
from ..graph import CipherTensor, Executor, ModelError, PlainModel, batch_capacity, plan_rescaling
from .frames import PROTOCOL_VERSION, Channel, FrameType, ProtocolError, TransportError, decode_payload
from .state import ServerMachine

log = logging.getLogger(__name__)


def tensor_blobs(t: CipherTensor) -> list[bytes]:
    return [serialize_ciphertext(c) for c in t.elements()]


def blobs_tensor(blobs, shape, params: EncryptionParameters, packing: Packing, level: int | None = None) -> CipherTensor:
    """Rebuild a tensor from serialized ciphertexts, checking every element."""
    want = int(np.prod(shape))
    if len(blobs) != want:
        raise ProtocolError(f"expected {want} ciphertexts, got {len(blobs)}", "count")
    try:
        cts = [deserialize_ciphertext(b) for b in blobs]
    except SerializationError as exc:
        raise ProtocolError(f"bad ciphertext: {exc}", "deserialize") from exc
    for c in cts:
        if c.degree != params.poly_degree or c.moduli != params.moduli(c.level):
            raise ProtocolError("ciphertext does not belong to the session parameters", "params")
        if c.packing is not packing:
            raise ProtocolError("ciphertext packing differs from the session", "packing")
        if level is not None and c.level != level:
            raise ProtocolError(f"ciphertext at level {c.level}, expected {level}", "level")
        if c.size != 2:
            raise ProtocolError("ciphertexts on the wire must be relinearized", "size")
    try:
        return CipherTensor.from_ciphertexts(cts, shape)
    except ValueError as exc:
        raise ProtocolError(str(exc), "mixed") from exc


class _RemoteNonlinearity:
    """Provider that ships each activation layer to the client in one frame."""

    def __init__(self, channel: Channel, machine: ServerMachine, params, packing):
        self.channel = channel
        self.machine = machine
        self.params = params
        self.packing = packing
        self.latency: dict[str, float] = {}

    def evaluate(self, kind, layer, x: CipherTensor, attrs) -> CipherTensor:
        t0 = time.perf_counter()
        header = {"kind": kind, "layer": layer, "attrs": attrs, "shape": list(x.shape)}
        self.channel.send(FrameType.NONLIN_REQ, header, tensor_blobs(x))
        self.machine.nonlin_sent()
        ftype, payload = self.channel.recv_raw()
        self.machine.receive(ftype)
        head, blobs = decode_payload(payload)
        if head.get("layer") != layer:
            raise ProtocolError(f"response for layer {head.get('layer')!r}, expected {layer!r}", "order", layer)
        out = blobs_tensor(blobs, tuple(head.get("shape", ())), self.params, self.packing, self.params.max_level)
        self.latency[layer] = time.perf_counter() - t0
        return out


class InferenceServer:
    """Serves one model under one preset to any number of sessions."""

    def __init__(self, model: PlainModel, params: EncryptionParameters, threads: int = 1, mode: str = "lazy"):
        self.model = model
        self.params = params
        self.threads = threads
        self.mode = mode
        self._socket: socket.socket | None = None
        self._stop = threading.Event()
        self.sessions = 0

    # ------------------------------------------------------------ one session

    def handle(self, sock: socket.socket, timeout: float | None = None) -> dict:
        """Serve a connection until the peer hangs up or misbehaves."""
        ch = Channel(sock, timeout)
        machine = ServerMachine()
        session: dict = {}
        stats = {"inferences": 0, "error": None, "latency": {}}
        try:
            while True:
                try:
                    ftype, payload = ch.recv_raw()
                except TransportError:
                    break
                ftype = machine.receive(ftype)
                header, blobs = decode_payload(payload)
                if ftype is FrameType.HELLO:
                    session = self._hello(header, blobs)
                    ch.send(FrameType.HELLO_ACK, session["public"])
                    machine.hello_accepted()
                else:
                    out, latency = self._infer(ch, machine, session, header, blobs)
                    ch.send(FrameType.RESULT, {"shape": list(out.shape)}, tensor_blobs(out))
                    machine.result_sent()
                    stats["inferences"] += 1
                    stats["latency"] = latency
        except ProtocolError as exc:
            stats["error"] = exc.code
            ch.send_error(str(exc), exc.code, exc.layer)
        except (ModelError, ParameterError, ValueError) as exc:
            stats["error"] = "validation"
            ch.send_error(str(exc), "validation")
        except TransportError as exc:
            stats["error"] = "transport"
            log.info("session ended: %s", exc)
        finally:
            machine.close()
            ch.close()
            self.sessions += 1
        return stats

    def _hello(self, header: dict, blobs) -> dict:
        if header.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(f"protocol version {header.get('version')!r} unsupported", "version")
        name = str(header.get("preset", ""))
        try:
            preset(name)
        except ParameterError as exc:
            raise ProtocolError(str(exc), "preset") from exc
        if name.upper() != self.params.name:
            raise ProtocolError(f"server runs preset {self.params.name}, client asked for {name}", "preset")
        if header.get("model") != self.model.name:
            raise ProtocolError(f"unknown model {header.get('model')!r}", "model")
        try:
            packing = Packing.parse(header.get("packing", "real"))
        except ValueError as exc:
            raise ProtocolError(str(exc), "packing") from exc
        try:
            self.model.check_packing(packing.name.lower())
        except ModelError as exc:
            raise ProtocolError(str(exc), "packing") from exc
        batch = header.get("batch")
        cap = batch_capacity(self.params, packing)
        if not isinstance(batch, int) or not 1 <= batch <= cap:
            raise ProtocolError(f"batch {batch!r} outside 1..{cap}", "batch")
        rk = None
        if blobs:
            try:
                rk = deserialize_relin_key(blobs[0], self.params)
            except SerializationError as exc:
                raise ProtocolError(f"bad relinearization key: {exc}", "deserialize") from exc
        if self.model.has_cipher_product() and rk is None:
            raise ProtocolError("model multiplies ciphertexts; send a relinearization key", "relin")
        plan = plan_rescaling(self.model, self.params, self.mode)
        public = {
            "version": PROTOCOL_VERSION,
            "preset": self.params.name,
            "packing": packing.name.lower(),
            "model": self.model.name,
            "batch": batch,
            "input_shape": list(self.model.input_shape),
            "output_shape": list(self.model.output_shape),
            "nonlinear_layers": sum(n.op in ("Relu", "MaxPool") for n in self.model.nodes),
        }
        return {"public": public, "packing": packing, "rk": rk, "plan": plan}

    def _infer(self, ch, machine, session, header, blobs):
        shape = tuple(self.model.input_shape)
        if tuple(header.get("shape", ())) != shape:
            raise ProtocolError(f"input shape {header.get('shape')} does not match {list(shape)}", "shape")
        x = blobs_tensor(blobs, shape, self.params, session["packing"], self.params.max_level)
        provider = _RemoteNonlinearity(ch, machine, self.params, session["packing"])
        ex = Executor(self.params, session["rk"], self.threads)
        result = ex.run(self.model, x, session["plan"], provider)
        return result.output, provider.latency

    # ------------------------------------------------------------ TCP

    def bind(self, host: str = "127.0.0.1", port: int = 0) -> tuple[str, int]:
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind((host, port))
        sock.listen()
        sock.settimeout(0.2)
        self._socket = sock
        return sock.getsockname()[:2]

    def serve_forever(self, max_sessions: int | None = None) -> None:
        """Accept connections, one handler thread per session."""
        if self._socket is None:
            self.bind()
        workers = []
        accepted = 0
        while not self._stop.is_set() and (max_sessions is None or accepted < max_sessions):
            try:
                conn, _ = self._socket.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            accepted += 1
            t = threading.Thread(target=self.handle, args=(conn,), daemon=True)
            t.start()
            workers.append(t)
        for t in workers:
            t.join()
        self._socket.close()

    def stop(self) -> None:
        self._stop.set()
