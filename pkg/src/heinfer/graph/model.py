"""Model manifests, weight blobs and shape inference."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import prod

import numpy as np

OPS = (
    "Input",
    "Constant",
    "Add",
    "Multiply",
    "Square",
    "Dot",
    "Convolution",
    "Reshape",
    "Relu",
    "MaxPool",
    "Output",
)
MULTIPLY_OPS = frozenset({"Multiply", "Square", "Dot", "Convolution"})
REFRESH_OPS = frozenset({"Relu", "MaxPool"})


class ModelError(ValueError):
    """Malformed manifest, weight blob or graph."""


@dataclass(frozen=True)
class Node:
    id: str
    op: str
    inputs: tuple[str, ...] = ()
    attrs: dict = field(default_factory=dict)
    weight_ref: str | None = None
    bias_ref: str | None = None

    def attr_pair(self, name: str, default=None) -> tuple[int, int]:
        v = self.attrs.get(name, default)
        if v is None:
            raise ModelError(f"{self.id}: missing attribute {name!r}")
        if isinstance(v, int):
            return (v, v)
        if len(v) != 2:
            raise ModelError(f"{self.id}: attribute {name!r} must have two entries")
        return (int(v[0]), int(v[1]))

    def padding(self) -> tuple[int, int, int, int]:
        """(top, bottom, left, right); a two-entry list applies to both axes."""
        v = self.attrs.get("padding", 0)
        if isinstance(v, int):
            return (v, v, v, v)
        v = [int(x) for x in v]
        if len(v) == 2:
            return (v[0], v[1], v[0], v[1])
        if len(v) == 4:
            return tuple(v)
        raise ModelError(f"{self.id}: padding needs 1, 2 or 4 entries")

    def to_json(self) -> dict:
        out = {"id": self.id, "op": self.op, "inputs": list(self.inputs), "attrs": dict(self.attrs)}
        if self.weight_ref is not None:
            out["weight_ref"] = self.weight_ref
        if self.bias_ref is not None:
            out["bias_ref"] = self.bias_ref
        return out


@dataclass
class PlainModel:
    """Graph plus real-valued weights.  Weights are never stored encoded."""

    name: str
    nodes: list[Node]
    weights: dict[str, np.ndarray]
    shapes: dict[str, tuple[int, ...]]
    packing: str = "real"
    preset: str | None = None

    @property
    def by_id(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def consumers(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            for i in n.inputs:
                out[i].append(n.id)
        return out

    @property
    def input_node(self) -> Node:
        return next(n for n in self.nodes if n.op == "Input")

    @property
    def output_node(self) -> Node:
        return next(n for n in self.nodes if n.op == "Output")

    @property
    def input_shape(self) -> tuple[int, ...]:
        return self.shapes[self.input_node.id]

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[self.output_node.id]

    def has_op(self, *ops: str) -> bool:
        return any(n.op in ops for n in self.nodes)

    def has_cipher_product(self) -> bool:
        """True when a node multiplies two ciphertexts (Square included)."""
        consts = {n.id for n in self.nodes if n.op == "Constant"}
        for n in self.nodes:
            if n.op == "Square":
                return True
            if n.op == "Multiply" and not any(i in consts for i in n.inputs):
                return True
        return False

    def check_packing(self, packing: str) -> None:
        if packing == "complex" and self.has_cipher_product():
            raise ModelError(
                f"model {self.name!r} multiplies ciphertexts and cannot run complex-packed"
            )

    def to_manifest(self) -> tuple[dict, bytes]:
        """Serialize back to a manifest dict and a float32 blob."""
        entries = {}
        chunks = []
        offset = 0
        for name, arr in self.weights.items():
            a = np.ascontiguousarray(arr, dtype="<f4")
            entries[name] = {"offset": offset, "shape": list(a.shape)}
            chunks.append(a.tobytes())
            offset += a.nbytes
        manifest = {
            "name": self.name,
            "packing": self.packing,
            "preset": self.preset,
            "nodes": [n.to_json() for n in self.nodes],
            "weights": entries,
        }
        return manifest, b"".join(chunks)


def topological_order(nodes: list[Node]) -> list[Node]:
    """Kahn's algorithm that keeps manifest order among ready nodes."""
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        raise ModelError("duplicate node ids")
    index = {n.id: i for i, n in enumerate(nodes)}
    for n in nodes:
        for i in n.inputs:
            if i not in index:
                raise ModelError(f"{n.id}: unknown input {i!r}")
    pending = {n.id: len(n.inputs) for n in nodes}
    users: dict[str, list[str]] = {n.id: [] for n in nodes}
    for n in nodes:
        for i in n.inputs:
            users[i].append(n.id)
    ready = sorted((index[k] for k, v in pending.items() if v == 0))
    out = []
    while ready:
        k = ready.pop(0)
        node = nodes[k]
        out.append(node)
        for u in users[node.id]:
            pending[u] -= 1
            if pending[u] == 0:
                ready.append(index[u])
                ready.sort()
    if len(out) != len(nodes):
        raise ModelError("graph contains a cycle")
    return out


def _arity(op: str) -> tuple[int, int]:
    return {
        "Input": (0, 0),
        "Constant": (0, 0),
        "Add": (2, 2),
        "Multiply": (2, 2),
    }.get(op, (1, 1))


def infer_shapes(nodes: list[Node], weights: dict[str, np.ndarray]) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    plain: set[str] = set()

    def weight(node: Node, ref: str | None, what: str) -> np.ndarray:
        if ref is None:
            raise ModelError(f"{node.id}: {what} reference required")
        if ref not in weights:
            raise ModelError(f"{node.id}: unknown weight {ref!r}")
        return weights[ref]

    for n in nodes:
        lo, hi = _arity(n.op)
        if not lo <= len(n.inputs) <= hi:
            raise ModelError(f"{n.id}: {n.op} takes {lo} input(s), got {len(n.inputs)}")
        ins = [shapes[i] for i in n.inputs]
        if n.op == "Input":
            shape = tuple(int(d) for d in n.attrs.get("shape", ()))
            if not shape or any(d <= 0 for d in shape):
                raise ModelError(f"{n.id}: input shape must be positive")
        elif n.op == "Constant":
            shape = tuple(weight(n, n.weight_ref, "weight").shape)
            plain.add(n.id)
        elif n.op in ("Add", "Multiply"):
            a, b = n.inputs
            if a in plain and b in plain:
                raise ModelError(f"{n.id}: at least one operand must be encrypted")
            cs, ps = (shapes[a], shapes[b]) if b in plain else (shapes[b], shapes[a])
            if a not in plain and b not in plain:
                if shapes[a] != shapes[b]:
                    raise ModelError(f"{n.id}: operand shapes {shapes[a]} and {shapes[b]} differ")
            elif ps not in ((), cs) and prod(ps) != 1:
                raise ModelError(f"{n.id}: constant shape {ps} does not match {cs}")
            shape = cs
        elif n.op in ("Square", "Relu", "Output"):
            shape = ins[0]
        elif n.op == "Dot":
            w = weight(n, n.weight_ref, "weight")
            k = prod(ins[0])
            if w.ndim != 2 or w.shape[0] != k:
                raise ModelError(f"{n.id}: weight {w.shape} incompatible with {k} inputs")
            if n.bias_ref is not None and weight(n, n.bias_ref, "bias").shape != (w.shape[1],):
                raise ModelError(f"{n.id}: bias must have shape ({w.shape[1]},)")
            shape = (w.shape[1],)
        elif n.op == "Convolution":
            shape = _conv_shape(n, ins[0], weight(n, n.weight_ref, "kernel"))
            if n.bias_ref is not None and weight(n, n.bias_ref, "bias").shape != (shape[0],):
                raise ModelError(f"{n.id}: bias must have shape ({shape[0]},)")
        elif n.op == "Reshape":
            shape = tuple(int(d) for d in n.attrs.get("shape", ()))
            if prod(shape) != prod(ins[0]):
                raise ModelError(f"{n.id}: cannot reshape {ins[0]} to {shape}")
        elif n.op == "MaxPool":
            shape = _pool_shape(n, ins[0])
        else:
            raise ModelError(f"{n.id}: unknown op {n.op!r}")
        if n.op != "Constant" and any(i in plain for i in n.inputs) and n.op not in ("Add", "Multiply"):
            raise ModelError(f"{n.id}: {n.op} needs an encrypted operand")
        shapes[n.id] = shape
    return shapes


def _conv_shape(n: Node, x: tuple[int, ...], k: np.ndarray) -> tuple[int, int, int]:
    if len(x) != 3:
        raise ModelError(f"{n.id}: convolution input must be (C, H, W), got {x}")
    if k.ndim != 4 or k.shape[1] != x[0]:
        raise ModelError(f"{n.id}: kernel {k.shape} incompatible with {x[0]} channels")
    sh, sw = n.attr_pair("stride", 1)
    kh, kw = k.shape[2:]
    if "window" in n.attrs and n.attr_pair("window") != (kh, kw):
        raise ModelError(f"{n.id}: window attribute disagrees with kernel shape")
    if "filters" in n.attrs and int(n.attrs["filters"]) != k.shape[0]:
        raise ModelError(f"{n.id}: filters attribute disagrees with kernel shape")
    pt, pb, pl, pr = n.padding()
    h = x[1] + pt + pb - kh
    w = x[2] + pl + pr - kw
    if h < 0 or w < 0 or h % sh or w % sw:
        raise ModelError(f"{n.id}: spatial dims {x[1:]} do not admit window {(kh, kw)} at stride {(sh, sw)}")
    return (k.shape[0], h // sh + 1, w // sw + 1)


def _pool_shape(n: Node, x: tuple[int, ...]) -> tuple[int, int, int]:
    if len(x) != 3:
        raise ModelError(f"{n.id}: pooling input must be (C, H, W)")
    kh, kw = n.attr_pair("window")
    sh, sw = n.attr_pair("stride", [kh, kw])
    h, w = x[1] - kh, x[2] - kw
    if h < 0 or w < 0 or h % sh or w % sw:
        raise ModelError(f"{n.id}: spatial dims {x[1:]} do not admit pooling window")
    return (x[0], h // sh + 1, w // sw + 1)


def _parse_nodes(manifest: dict) -> list[Node]:
    raw = manifest.get("nodes")
    if not raw:
        raise ModelError("manifest has no nodes")
    nodes = []
    for entry in raw:
        op = entry.get("op")
        if op not in OPS:
            raise ModelError(f"unknown op {op!r}")
        if "id" not in entry:
            raise ModelError("node without id")
        nodes.append(
            Node(
                id=str(entry["id"]),
                op=op,
                inputs=tuple(entry.get("inputs", ())),
                attrs=dict(entry.get("attrs", {})),
                weight_ref=entry.get("weight_ref"),
                bias_ref=entry.get("bias_ref"),
            )
        )
    return nodes


def _parse_weights(manifest: dict, blob: bytes) -> dict[str, np.ndarray]:
    entries = manifest.get("weights", {})
    weights = {}
    used = 0
    for name, spec in entries.items():
        shape = tuple(int(d) for d in spec["shape"])
        offset = int(spec["offset"])
        nbytes = 4 * prod(shape)
        if offset < 0 or offset + nbytes > len(blob):
            raise ModelError(f"weight {name!r} runs past the end of the blob")
        weights[name] = np.frombuffer(blob, dtype="<f4", count=prod(shape), offset=offset).reshape(shape).copy()
        used += nbytes
    if used != len(blob):
        raise ModelError(f"blob holds {len(blob)} bytes but manifest declares {used}")
    return weights


def load_model(manifest: dict | str | bytes, weight_blob: bytes) -> PlainModel:
    """Parse and validate a manifest plus its little-endian float32 weight blob."""
    if isinstance(manifest, (str, bytes)):
        try:
            manifest = json.loads(manifest)
        except json.JSONDecodeError as exc:
            raise ModelError(f"manifest is not valid JSON: {exc}") from exc
    nodes = topological_order(_parse_nodes(manifest))
    weights = _parse_weights(manifest, weight_blob)
    return build_model(nodes, weights, manifest.get("name", "model"), manifest.get("packing", "real"), manifest.get("preset"))


def build_model(nodes, weights, name="model", packing="real", preset=None) -> PlainModel:
    nodes = topological_order(list(nodes))
    if sum(n.op == "Input" for n in nodes) != 1:
        raise ModelError("exactly one Input node required")
    if sum(n.op == "Output" for n in nodes) != 1:
        raise ModelError("exactly one Output node required")
    weights = {k: np.asarray(v, dtype=np.float32) for k, v in weights.items()}
    shapes = infer_shapes(nodes, weights)
    model = PlainModel(name, nodes, weights, shapes, packing, preset)
    model.check_packing(packing)
    return model


def load_model_files(manifest_path, blob_path) -> PlainModel:
    with open(manifest_path, "rb") as fh:
        manifest = fh.read()
    with open(blob_path, "rb") as fh:
        blob = fh.read()
    return load_model(manifest, blob)


def save_model_files(model: PlainModel, manifest_path, blob_path) -> None:
    manifest, blob = model.to_manifest()
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=1)
    with open(blob_path, "wb") as fh:
        fh.write(blob)
