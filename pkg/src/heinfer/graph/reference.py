"""Cleartext forward pass, the oracle for encrypted execution."""

from __future__ import annotations

import numpy as np

from .model import PlainModel
from .nonlinear import apply_cleartext
from .plan import conv_taps


def forward(model: PlainModel, batch: np.ndarray) -> np.ndarray:
    """Evaluate ``model`` on a (samples, *input_shape) batch in float64."""
    batch = np.asarray(batch, dtype=np.float64)
    S = batch.shape[0]
    vals: dict[str, np.ndarray] = {}
    for n in model.nodes:
        if n.op == "Constant":
            continue
        ins = [vals[i] for i in n.inputs if i in vals]
        shape = model.shapes[n.id]
        if n.op == "Input":
            out = batch.reshape(S, -1)
        elif n.op in ("Output", "Reshape"):
            out = ins[0]
        elif n.op in ("Add", "Multiply"):
            if len(ins) == 1:
                cid = next(i for i in n.inputs if i not in vals)
                c = model.weights[model.by_id[cid].weight_ref].astype(np.float64).reshape(1, -1)
                out = ins[0] + c if n.op == "Add" else ins[0] * c
            else:
                out = ins[0] + ins[1] if n.op == "Add" else ins[0] * ins[1]
        elif n.op == "Square":
            out = ins[0] * ins[0]
        elif n.op == "Dot":
            out = ins[0] @ model.weights[n.weight_ref].astype(np.float64)
            if n.bias_ref is not None:
                out = out + model.weights[n.bias_ref].astype(np.float64)
        elif n.op == "Convolution":
            kernel = model.weights[n.weight_ref].astype(np.float64)
            idx, w = conv_taps(n, model.shapes[n.inputs[0]], kernel)
            padded = np.concatenate([ins[0], np.zeros((S, 1))], axis=1)  # index -1 reads zero
            out = np.einsum("smt,mt->sm", padded[:, idx], w)
            if n.bias_ref is not None:
                b = model.weights[n.bias_ref].astype(np.float64)
                out = out + np.repeat(b, out.shape[1] // b.size)[None]
        elif n.op in ("Relu", "MaxPool"):
            res, _ = apply_cleartext(n.op, ins[0].T, model.shapes[n.inputs[0]], n.attrs)
            out = res.T
        else:  # pragma: no cover - load_model rejects unknown ops
            raise ValueError(n.op)
        vals[n.id] = out.reshape(S, -1)
        assert vals[n.id].shape[1] == int(np.prod(shape))
    return vals[model.output_node.id].reshape((S,) + model.output_shape)
