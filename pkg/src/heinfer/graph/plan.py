"""Rescale placement: the lazy planner and the naive baseline.

The planner walks the graph in execution order, tracking each ciphertext
node's level and scale exactly as the executor will compute them.  It decides
where rescales happen and which scale every plaintext weight is encoded at.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..ckks import EncryptionParameters
from .model import MULTIPLY_OPS, REFRESH_OPS, ModelError, Node, PlainModel

# bits of room kept between |message| * scale and q/2
HEADROOM_BITS = 8
SCALE_RTOL = 2.0**-40


class Decision(enum.Enum):
    RESCALE_AFTER = "rescale"
    SKIP = "skip"
    NONE = "none"


class InfeasibleDepthError(ModelError):
    """The graph needs more multiplicative depth than the modulus chain offers."""


@dataclass
class NodePlan:
    decision: Decision = Decision.NONE
    level_in: int = 0
    level: int = 0
    scale: float = 0.0
    weight_scale: float | None = None
    bias_scale: float | None = None
    rescale_ops: int = 0
    cumulative: int = 0
    cipher: bool = True


@dataclass
class RescalePlan:
    mode: str
    max_level: int
    nodes: dict[str, NodePlan] = field(default_factory=dict)
    feasible: bool = True
    problems: list[str] = field(default_factory=list)

    @property
    def total_rescales(self) -> int:
        return sum(p.rescale_ops for p in self.nodes.values())

    def decision(self, node_id: str) -> Decision:
        return self.nodes[node_id].decision

    def summary(self) -> list[tuple[str, str, int, int, int]]:
        return [(k, v.decision.value, v.level, v.rescale_ops, v.cumulative) for k, v in self.nodes.items()]


def conv_taps(node: Node, in_shape: tuple[int, ...], kernel: np.ndarray):
    """Index and weight tables for a convolution.

    Returns ``idx`` of shape (F*Ho*Wo, C*kh*kw) holding flat input indices
    (-1 for taps that land in the padding) and the matching weight table.
    """
    C, H, W = in_shape
    F, _, kh, kw = kernel.shape
    sh, sw = node.attr_pair("stride", 1)
    pt, pb, pl, pr = node.padding()
    Ho = (H + pt + pb - kh) // sh + 1
    Wo = (W + pl + pr - kw) // sw + 1
    oy = np.arange(Ho)[:, None] * sh - pt + np.arange(kh)[None, :]  # (Ho, kh)
    ox = np.arange(Wo)[:, None] * sw - pl + np.arange(kw)[None, :]  # (Wo, kw)
    vy = (oy >= 0) & (oy < H)
    vx = (ox >= 0) & (ox < W)
    c = np.arange(C)
    # flat index c*H*W + y*W + x over (Ho, Wo, C, kh, kw)
    flat = (
        c[None, None, :, None, None] * H * W
        + oy[:, None, None, :, None] * W
        + ox[None, :, None, None, :]
    )
    valid = vy[:, None, None, :, None] & vx[None, :, None, None, :]
    flat = np.where(valid, flat, -1).reshape(Ho * Wo, C * kh * kw)
    idx = np.broadcast_to(flat[None], (F, Ho * Wo, C * kh * kw)).reshape(F * Ho * Wo, -1)
    w = np.broadcast_to(kernel.reshape(F, 1, C * kh * kw), (F, Ho * Wo, C * kh * kw)).reshape(F * Ho * Wo, -1)
    return np.ascontiguousarray(idx, dtype=np.int64), np.ascontiguousarray(w)


def product_count(model: PlainModel, node: Node) -> int:
    """Ciphertext-plaintext products a Dot or Convolution performs."""
    w = model.weights[node.weight_ref]
    if node.op == "Dot":
        return int(w.shape[0] * w.shape[1])
    idx, _ = conv_taps(node, model.shapes[node.inputs[0]], w)
    return int((idx >= 0).sum())


def _element_count(shape) -> int:
    return int(np.prod(shape)) if shape else 1


def downstream_multiply(model: PlainModel) -> dict[str, bool]:
    """For each node, whether a multiply lies ahead before a refresh or the output."""
    users = model.consumers()
    memo: dict[str, bool] = {}

    def visit(nid: str) -> bool:
        if nid in memo:
            return memo[nid]
        found = False
        for u in users[nid]:
            op = model.by_id[u].op
            if op in MULTIPLY_OPS:
                found = True
            elif op in REFRESH_OPS or op == "Output":
                continue
            elif visit(u):
                found = True
        memo[nid] = found
        return found

    for n in reversed(model.nodes):
        visit(n.id)
    return memo


def plan_rescaling(
    model: PlainModel,
    params: EncryptionParameters,
    mode: str = "lazy",
    strict: bool = True,
    input_scale: float | None = None,
) -> RescalePlan:
    """Place rescales.

    ``lazy`` rescales a multiply-bearing node once, after its accumulation,
    and only when another multiply follows before a refresh or the output.
    ``naive`` rescales after every single product.  With ``strict`` an
    infeasible plan raises; otherwise it is returned flagged.
    """
    if mode not in ("lazy", "naive"):
        raise ValueError(f"unknown rescaling mode {mode!r}")
    L = params.max_level
    plan = RescalePlan(mode, L)
    ahead = downstream_multiply(model)
    running = 0
    fresh_scale = params.default_scale if input_scale is None else float(input_scale)

    def fail(msg: str):
        plan.feasible = False
        plan.problems.append(msg)
        if strict:
            raise InfeasibleDepthError(msg)

    def headroom_ok(level: int, scale: float) -> bool:
        return level >= 1 and math.log2(scale) + HEADROOM_BITS < math.log2(params.basis.product(level))

    def skip_weight_scale(level: int, scale: float) -> float:
        room = math.log2(params.basis.product(level)) - math.log2(scale) - HEADROOM_BITS
        return min(params.default_scale, 2.0 ** math.floor(room))

    for n in model.nodes:
        np_ = NodePlan()
        plan.nodes[n.id] = np_
        if n.op == "Constant":
            np_.cipher = False
            np_.cumulative = running
            continue
        cins = [plan.nodes[i] for i in n.inputs if plan.nodes[i].cipher]
        if n.op == "Input":
            np_.level_in = np_.level = L
            np_.scale = fresh_scale
        elif n.op in REFRESH_OPS:
            np_.level_in = cins[0].level
            np_.level = L
            np_.scale = params.default_scale
        elif n.op in ("Reshape", "Output"):
            np_.level_in = np_.level = cins[0].level
            np_.scale = cins[0].scale
        elif n.op == "Add":
            lvl = min(c.level for c in cins)
            if len(cins) == 2 and abs(cins[0].scale - cins[1].scale) > SCALE_RTOL * cins[0].scale:
                fail(f"{n.id}: adding ciphertexts at scales {cins[0].scale:.6g} and {cins[1].scale:.6g}")
            np_.level_in = np_.level = lvl
            np_.scale = cins[0].scale
            if len(cins) == 1:
                np_.bias_scale = np_.scale
        else:
            _plan_multiply(model, params, plan, n, np_, cins, ahead[n.id], fail, headroom_ok, skip_weight_scale)
        running += np_.rescale_ops
        np_.cumulative = running
    return plan


def _plan_multiply(model, params, plan, n, np_, cins, needed_later, fail, headroom_ok, skip_weight_scale):
    x = cins[0]
    lvl = min(c.level for c in cins)
    np_.level_in = lvl
    cipher_product = n.op == "Square" or (n.op == "Multiply" and len(cins) == 2)
    rescale = plan.mode == "naive" or needed_later
    if cipher_product:
        # operands at different levels meet at the lower one
        s_other = x.scale if n.op == "Square" else cins[1].scale
        raised = x.scale * s_other
    else:
        if rescale:
            if lvl < 2:
                fail(f"{n.id}: needs a rescale at level {lvl}")
                w_scale = float(params.top_prime(max(lvl, 1)))
            else:
                w_scale = float(params.top_prime(lvl))
        elif lvl < 1:
            fail(f"{n.id}: multiply below level 1")
            w_scale = params.default_scale
        else:
            w_scale = skip_weight_scale(lvl, x.scale)
            if w_scale < 1:
                fail(f"{n.id}: no scale headroom at level {lvl}")
        np_.weight_scale = w_scale
        raised = x.scale * w_scale
    if not headroom_ok(lvl, raised):
        fail(f"{n.id}: scale 2^{math.log2(raised):.1f} overflows level {lvl}")
    elements = _element_count(model.shapes[n.id])
    if rescale:
        if lvl < 2:
            fail(f"{n.id}: cannot rescale below level 1")
        np_.decision = Decision.RESCALE_AFTER
        np_.level = lvl - 1
        np_.scale = raised / params.top_prime(max(lvl, 1))
        if plan.mode == "naive" and n.op in ("Dot", "Convolution"):
            np_.rescale_ops = product_count(model, n)
            np_.bias_scale = np_.scale
        else:
            np_.rescale_ops = elements
            np_.bias_scale = raised
    else:
        np_.decision = Decision.SKIP
        np_.level = lvl
        np_.scale = raised
        np_.bias_scale = raised
