"""Runs a planned model over a CipherTensor.

Lazy and naive execution share every kernel; they differ only in where the
plan puts rescales.  Dot and Convolution are split across worker threads by
output element; each worker fills a disjoint slice of the output block.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..ckks import (
    EncryptionParameters,
    LevelMismatchError,
    Packing,
    RelinKey,
    ScaleMismatchError,
    relinearize_block,
    rescale_block,
)
from ..ckks.encoding import imaginary_unit
from ..ckks.evaluator import SCALE_RTOL
from ..modmath import limb_tables
from ..modmath import kernels as K
from .encoder import JitWeightEncoder
from .model import ModelError, Node, PlainModel
from .plan import Decision, RescalePlan, conv_taps
from .tensor import CipherTensor


class ExecutionError(RuntimeError):
    pass


@dataclass
class ExecutionResult:
    output: CipherTensor
    rescales: dict[str, int] = field(default_factory=dict)
    seconds: dict[str, float] = field(default_factory=dict)

    @property
    def total_rescales(self) -> int:
        return sum(self.rescales.values())


def _const_operand(model: PlainModel, node: Node):
    consts = [i for i in node.inputs if model.by_id[i].op == "Constant"]
    if not consts:
        return None
    return model.weights[model.by_id[consts[0]].weight_ref]


def _broadcast_const(values: np.ndarray, shape) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 1:
        return np.full(int(np.prod(shape)) if shape else 1, float(v.ravel()[0]))
    return v.reshape(-1)


def weight_requests(model: PlainModel, plan: RescalePlan):
    """Every (node, role, values, level, scale) the executor will encode."""
    for n in model.nodes:
        p = plan.nodes[n.id]
        if n.op in ("Dot", "Convolution"):
            yield n.id, "weight", model.weights[n.weight_ref], p.level_in, p.weight_scale
            if n.bias_ref is not None:
                lvl = p.level if plan.mode == "naive" else p.level_in
                yield n.id, "bias", model.weights[n.bias_ref], lvl, p.bias_scale
        elif n.op in ("Multiply", "Add"):
            c = _const_operand(model, n)
            if c is None:
                continue
            vals = _broadcast_const(c, model.shapes[n.id])
            if n.op == "Multiply":
                yield n.id, "weight", vals, p.level_in, p.weight_scale
            else:
                yield n.id, "bias", vals, p.level, p.bias_scale


class Executor:
    def __init__(
        self,
        params: EncryptionParameters,
        relin_key: RelinKey | None = None,
        threads: int = 1,
        encoder=None,
    ):
        self.params = params
        self.relin_key = relin_key
        self.threads = max(1, int(threads))
        self.encoder = encoder if encoder is not None else JitWeightEncoder()

    # ------------------------------------------------------------ driver

    def run(self, model: PlainModel, x: CipherTensor, plan: RescalePlan, provider=None) -> ExecutionResult:
        if not plan.feasible:
            raise ExecutionError("refusing to run an infeasible plan: " + "; ".join(plan.problems))
        if x.shape != model.input_shape:
            raise ModelError(f"input shape {x.shape} does not match model {model.input_shape}")
        if x.level != self.params.max_level:
            raise LevelMismatchError("model input must be at the top level")
        model.check_packing("complex" if x.packing.value else "real")
        values: dict[str, CipherTensor] = {}
        result = ExecutionResult(x)
        pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        try:
            for n in model.nodes:
                if n.op == "Constant":
                    continue
                t0 = time.perf_counter()
                count = [0]
                out = self._node(model, n, plan, values, x, provider, count, pool)
                result.seconds[n.id] = time.perf_counter() - t0
                result.rescales[n.id] = count[0]
                expected = plan.nodes[n.id]
                if out.level != expected.level or abs(out.scale - expected.scale) > SCALE_RTOL * expected.scale:
                    raise ExecutionError(
                        f"{n.id}: produced level {out.level} scale {out.scale!r}, plan says "
                        f"level {expected.level} scale {expected.scale!r}"
                    )
                values[n.id] = out
        finally:
            if pool is not None:
                pool.shutdown()
        result.output = values[model.output_node.id]
        return result

    def _node(self, model, n: Node, plan, values, x, provider, count, pool) -> CipherTensor:
        p = plan.nodes[n.id]
        cin = [values[i] for i in n.inputs if i in values]
        if n.op == "Input":
            return x
        if n.op == "Output":
            return cin[0]
        if n.op == "Reshape":
            return cin[0].reshape(model.shapes[n.id])
        if n.op in ("Relu", "MaxPool"):
            if provider is None:
                raise ExecutionError(f"{n.id}: {n.op} needs a nonlinearity provider")
            out = provider.evaluate(n.op, n.id, cin[0], dict(n.attrs))
            want = model.shapes[n.id]
            if tuple(out.shape) != want or out.level != self.params.max_level:
                raise ExecutionError(f"{n.id}: provider returned shape {out.shape} at level {out.level}")
            return out
        if n.op == "Add":
            return self._add(model, n, p, cin)
        if n.op in ("Dot", "Convolution"):
            return self._linear(model, n, p, plan.mode, cin[0], count, pool)
        if n.op == "Multiply" and len(cin) == 1:
            return self._mul_const(model, n, p, cin[0], count)
        return self._mul_cipher(n, p, cin, count, pool)

    # ------------------------------------------------------------ pieces

    def _table(self, node_id, role, values, level, scale):
        return self.encoder.table(node_id, role, values, self.params.moduli(level), scale)

    def _add(self, model, n, p, cin) -> CipherTensor:
        if len(cin) == 1:
            x = cin[0]
            b = self._table(n.id, "bias", _broadcast_const(_const_operand(model, n), model.shapes[n.id]), x.level, p.bias_scale)
            _check_scale(n, x.scale, p.bias_scale)
            return x.replace(data=_add_constants(x, b))
        a, b = _align(cin)
        _check_scale(n, a.scale, b.scale)
        if a.packing is not b.packing:
            raise ExecutionError(f"{n.id}: mixed packings")
        if a.data.shape[1] != b.data.shape[1]:
            raise ExecutionError(f"{n.id}: relinearize before adding")
        qs = limb_tables(a.moduli, a.degree).qs
        e, P, lv, N = a.data.shape
        out = K.add_blocks(a.data.reshape(e * P, lv, N), b.data.reshape(e * P, lv, N), qs)
        return a.replace(data=out.reshape(a.data.shape))

    def _mul_const(self, model, n, p, x, count) -> CipherTensor:
        w = self._table(n.id, "weight", _broadcast_const(_const_operand(model, n), model.shapes[n.id]), x.level, p.weight_scale)
        t = limb_tables(x.moduli, x.degree)
        data = K.mul_scalar_rows(x.data, w, t.qs, t.r0s, t.r1s, t.r64s)
        out = x.replace(data=data, scale=x.scale * p.weight_scale)
        return self._maybe_rescale(out, p, count)

    def _mul_cipher(self, n, p, cin, count, pool) -> CipherTensor:
        a, b = (cin[0], cin[0]) if n.op == "Square" else _align(cin)
        if a.packing.value or b.packing.value:
            raise ExecutionError(f"{n.id}: cipher-cipher multiply under complex packing")
        t = limb_tables(a.moduli, a.degree)

        def work(lo, hi):
            out = np.empty((hi - lo, 3) + a.data.shape[2:], dtype=np.uint64)
            for e in range(lo, hi):
                if n.op == "Square":
                    out[e - lo] = K.tensor_square(a.data[e], t.qs, t.r0s, t.r1s, t.r64s)
                else:
                    out[e - lo] = K.tensor_product(a.data[e], b.data[e], t.qs, t.r0s, t.r1s, t.r64s)
            return relinearize_block(out, a.moduli, self.relin_key)

        data = self._chunked(work, a.size, pool)
        out = a.replace(data=data, scale=a.scale * b.scale)
        return self._maybe_rescale(out, p, count)

    def _linear(self, model, n, p, mode, x, count, pool) -> CipherTensor:
        kernel = model.weights[n.weight_ref]
        lvl = x.level
        if n.op == "Dot":
            k, m = kernel.shape
            idx = np.broadcast_to(np.arange(k, dtype=np.int64), (m, k)).copy()
            wt = self._table(n.id, "weight", kernel, lvl, p.weight_scale)  # (k, m, L)
            wres = np.ascontiguousarray(wt.transpose(1, 0, 2))
        else:
            idx, _ = conv_taps(n, x.shape, kernel)
            wt = self._table(n.id, "weight", kernel, lvl, p.weight_scale)  # (F, C, kh, kw, L)
            F = kernel.shape[0]
            per = idx.shape[0] // F
            wres = np.repeat(wt.reshape(F, 1, -1, lvl), per, axis=1).reshape(idx.shape[0], idx.shape[1], lvl)
        xs = x.data
        if xs.shape[1] != 2:
            raise ExecutionError(f"{n.id}: input must be relinearized")
        t = limb_tables(x.moduli, x.degree)
        raised = x.scale * p.weight_scale
        M = idx.shape[0]

        if mode == "naive":
            target = lvl - 1

            def work(lo, hi):
                out = np.empty((hi - lo, 2, target, x.degree), dtype=np.uint64)
                for m in range(lo, hi):
                    keep = idx[m] >= 0
                    prods = K.gather_mul(xs, idx[m][keep], wres[m][keep], t.qs, t.r0s, t.r1s, t.r64s)
                    down, moduli, _ = rescale_block(prods, x.moduli, target, raised)
                    out[m - lo] = K.sum_blocks(down, limb_tables(moduli, x.degree).qs)
                return out

            data = self._chunked(work, M, pool)
            count[0] += int((idx >= 0).sum())
            moduli = x.moduli[:target]
            scale = raised / x.moduli[-1]
            out = x.replace(data=data, shape=model.shapes[n.id], moduli=moduli, scale=scale)
            return self._add_bias(model, n, p, out)

        def work(lo, hi):
            return K.gather_mac(xs, idx[lo:hi], wres[lo:hi], t.qs, t.r0s, t.r1s, t.r64s)

        data = self._chunked(work, M, pool)
        out = x.replace(data=data, shape=model.shapes[n.id], scale=raised)
        out = self._add_bias(model, n, p, out)
        return self._maybe_rescale(out, p, count, pool)

    def _add_bias(self, model, n, p, out: CipherTensor) -> CipherTensor:
        if n.bias_ref is None:
            return out
        _check_scale(n, out.scale, p.bias_scale)
        b = self._table(n.id, "bias", model.weights[n.bias_ref], out.level, p.bias_scale)
        F = b.shape[0]
        rows = np.repeat(b, out.size // F, axis=0)
        return out.replace(data=_add_constants(out, rows))

    def _maybe_rescale(self, out: CipherTensor, p, count, pool=None) -> CipherTensor:
        if p.decision is not Decision.RESCALE_AFTER:
            return out
        target = out.level - 1

        def work(lo, hi):
            return rescale_block(out.data[lo:hi], out.moduli, target, out.scale)[0]

        data = self._chunked(work, out.size, pool)
        count[0] += out.size
        return out.replace(data=data, moduli=out.moduli[:target], scale=out.scale / out.moduli[-1])

    def _chunked(self, work, total: int, pool):
        if pool is None or total < 2:
            return work(0, total)
        parts = min(total, self.threads * 4)
        bounds = np.linspace(0, total, parts + 1).astype(int)
        futures = [pool.submit(work, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        return np.concatenate([f.result() for f in futures])


def _add_constants(x: CipherTensor, rows: np.ndarray) -> np.ndarray:
    """Add per-element scalar residues; complex packing adds ``c + ci``."""
    t = limb_tables(x.moduli, x.degree)
    if x.packing is Packing.COMPLEX:
        unit = imaginary_unit(x.moduli, x.degree)
        return K.add_scalar_rows_complex(x.data, rows, unit, t.qs, t.r0s, t.r1s, t.r64s)
    return K.add_scalar_rows(x.data, rows, t.qs)


def _check_scale(n: Node, a: float, b: float) -> None:
    if abs(a - b) > SCALE_RTOL * max(a, b):
        raise ScaleMismatchError(f"{n.id}: scales {a!r} and {b!r} differ")


def _align(cin):
    a, b = cin
    lvl = min(a.level, b.level)

    def drop(t: CipherTensor) -> CipherTensor:
        if t.level == lvl:
            return t
        return t.replace(data=np.ascontiguousarray(t.data[:, :, :lvl]), moduli=t.moduli[:lvl])

    return drop(a), drop(b)


def execute(
    model: PlainModel,
    x: CipherTensor,
    plan: RescalePlan,
    params: EncryptionParameters,
    provider=None,
    relin_key=None,
    threads: int = 1,
    encoder=None,
) -> ExecutionResult:
    return Executor(params, relin_key, threads, encoder).run(model, x, plan, provider)
